#pragma once

#include <functional>
#include <vector>

namespace dte {

struct SimplexOptions {
    double f_tol = 1e-8;       // spread of objective values across the simplex
    double x_tol = 1e-10;      // simplex diameter
    double initial_step = 0.5;
    int max_evaluations = 20000;
};

struct SimplexResult {
    std::vector<double> x;
    double value = 0.0;
    int evaluations = 0;
    bool converged = false;
};

// Nelder-Mead downhill simplex (standard coefficients 1, 2, 0.5, 0.5).
SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> start, const SimplexOptions& opts = {});

}  // namespace dte
