#include "dte/control_posterior.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dte/random.hpp"

namespace dte {

SurvivalDataset::SurvivalDataset(std::vector<SurvivalRecord> records) : records_(std::move(records)) {
    for (const auto& r : records_)
        if (!(r.time > 0.0) || !std::isfinite(r.time))
            throw std::invalid_argument("survival times must be positive and finite");
}

std::size_t SurvivalDataset::events() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [](const auto& r) { return r.event; }));
}

SurvivalDataset SurvivalDataset::arm(Arm a) const {
    std::vector<SurvivalRecord> out;
    for (const auto& r : records_)
        if (r.arm == a) out.push_back(r);
    return SurvivalDataset(std::move(out));
}

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, std::size_t line, const char* what) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || s.empty())
        throw CsvError(line, std::string("cannot parse ") + what + " '" + s + "'");
    return v;
}

}  // namespace

SurvivalDataset read_ipd_csv(std::istream& in, const std::string& default_source) {
    std::string line;
    std::size_t line_no = 0;
    int col_time = -1, col_event = -1, col_source = -1, col_arm = -1;
    std::size_t n_cols = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cols = split_row(line);
        for (std::size_t i = 0; i < cols.size(); ++i) {
            const int idx = static_cast<int>(i);
            if (cols[i] == "time") col_time = idx;
            else if (cols[i] == "event") col_event = idx;
            else if (cols[i] == "source") col_source = idx;
            else if (cols[i] == "arm") col_arm = idx;
            else throw CsvError(line_no, "unknown column '" + cols[i] + "'");
        }
        n_cols = cols.size();
        break;
    }
    if (n_cols == 0) throw CsvError(line_no, "empty CSV: missing header");
    if (col_time < 0 || col_event < 0) throw CsvError(line_no, "header must contain time and event");

    std::vector<SurvivalRecord> records;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cols = split_row(line);
        if (cols.size() != n_cols)
            throw CsvError(line_no, "expected " + std::to_string(n_cols) + " fields, found " +
                                        std::to_string(cols.size()));
        SurvivalRecord r;
        r.time = parse_double(cols[static_cast<std::size_t>(col_time)], line_no, "time");
        if (!(r.time > 0.0) || !std::isfinite(r.time)) throw CsvError(line_no, "time must be > 0");
        const auto& ev = cols[static_cast<std::size_t>(col_event)];
        if (ev == "1") r.event = true;
        else if (ev == "0") r.event = false;
        else throw CsvError(line_no, "event must be 0 or 1, got '" + ev + "'");
        r.source = col_source >= 0 ? cols[static_cast<std::size_t>(col_source)] : default_source;
        if (col_arm >= 0) {
            const auto& a = cols[static_cast<std::size_t>(col_arm)];
            if (a == "control") r.arm = Arm::control;
            else if (a == "experimental") r.arm = Arm::experimental;
            else throw CsvError(line_no, "arm must be control or experimental, got '" + a + "'");
        }
        records.push_back(std::move(r));
    }
    if (records.empty()) throw CsvError(line_no, "no data rows");
    return SurvivalDataset(std::move(records));
}

SurvivalDataset read_ipd_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return read_ipd_csv(in, path);
    } catch (const CsvError& e) {
        throw CsvError(path, e.line(), e.detail());
    }
}

void write_ipd_csv(std::ostream& out, const SurvivalDataset& data) {
    bool arms = !data.records().empty();
    for (const auto& r : data.records()) arms = arms && r.arm.has_value();
    out << "time,event,source" << (arms ? ",arm" : "") << '\n';
    const auto old = out.precision(17);
    for (const auto& r : data.records()) {
        if (!(r.time > 0.0)) continue;
        out << r.time << ',' << (r.event ? 1 : 0) << ',' << r.source;
        if (arms) out << ',' << (*r.arm == Arm::control ? "control" : "experimental");
        out << '\n';
    }
    out.precision(old);
}

SurvivalDataset pool(const std::vector<SurvivalDataset>& datasets) {
    if (datasets.empty()) throw std::invalid_argument("pool requires at least one dataset");
    std::vector<SurvivalRecord> all;
    for (const auto& d : datasets) all.insert(all.end(), d.records().begin(), d.records().end());
    return SurvivalDataset(std::move(all));
}

double weibull_loglik(const WeibullParams& p, const SurvivalDataset& d) {
    const double lam = p.rate(), g = p.shape();
    const double log_lam = std::log(lam), log_g = std::log(g);
    double ll = 0.0;
    for (const auto& r : d.records()) {
        const double log_t = std::log(r.time);
        if (r.event) ll += log_g + g * log_lam + (g - 1.0) * log_t;
        ll -= std::exp(g * (log_lam + log_t));
    }
    return ll;
}

namespace {

struct LoglikDerivs {
    double value;
    std::array<double, 2> grad;   // d/d(log rate), d/d(log shape)
    std::array<double, 3> hess;   // aa, ab, bb
};

LoglikDerivs loglik_derivs(const WeibullParams& p, const SurvivalDataset& d) {
    const double g = p.shape(), log_lam = std::log(p.rate());
    double n_events = 0.0, sum_ev_log = 0.0, sum_z = 0.0, sum_zl = 0.0, sum_zll = 0.0, ll = 0.0;
    for (const auto& r : d.records()) {
        const double l = log_lam + std::log(r.time);   // log(rate * t)
        const double z = std::exp(g * l);
        if (r.event) {
            n_events += 1.0;
            sum_ev_log += l;
            ll += std::log(g) + g * l - l + log_lam;
        }
        ll -= z;
        sum_z += z;
        sum_zl += z * l;
        sum_zll += z * l * l;
    }
    LoglikDerivs out;
    out.value = ll;
    out.grad = {n_events * g - g * sum_z, n_events + g * sum_ev_log - g * sum_zl};
    out.hess = {-g * g * sum_z, n_events * g - g * sum_z - g * g * sum_zl,
                g * sum_ev_log - g * sum_zl - g * g * sum_zll};
    return out;
}

}  // namespace

std::array<double, 2> weibull_loglik_gradient(const WeibullParams& p, const SurvivalDataset& d) {
    return loglik_derivs(p, d).grad;
}

WeibullFit weibull_mle(const SurvivalDataset& d) {
    const double n_events = static_cast<double>(d.events());
    if (n_events < 1.0) throw std::invalid_argument("Weibull MLE needs at least one event");

    std::vector<double> log_t;
    log_t.reserve(d.size());
    double sum_ev_log = 0.0;
    for (const auto& r : d.records()) {
        log_t.push_back(std::log(r.time));
        if (r.event) sum_ev_log += log_t.back();
    }
    const double shift = *std::max_element(log_t.begin(), log_t.end());

    // Profile score in the shape; decreasing, so a sign change brackets the root.
    auto profile_score = [&](double g) {
        double sw = 0.0, swl = 0.0;
        for (double l : log_t) {
            const double w = std::exp(g * (l - shift));
            sw += w;
            swl += w * l;
        }
        return n_events / g + sum_ev_log - n_events * swl / sw;
    };
    auto profile_rate = [&](double g) {
        double sw = 0.0;
        for (double l : log_t) sw += std::exp(g * (l - shift));
        // rate^g = n_events / sum t^g
        return std::exp((std::log(n_events) - std::log(sw)) / g - shift);
    };

    double lo = 1.0, hi = 1.0;
    bool converged = true;
    if (profile_score(1.0) > 0.0) {
        while (profile_score(hi) > 0.0) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e4) {
                converged = false;
                break;
            }
        }
    } else {
        while (profile_score(lo) <= 0.0) {
            hi = lo;
            lo *= 0.5;
            if (lo < 1e-4) {
                converged = false;
                break;
            }
        }
    }
    double shape = converged ? 0.0 : (hi > 1e4 ? lo : hi);
    if (converged) {
        std::uintmax_t max_iter = 200;
        auto r = boost::math::tools::toms748_solve(
            [&](double g) { return profile_score(g); }, lo, hi,
            boost::math::tools::eps_tolerance<double>(50), max_iter);
        shape = 0.5 * (r.first + r.second);
        converged = max_iter < 200;
    }
    WeibullParams p(profile_rate(shape), shape);
    const auto der = loglik_derivs(p, d);
    const double a = -der.hess[0], b = -der.hess[1], c = -der.hess[2];
    const double det = a * c - b * b;
    std::array<double, 2> se{std::numeric_limits<double>::quiet_NaN(),
                             std::numeric_limits<double>::quiet_NaN()};
    if (det > 0.0) se = {std::sqrt(c / det), std::sqrt(a / det)};
    return {p, der.value, se, converged};
}

std::array<double, 2> PosteriorSample::mean() const {
    std::array<double, 2> m{0.0, 0.0};
    for (const auto& w : draws) {
        m[0] += w.rate();
        m[1] += w.shape();
    }
    const double n = static_cast<double>(draws.size());
    return {m[0] / n, m[1] / n};
}

std::array<double, 2> PosteriorSample::sd() const {
    const auto m = mean();
    std::array<double, 2> s{0.0, 0.0};
    for (const auto& w : draws) {
        s[0] += (w.rate() - m[0]) * (w.rate() - m[0]);
        s[1] += (w.shape() - m[1]) * (w.shape() - m[1]);
    }
    const double n = static_cast<double>(draws.size());
    return {std::sqrt(s[0] / (n - 1.0)), std::sqrt(s[1] / (n - 1.0))};
}

double effective_sample_size(const std::vector<double>& chain) {
    const std::size_t n = chain.size();
    if (n < 4) return static_cast<double>(n);
    const double mean = std::accumulate(chain.begin(), chain.end(), 0.0) / static_cast<double>(n);
    auto autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) s += (chain[i] - mean) * (chain[i + lag] - mean);
        return s / static_cast<double>(n);
    };
    const double c0 = autocov(0);
    if (c0 <= 0.0) return static_cast<double>(n);
    // Sum of autocorrelations over consecutive pairs while the pair sums stay positive.
    double sum_pairs = 0.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);   // initial monotone sequence
        sum_pairs += pair;
        prev_pair = pair;
    }
    const double tau = 2.0 * sum_pairs - 1.0;
    return static_cast<double>(n) / std::max(tau, 1e-12);
}

PosteriorSample mcmc_weibull_posterior(const SurvivalDataset& d, const McmcConfig& cfg) {
    if (d.events() < 1) throw std::invalid_argument("posterior needs at least one event");
    if (cfg.iterations <= cfg.burn_in || cfg.burn_in < 0 || cfg.thin < 1)
        throw std::invalid_argument("need iterations > burn_in >= 0 and thin >= 1");

    RandomStream rng(cfg.seed);
    const WeibullFit mle = weibull_mle(d);

    // Proposal: scaled Cholesky factor of the Laplace covariance at the MLE,
    // or fixed diagonal scales when supplied.
    std::array<double, 3> chol{0.1, 0.0, 0.1};   // l11, l21, l22
    if (cfg.proposal_scale) {
        chol = {(*cfg.proposal_scale)[0], 0.0, (*cfg.proposal_scale)[1]};
    } else {
        const auto der = loglik_derivs(mle.params, d);
        const double a = -der.hess[0], b = -der.hess[1], c = -der.hess[2];
        const double det = a * c - b * b;
        if (det > 0.0 && a > 0.0) {
            const double s11 = c / det, s21 = -b / det, s22 = a / det;
            const double l11 = std::sqrt(s11);
            const double l21 = s21 / l11;
            const double l22 = std::sqrt(std::max(s22 - l21 * l21, 1e-300));
            chol = {l11, l21, l22};
        }
    }

    std::array<double, 2> x{std::log(mle.params.rate()), std::log(mle.params.shape())};
    auto log_target = [&](const std::array<double, 2>& v) {
        return weibull_loglik(WeibullParams(std::exp(v[0]), std::exp(v[1])), d);
    };
    double lp = log_target(x);
    double step = 2.38 / std::sqrt(2.0);

    auto propose = [&](const std::array<double, 2>& from) {
        const double z1 = rng.normal(), z2 = rng.normal();
        return std::array<double, 2>{from[0] + step * chol[0] * z1,
                                     from[1] + step * (chol[1] * z1 + chol[2] * z2)};
    };
    auto metropolis = [&]() {
        const auto y = propose(x);
        const double ly = log_target(y);
        if (std::isfinite(ly) && std::log(rng.uniform()) < ly - lp) {
            x = y;
            lp = ly;
            return true;
        }
        return false;
    };

    if (!cfg.proposal_scale) {
        for (int round = 0; round < cfg.pilot_rounds; ++round) {
            int accepted = 0;
            for (int i = 0; i < cfg.pilot_length; ++i) accepted += metropolis() ? 1 : 0;
            const double rate = static_cast<double>(accepted) / cfg.pilot_length;
            step *= std::exp(rate - cfg.target_acceptance);
        }
    }

    PosteriorSample out;
    std::vector<double> rates, shapes;
    int accepted = 0;
    for (int it = 0; it < cfg.iterations; ++it) {
        const bool acc = metropolis();
        if (it < cfg.burn_in) continue;
        accepted += acc ? 1 : 0;
        if ((it - cfg.burn_in) % cfg.thin == 0) {
            out.draws.emplace_back(std::exp(x[0]), std::exp(x[1]));
            rates.push_back(out.draws.back().rate());
            shapes.push_back(out.draws.back().shape());
        }
    }
    out.acceptance_rate = static_cast<double>(accepted) / (cfg.iterations - cfg.burn_in);
    out.ess = {effective_sample_size(rates), effective_sample_size(shapes)};
    out.low_ess = out.ess[0] < cfg.ess_floor || out.ess[1] < cfg.ess_floor;
    out.acceptance_out_of_range = out.acceptance_rate < 0.1 || out.acceptance_rate > 0.6;
    return out;
}

std::vector<KaplanMeierStep> kaplan_meier(const SurvivalDataset& d) {
    std::vector<std::pair<double, bool>> obs;
    obs.reserve(d.size());
    for (const auto& r : d.records()) obs.emplace_back(r.time, r.event);
    std::sort(obs.begin(), obs.end());
    std::vector<KaplanMeierStep> out;
    double s = 1.0;
    std::size_t at_risk = obs.size();
    for (std::size_t i = 0; i < obs.size();) {
        const double t = obs[i].first;
        std::size_t deaths = 0, leaving = 0;
        while (i < obs.size() && obs[i].first == t) {
            deaths += obs[i].second ? 1 : 0;
            ++leaving;
            ++i;
        }
        if (deaths > 0) {
            s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
            out.push_back({t, s, at_risk, deaths});
        }
        at_risk -= leaving;
    }
    return out;
}

std::optional<double> kaplan_meier_median(const SurvivalDataset& d) {
    for (const auto& step : kaplan_meier(d))
        if (step.survival <= 0.5) return step.time;
    return std::nullopt;
}

}  // namespace dte
