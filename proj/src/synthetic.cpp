#include "hgp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "hgp/error.hpp"

namespace hgp::synth {

namespace {

double linear_rate(const ParametricHazard& ph, std::span<const double> x) {
    if (x.size() != ph.weights.size()) throw ContractError("covariate dimension does not match hazard weights");
    return ph.rate * std::exp(std::inner_product(x.begin(), x.end(), ph.weights.begin(), 0.0));
}

// (1/H) * integral_0^H exp(-r u) du
double exp_censor_fraction(double r, double horizon) {
    const double rh = r * horizon;
    return rh < 1e-8 ? 1.0 - 0.5 * rh : -std::expm1(-rh) / rh;
}

double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

} // namespace

ParametricHazard ParametricHazard::exponential(double rate, std::size_t noise_dim) {
    ParametricHazard ph;
    ph.family = Family::exponential;
    ph.rate = rate;
    ph.noise_dim = noise_dim;
    ph.validate();
    return ph;
}

ParametricHazard ParametricHazard::weibull(double shape, double scale, std::size_t noise_dim) {
    ParametricHazard ph;
    ph.family = Family::weibull;
    ph.shape = shape;
    ph.scale = scale;
    ph.noise_dim = noise_dim;
    ph.validate();
    return ph;
}

ParametricHazard ParametricHazard::linear_in_x(std::vector<double> weights, double rate) {
    ParametricHazard ph;
    ph.family = Family::linear_in_x;
    ph.weights = std::move(weights);
    ph.rate = rate;
    ph.validate();
    return ph;
}

void ParametricHazard::validate() const {
    if (!(rate > 0.0) || !(shape > 0.0) || !(scale > 0.0))
        throw ContractError("hazard rate, shape and scale must be strictly positive");
    if (family == Family::linear_in_x && weights.empty()) throw ContractError("linear_in_x needs weights");
    if (family != Family::linear_in_x && noise_dim < 1) throw ContractError("noise_dim must be >= 1");
}

double closed_form_log_survival(const ParametricHazard& ph, double t, std::span<const double> x) {
    if (t < 0.0) throw ContractError("time must be non-negative");
    switch (ph.family) {
    case ParametricHazard::Family::exponential: return -ph.rate * t;
    case ParametricHazard::Family::weibull: return -std::pow(t / ph.scale, ph.shape);
    case ParametricHazard::Family::linear_in_x: return -linear_rate(ph, x) * t;
    }
    return 0.0;
}

double closed_form_hazard(const ParametricHazard& ph, double t, std::span<const double> x) {
    if (t < 0.0) throw ContractError("time must be non-negative");
    switch (ph.family) {
    case ParametricHazard::Family::exponential: return ph.rate;
    case ParametricHazard::Family::weibull:
        return ph.shape / ph.scale * std::pow(t / ph.scale, ph.shape - 1.0);
    case ParametricHazard::Family::linear_in_x: return linear_rate(ph, x);
    }
    return 0.0;
}

double sample_event_time(const ParametricHazard& ph, std::span<const double> x, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // -log(1 - U) ~ Exp(1) is the cumulative hazard at the event time
    const double mass = -std::log1p(-unit(rng));
    switch (ph.family) {
    case ParametricHazard::Family::exponential: return mass / ph.rate;
    case ParametricHazard::Family::weibull: return ph.scale * std::pow(mass, 1.0 / ph.shape);
    case ParametricHazard::Family::linear_in_x: return mass / linear_rate(ph, x);
    }
    return 0.0;
}

double expected_censored_fraction(const ParametricHazard& ph, double horizon,
                                  std::span<const std::vector<double>> xs) {
    if (!(horizon > 0.0)) throw ContractError("censoring horizon must be positive");
    switch (ph.family) {
    case ParametricHazard::Family::exponential: return exp_censor_fraction(ph.rate, horizon);
    case ParametricHazard::Family::linear_in_x: {
        if (xs.empty()) throw ContractError("linear_in_x censoring needs covariates");
        double acc = 0.0;
        for (const auto& x : xs) acc += exp_censor_fraction(linear_rate(ph, x), horizon);
        return acc / static_cast<double>(xs.size());
    }
    case ParametricHazard::Family::weibull: {
        // composite Simpson on S(u) over [0, H]
        constexpr int panels = 2000;
        const double step = horizon / panels;
        double acc = 0.0;
        for (int k = 0; k <= panels; ++k) {
            const double w = (k == 0 || k == panels) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
            acc += w * std::exp(closed_form_log_survival(ph, step * k));
        }
        return acc * step / 3.0 / horizon;
    }
    }
    return 0.0;
}

Dataset generate(const ParametricHazard& ph, std::size_t n, double censor_rate, Rng& rng) {
    ph.validate();
    if (n == 0) throw ContractError("cannot generate an empty dataset");
    if (!(censor_rate >= 0.0 && censor_rate < 1.0)) throw ContractError("censor_rate must lie in [0, 1)");
    const auto d = ph.dim();
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> xs(n, std::vector<double>(d));
    std::vector<double> event_times(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : xs[i]) v = normal(rng);
        event_times[i] = sample_event_time(ph, xs[i], rng);
    }

    double horizon = std::numeric_limits<double>::infinity();
    if (censor_rate > 0.0) {
        // fraction censored decreases from 1 to 0 as the horizon grows
        double lo = 1e-12, hi = 1.0;
        while (expected_censored_fraction(ph, hi, xs) > censor_rate) hi *= 2.0;
        for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (expected_censored_fraction(ph, mid, xs) > censor_rate) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        horizon = 0.5 * (lo + hi);
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SurvivalRecord> records(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double censor = censor_rate > 0.0 ? horizon * unit(rng) : std::numeric_limits<double>::infinity();
        records[i].x = std::move(xs[i]);
        records[i].e = event_times[i] <= censor ? 1 : 0;
        records[i].t = std::min(event_times[i], censor);
    }
    std::vector<std::string> names;
    for (std::size_t k = 0; k < d; ++k) names.push_back("x" + std::to_string(k));
    return Dataset(std::move(records), std::move(names), "synthetic");
}

void DiscreteHazardPair::validate() const {
    if (grid.empty()) throw ContractError("discrete hazard pair needs a non-empty grid");
    if (h1.size() != grid.size() || h2.size() != grid.size()) throw ContractError("hazard values must match the grid");
    double prev = 0.0;
    for (double t : grid) {
        if (!(t > prev)) throw ContractError("grid must be positive and strictly increasing");
        prev = t;
    }
    for (std::size_t k = 0; k < grid.size(); ++k)
        if (!(h1[k] > 0.0) || !(h2[k] > 0.0) || !std::isfinite(h1[k]) || !std::isfinite(h2[k]))
            throw ContractError("hazards must be strictly positive and finite");
}

DiscreteCurves discretize(const DiscreteHazardPair& pair) {
    pair.validate();
    const auto n = pair.grid.size();
    DiscreteCurves c;
    c.log_s1.resize(n);
    c.log_s2.resize(n);
    c.log_p1.resize(n);
    c.log_p2.resize(n);
    double l1 = 0.0, l2 = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double step = pair.grid[k] - prev;
        prev = pair.grid[k];
        l1 += pair.h1[k] * step;
        l2 += pair.h2[k] * step;
        c.log_s1[k] = -l1;
        c.log_s2[k] = -l2;
        c.log_p1[k] = std::log(pair.h1[k]) - l1 + std::log(step);
        c.log_p2[k] = std::log(pair.h2[k]) - l2 + std::log(step);
    }
    const double z1 = log_sum_exp(c.log_p1);
    const double z2 = log_sum_exp(c.log_p2);
    for (auto& v : c.log_p1) v -= z1;
    for (auto& v : c.log_p2) v -= z2;
    return c;
}

double check_lemma1(const DiscreteHazardPair& pair) {
    const auto c = discretize(pair);
    double ep = 0.0, es = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < pair.grid.size(); ++k) {
        const double step = pair.grid[k] - prev;
        prev = pair.grid[k];
        ep += std::exp(c.log_p1[k]) * (c.log_s1[k] - c.log_s2[k]);
        es += std::exp(c.log_s1[k]) * (pair.h1[k] - pair.h2[k]) * step;
    }
    return std::abs(ep + es);
}

KlBound check_kl_bound(const DiscreteHazardPair& pair) {
    const auto c = discretize(pair);
    KlBound r{0.0, 0.0};
    double prev = 0.0;
    for (std::size_t k = 0; k < pair.grid.size(); ++k) {
        const double step = pair.grid[k] - prev;
        prev = pair.grid[k];
        const double p = std::exp(c.log_p1[k]);
        r.kl += p * (c.log_p1[k] - c.log_p2[k]);
        r.bound += p * std::abs(std::log(pair.h1[k]) - std::log(pair.h2[k]));
        r.bound += std::exp(c.log_s1[k]) * std::abs(pair.h1[k] - pair.h2[k]) * step;
    }
    return r;
}

double SmoothPairSpec::h1(double t) const { return a1 + b1 * std::sin(w1 * t + phi1); }
double SmoothPairSpec::h2(double t) const { return a2 + b2 * std::sin(w2 * t + phi2); }

SmoothPairSpec random_smooth_pair(Rng& rng) {
    std::uniform_real_distribution<double> level(0.3, 3.0), depth(0.0, 0.8), freq(0.1, 3.0),
        phase(0.0, 2.0 * std::numbers::pi), coin(0.0, 1.0);
    SmoothPairSpec s{};
    s.a1 = level(rng);
    s.b1 = depth(rng) * s.a1;
    s.w1 = freq(rng);
    s.phi1 = phase(rng);
    if (coin(rng) < 0.3) {
        // nearby curve: the regime where the bound is tightest
        std::normal_distribution<double> jitter(0.0, 0.02);
        s.a2 = s.a1 * (1.0 + jitter(rng));
        s.b2 = std::min(s.b1, 0.9 * s.a2);
        s.w2 = s.w1;
        s.phi2 = s.phi1;
    } else {
        s.a2 = level(rng);
        s.b2 = depth(rng) * s.a2;
        s.w2 = freq(rng);
        s.phi2 = phase(rng);
    }
    return s;
}

double fine_step(const SmoothPairSpec& spec, double resolution) {
    return resolution / std::max(spec.a1 + spec.b1, spec.a2 + spec.b2);
}

DiscreteHazardPair sample_pair(const SmoothPairSpec& spec, double step, double horizon_mass) {
    const double min_rate = std::min(spec.a1 - spec.b1, spec.a2 - spec.b2);
    const double horizon = horizon_mass / min_rate;
    const auto n = static_cast<std::size_t>(std::ceil(horizon / step));
    DiscreteHazardPair pair;
    pair.grid.resize(n);
    pair.h1.resize(n);
    pair.h2.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = step * static_cast<double>(k + 1);
        pair.grid[k] = t;
        pair.h1[k] = spec.h1(t);
        pair.h2[k] = spec.h2(t);
    }
    return pair;
}

CertificationResult certify(std::size_t n_pairs, std::size_t n_lemma_pairs, std::uint64_t seed, double tolerance) {
    Rng rng(seed);
    CertificationResult r;
    r.min_slack = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const auto spec = random_smooth_pair(rng);
        const auto kb = check_kl_bound(sample_pair(spec, fine_step(spec)));
        r.min_slack = std::min(r.min_slack, kb.bound - kb.kl);
        if (kb.kl > kb.bound + tolerance) ++r.kl_violations;
        ++r.pairs;
    }
    r.min_halving_ratio = std::numeric_limits<double>::infinity();
    r.max_halving_ratio = 0.0;
    for (std::size_t i = 0; i < n_lemma_pairs; ++i) {
        const auto spec = random_smooth_pair(rng);
        const double step = fine_step(spec, 0.02);
        const double coarse = check_lemma1(sample_pair(spec, step));
        const double fine = check_lemma1(sample_pair(spec, step / 2.0));
        const double ratio = coarse / fine;
        r.min_halving_ratio = std::min(r.min_halving_ratio, ratio);
        r.max_halving_ratio = std::max(r.max_halving_ratio, ratio);
        ++r.lemma_pairs;
    }
    r.kl_pass = r.pairs > 0 && r.kl_violations == 0;
    // first order: halving the step halves the residual
    r.lemma_pass = r.lemma_pairs > 0 && r.min_halving_ratio >= 1.8 && r.max_halving_ratio <= 2.2;
    return r;
}

} // namespace hgp::synth
