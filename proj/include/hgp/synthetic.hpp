#pragma once

#include <random>
#include <span>
#include <vector>

#include "hgp/dataset.hpp"

namespace hgp::synth {

using Rng = std::mt19937_64;

/// Closed-form hazard families used as ground truth.
///   exponential:  h = rate
///   weibull:      h = (k / scale) (t / scale)^(k - 1)
///   linear_in_x:  h = rate * exp(w . x)   (proportional hazards, constant in t)
struct ParametricHazard {
    enum class Family { exponential, weibull, linear_in_x };

    Family family = Family::exponential;
    double rate = 1.0;
    double shape = 1.0;
    double scale = 1.0;
    std::vector<double> weights;
    // Number of standard-normal covariates drawn for the x-independent families.
    std::size_t noise_dim = 4;

    static ParametricHazard exponential(double rate, std::size_t noise_dim = 4);
    static ParametricHazard weibull(double shape, double scale, std::size_t noise_dim = 4);
    static ParametricHazard linear_in_x(std::vector<double> weights, double rate = 1.0);

    void validate() const;
    [[nodiscard]] std::size_t dim() const noexcept {
        return family == Family::linear_in_x ? weights.size() : noise_dim;
    }
};

double closed_form_log_survival(const ParametricHazard& ph, double t, std::span<const double> x = {});
double closed_form_hazard(const ParametricHazard& ph, double t, std::span<const double> x = {});

/// Inverse-transform draw of an event time given covariates.
double sample_event_time(const ParametricHazard& ph, std::span<const double> x, Rng& rng);

/// Expected censored fraction under Uniform(0, horizon) censoring, averaged
/// over `xs` (ignored for x-independent families).
double expected_censored_fraction(const ParametricHazard& ph, double horizon,
                                  std::span<const std::vector<double>> xs);

/// n records with covariates ~ N(0, I), event times from the family and
/// independent Uniform(0, H) censoring, H solved by bisection so the expected
/// censored fraction equals `censor_rate` (no censoring when it is 0).
Dataset generate(const ParametricHazard& ph, std::size_t n, double censor_rate, Rng& rng);

/// Hazard values of two curves on a shared grid (t_0 = 0 implied).
struct DiscreteHazardPair {
    std::vector<double> grid;
    std::vector<double> h1;
    std::vector<double> h2;

    void validate() const;
};

/// Discrete forms on the grid, with step d_k = t_k - t_{k-1}:
///   Lambda(k) = sum_{j<=k} h_j d_j,  S = exp(-Lambda),  p ~ h S d  (normalized)
///   E_p[f] = sum_k p_k f_k,  E_S[f] = sum_k S_k f_k d_k
struct DiscreteCurves {
    std::vector<double> log_s1, log_s2;
    std::vector<double> log_p1, log_p2; // normalized log probabilities
};

DiscreteCurves discretize(const DiscreteHazardPair& pair);

/// |E_p1[log S1 - log S2] + E_S1[h1 - h2]|; vanishes as the grid refines.
double check_lemma1(const DiscreteHazardPair& pair);

struct KlBound {
    double kl;
    double bound;
};

/// kl = E_p1[log p1 - log p2], bound = E_p1|log h1 - log h2| + E_S1|h1 - h2|.
KlBound check_kl_bound(const DiscreteHazardPair& pair);

/// Smooth random pair a_i + b_i sin(w_i t + phi_i) on a uniform grid with
/// step `step` reaching cumulative hazard `horizon_mass` for both curves.
struct SmoothPairSpec {
    double a1, b1, w1, phi1;
    double a2, b2, w2, phi2;
    [[nodiscard]] double h1(double t) const;
    [[nodiscard]] double h2(double t) const;
};

SmoothPairSpec random_smooth_pair(Rng& rng);
DiscreteHazardPair sample_pair(const SmoothPairSpec& spec, double step, double horizon_mass = 40.0);
/// Step that keeps max(h) * step at `resolution`.
double fine_step(const SmoothPairSpec& spec, double resolution = 0.01);

struct CertificationResult {
    std::size_t pairs = 0;
    std::size_t kl_violations = 0;
    double min_slack = 0.0;          // min(bound - kl)
    std::size_t lemma_pairs = 0;
    double min_halving_ratio = 0.0;  // residual(step) / residual(step / 2)
    double max_halving_ratio = 0.0;
    bool kl_pass = false;
    bool lemma_pass = false;
};

/// Runs the KL-bound sweep over `n_pairs` random smooth pairs and the
/// lemma-residual refinement study over `n_lemma_pairs`.
CertificationResult certify(std::size_t n_pairs, std::size_t n_lemma_pairs, std::uint64_t seed,
                            double tolerance = 1e-9);

} // namespace hgp::synth
