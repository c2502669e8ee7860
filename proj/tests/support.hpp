#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <boost/math/distributions/chi_squared.hpp>

#include "hgp/hazard_model.hpp"

namespace testing_support {

inline hgp::ModelConfig model_config(std::size_t d, std::size_t hidden = 64, std::size_t layers = 2,
                                     std::size_t embed = 8) {
    hgp::ModelConfig cfg;
    cfg.input_dim = d;
    cfg.hidden_dim = hidden;
    cfg.n_hidden_layers = layers;
    cfg.time_embed_dim = embed;
    return cfg;
}

// Initialized parameters with every entry jittered, so biases and layer-norm
// affine terms are generic too.
inline hgp::HazardNetParams random_params(const hgp::ModelConfig& cfg, std::uint64_t seed, double jitter = 0.3) {
    auto p = hgp::init_params(cfg, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> n(0.0, jitter);
    Eigen::VectorXd v = p.values();
    for (auto& w : v) w += n(rng);
    return p.with_values(v);
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// Straight-line forward pass of the documented wiring, written against the
// flat parameter vector with its own offset bookkeeping.
inline double reference_hazard(const hgp::ModelConfig& cfg, const Eigen::VectorXd& p, double t,
                               const std::vector<double>& x) {
    const std::size_t d = cfg.input_dim, H = cfg.hidden_dim, E = cfg.time_embed_dim;
    std::size_t off = 0;
    auto take = [&](std::size_t n) {
        const std::size_t at = off;
        off += n;
        return at;
    };
    const std::size_t ew = take(E), eb = take(E);
    std::vector<double> z(E);
    for (std::size_t e = 0; e < E; ++e) z[e] = p[ew + e] * t + p[eb + e];

    std::vector<double> v(x);
    v.insert(v.end(), z.begin(), z.end());
    for (std::size_t l = 0; l < cfg.n_hidden_layers; ++l) {
        const std::size_t in = l == 0 ? d + E : H;
        const std::size_t W = take(H * in), b = take(H), g = take(H), beta = take(H), iw = take(H * E), ib = take(H);
        std::vector<double> a(H);
        for (std::size_t h = 0; h < H; ++h) {
            double s = p[b + h];
            for (std::size_t i = 0; i < in; ++i) s += p[W + h * in + i] * v[i];
            a[h] = s;
        }
        double mu = 0.0;
        for (double q : a) mu += q;
        mu /= static_cast<double>(H);
        double var = 0.0;
        for (double q : a) var += (q - mu) * (q - mu);
        var /= static_cast<double>(H);
        std::vector<double> out(H);
        for (std::size_t h = 0; h < H; ++h) {
            double c = p[g + h] * (a[h] - mu) / std::sqrt(var + cfg.layer_norm_epsilon) + p[beta + h] + p[ib + h];
            for (std::size_t e = 0; e < E; ++e) c += p[iw + h * E + e] * z[e];
            out[h] = std::max(c, 0.0);
        }
        v = out;
    }
    const std::size_t ow = take(H), ob = take(1);
    double o = p[ob];
    for (std::size_t h = 0; h < H; ++h) o += p[ow + h] * v[h];
    return o > 0.0 ? o + std::log1p(std::exp(-o)) : std::log1p(std::exp(o));
}

// Hazard network that outputs the constant c: everything zero except the output bias.
inline hgp::HazardNetParams constant_net(std::size_t d, double c) {
    const auto cfg = model_config(d, 4, 1, 2);
    const auto L = hgp::ParamLayout::of(cfg);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.total));
    v[static_cast<Eigen::Index>(L.out_bias)] = std::log(std::expm1(c)); // softplus^-1(c)
    return hgp::HazardNetParams(cfg, v);
}

// One hidden layer of two units fed (s, -s) with s = w.x. Layer norm then
// gives s / sqrt(s^2 + eps) on the first unit, and with ln_bias 2 the relu is
// inactive, so h = hgp::softplus(s / sqrt(s^2 + eps) + 2 + b_out) for every t.
struct LayerNormFixture {
    hgp::ModelConfig cfg;
    std::vector<double> w;
    double b_out;
    Eigen::VectorXd values;

    LayerNormFixture(std::vector<double> weights, double bias) : w(std::move(weights)), b_out(bias) {
        cfg = model_config(w.size(), 2, 1, 3);
        cfg.layer_norm_epsilon = 1.0;
        const auto L = hgp::ParamLayout::of(cfg);
        values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.total));
        const auto& h = L.hidden[0];
        for (std::size_t i = 0; i < w.size(); ++i) {
            values[static_cast<Eigen::Index>(h.weight + i)] = w[i];
            values[static_cast<Eigen::Index>(h.weight + h.in_dim + i)] = -w[i];
        }
        for (std::size_t k = 0; k < 2; ++k) {
            values[static_cast<Eigen::Index>(h.ln_gain + k)] = 1.0;
            values[static_cast<Eigen::Index>(h.ln_bias + k)] = 2.0;
        }
        values[static_cast<Eigen::Index>(L.embed_weight)] = 0.7; // time enters but is never used
        values[static_cast<Eigen::Index>(L.out_weight)] = 1.0;
        values[static_cast<Eigen::Index>(L.out_bias)] = b_out;
    }

    [[nodiscard]] hgp::HazardNetParams params() const { return hgp::HazardNetParams(cfg, values); }

    [[nodiscard]] double s(std::span<const double> x) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * x[i];
        return acc;
    }

    [[nodiscard]] double hazard(std::span<const double> x) const {
        const double v = s(x);
        return hgp::softplus(v / std::sqrt(v * v + 1.0) + 2.0 + b_out);
    }

    [[nodiscard]] std::vector<double> grad(std::span<const double> x) const {
        const double v = s(x);
        const double o = v / std::sqrt(v * v + 1.0) + 2.0 + b_out;
        const double ds = hgp::sigmoid(o) / std::pow(v * v + 1.0, 1.5);
        std::vector<double> g(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) g[i] = ds * w[i];
        return g;
    }
};

// Central difference of f along direction v.
inline double directional_fd(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& at,
                             const Eigen::VectorXd& v, double step) {
    return (f(at + step * v) - f(at - step * v)) / (2.0 * step);
}

// Central-difference gradient, one coordinate at a time.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& at,
                                   double step) {
    Eigen::VectorXd g(at.size());
    Eigen::VectorXd w = at;
    for (Eigen::Index k = 0; k < at.size(); ++k) {
        const double orig = w[k];
        w[k] = orig + step;
        const double up = f(w);
        w[k] = orig - step;
        const double dn = f(w);
        w[k] = orig;
        g[k] = (up - dn) / (2.0 * step);
    }
    return g;
}

// Upper-tail p-value of Pearson's chi-square statistic for observed counts.
inline double chi_square_p_value(const std::vector<std::size_t>& counts, const std::vector<double>& probs) {
    double n = 0.0;
    for (auto c : counts) n += static_cast<double>(c);
    double stat = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const double want = n * probs[k];
        stat += (static_cast<double>(counts[k]) - want) * (static_cast<double>(counts[k]) - want) / want;
    }
    const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

inline double relative_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
    return (got - want).norm() / std::max(want.norm(), 1e-300);
}

} // namespace testing_support
