#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace hgp {

struct ModelConfig {
    std::size_t input_dim = 1;
    std::size_t hidden_dim = 64;
    std::size_t n_hidden_layers = 2;
    std::size_t time_embed_dim = 8;
    double layer_norm_epsilon = 1e-5;

    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Canonical flat ordering of the learnable parameters. Matrices are row-major
// (output unit major), so block `weight` of a layer with H units and `in`
// inputs holds H rows of length `in`.
//
//   time_embed.weight [E]      time_embed.bias [E]
//   for each hidden layer l:
//     weight [H x in_l]        in_0 = d + E (covariates first, then embedding)
//     bias [H]                 in_l = H for l > 0
//     ln_gain [H]  ln_bias [H]
//     inject.weight [H x E]    inject.bias [H]
//   out.weight [H]             out.bias [1]
struct ParamLayout {
    struct Hidden {
        std::size_t in_dim;
        std::size_t weight, bias, ln_gain, ln_bias, inject_weight, inject_bias;
    };
    std::size_t embed_weight = 0;
    std::size_t embed_bias = 0;
    std::vector<Hidden> hidden;
    std::size_t out_weight = 0;
    std::size_t out_bias = 0;
    std::size_t total = 0;

    static ParamLayout of(const ModelConfig& cfg);
};

std::size_t parameter_count(const ModelConfig& cfg);

/// Learnable parameters of the hazard network, stored flat in canonical order.
class HazardNetParams {
public:
    HazardNetParams(ModelConfig cfg, Eigen::VectorXd values);

    [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const ParamLayout& layout() const noexcept { return layout_; }
    [[nodiscard]] const Eigen::VectorXd& values() const noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }

    [[nodiscard]] HazardNetParams with_values(Eigen::VectorXd values) const;

private:
    ModelConfig cfg_;
    ParamLayout layout_;
    Eigen::VectorXd values_;
};

/// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)); zero
/// biases; layer-norm gain 1 and bias 0. Deterministic in `seed`.
HazardNetParams init_params(const ModelConfig& cfg, std::uint64_t seed);

void to_json(nlohmann::json& j, const HazardNetParams& p);
HazardNetParams params_from_json(const nlohmann::json& j);

/// h(t|x) = softplus(out(... relu(LN(W v + b) + inject(z)) ...)) with
/// z = embed(t_scaled) and first-layer input concat(x, z).
double hazard(const HazardNetParams& params, double t_scaled, std::span<const double> x);

/// Exact gradient of the hazard with respect to the covariates.
std::vector<double> grad_x_hazard(const HazardNetParams& params, double t_scaled, std::span<const double> x);

/// Batched evaluation engine for one covariate vector at many scaled times
/// (one column per time). Besides the plain forward pass it carries a
/// forward-mode tangent along covariate directions and a reverse pass through
/// both channels, which is what differentiating ||grad_x h|| with respect to
/// the parameters needs.
class HazardEvaluator {
public:
    explicit HazardEvaluator(const HazardNetParams& params);

    /// Forward pass; caches activations for a later backward().
    void forward(std::span<const double> x, std::span<const double> t_scaled);

    [[nodiscard]] const Eigen::RowVectorXd& hazard() const noexcept { return h_; }

    /// Per-column covariate gradients (d x N) of the last forward pass.
    [[nodiscard]] Eigen::MatrixXd grad_x();

    /// Tangent of h along covariate direction u(:, col) per column; requires forward().
    void forward_tangent(const Eigen::MatrixXd& u);

    [[nodiscard]] const Eigen::RowVectorXd& hazard_tangent() const noexcept { return h_dot_; }

    /// Reverse pass. `h_bar` seeds the hazard values, `h_dot_bar` (optional)
    /// seeds the tangents of the last forward_tangent(). Parameter adjoints
    /// are added to `param_grad`.
    void backward(const Eigen::RowVectorXd& h_bar, const Eigen::RowVectorXd* h_dot_bar,
                  Eigen::Ref<Eigen::VectorXd> param_grad);

private:
    struct LayerCache {
        Eigen::MatrixXd a_hat;  // normalized pre-activation
        Eigen::RowVectorXd sigma;
        Eigen::MatrixXd c;      // after injection, before relu
        Eigen::MatrixXd out;    // relu(c)
        // tangent channel
        Eigen::MatrixXd d_dot;  // centered tangent pre-activation
        Eigen::MatrixXd a_hat_dot;
        Eigen::RowVectorXd kappa;
        Eigen::MatrixXd out_dot;
    };

    void backward_impl(const Eigen::RowVectorXd& h_bar, const Eigen::RowVectorXd* h_dot_bar, double* grad,
                       Eigen::MatrixXd* x_bar_cols);

    const HazardNetParams* params_;
    Eigen::VectorXd x_;
    Eigen::RowVectorXd t_;
    Eigen::MatrixXd z_;
    std::vector<LayerCache> layers_;
    Eigen::RowVectorXd o_;
    Eigen::RowVectorXd h_;
    Eigen::MatrixXd u_;
    Eigen::RowVectorXd o_dot_;
    Eigen::RowVectorXd h_dot_;
    bool has_tangent_ = false;
};

double softplus(double v) noexcept;
double sigmoid(double v) noexcept;

} // namespace hgp
