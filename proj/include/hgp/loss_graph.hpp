#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hgp/autodiff.hpp"
#include "hgp/hazard_model.hpp"

namespace hgp {

/// Flat parameter gradient in canonical order plus the loss it belongs to.
struct GradientBundle {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

/// Records a scalar loss built from batched hazard evaluations and covariate
/// gradient norms. Hazard calls become leaves on a scalar tape; after the
/// tape is reversed each call is replayed through HazardEvaluator with its
/// leaf adjoints as seeds, so the network itself is never taped per scalar.
class LossGraph {
public:
    explicit LossGraph(const HazardNetParams& params);

    LossGraph(const LossGraph&) = delete;
    LossGraph& operator=(const LossGraph&) = delete;

    /// h(t_k | x) for each scaled time.
    std::vector<ad::Var> hazards(std::span<const double> x, std::span<const double> t_scaled);

    /// ||grad_x h(t_k | x)||_2 for each scaled time. Differentiable in the
    /// parameters (zero subgradient where the norm vanishes).
    std::vector<ad::Var> grad_x_norms(std::span<const double> x, std::span<const double> t_scaled);

    /// sum_p |w_p| over all parameters (subgradient 0 at w_p = 0).
    ad::Var l1_norm();
    /// sum_p w_p^2 over all parameters.
    ad::Var squared_l2_norm();

    [[nodiscard]] ad::Tape& tape() noexcept { return tape_; }
    [[nodiscard]] const HazardNetParams& params() const noexcept { return *params_; }

    /// Gradient of `loss` with respect to every network parameter.
    [[nodiscard]] GradientBundle backward(const ad::Var& loss);

private:
    enum class Kind { hazard, grad_norm, l1, l2 };
    struct Call {
        Kind kind;
        std::vector<double> x;
        std::vector<double> t;
        std::int64_t first_leaf;
    };

    const HazardNetParams* params_;
    ad::Tape tape_;
    std::vector<Call> calls_;
};

/// Evaluates `loss` on a fresh graph and returns the loss with its parameter gradient.
GradientBundle loss_and_param_grad(const HazardNetParams& params,
                                   const std::function<ad::Var(LossGraph&)>& loss);

} // namespace hgp
