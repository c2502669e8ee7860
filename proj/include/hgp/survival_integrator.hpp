#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hgp/autodiff.hpp"
#include "hgp/dataset.hpp"
#include "hgp/hazard_model.hpp"
#include "hgp/loss_graph.hpp"

namespace hgp {

/// Sorted checkpoint times t_1 < ... < t_K (all positive) and the number of
/// trapezoid panels placed in each interval [t_{k-1}, t_k], with t_0 = 0.
struct TimeGrid {
    std::vector<double> unique_times;
    std::size_t subdivisions_per_interval = 8;

    void validate() const;

    /// Sorted unique positive entries of `times`.
    static TimeGrid from_times(std::span<const double> times, std::size_t subdivisions = 8);

    [[nodiscard]] std::size_t size() const noexcept { return unique_times.size(); }

    /// Position of `t` on the grid; throws ContractError if it is not a checkpoint.
    [[nodiscard]] std::size_t index_of(double t) const;

    /// Quadrature node times covering [0, t_last]; node (k + 1) * S is checkpoint k.
    [[nodiscard]] std::vector<double> nodes(std::size_t last) const;
};

/// log S(t_k | x) at each checkpoint of a grid.
struct SurvivalCurve {
    std::vector<double> log_s;
    std::vector<double> x;
};

/// Cumulative composite trapezoid of node hazards (as laid out by
/// TimeGrid::nodes(last)), returning -integral at checkpoints 0..last.
std::vector<double> cumulative_log_survival(const TimeGrid& grid, std::span<const double> node_hazards,
                                            std::size_t last);

/// Same quadrature for an arbitrary hazard of unscaled time.
std::vector<double> log_survival_curve(const std::function<double(double)>& hazard_fn, const TimeGrid& grid);

/// Integrates the network hazard for covariates `x` over the whole grid in one sweep.
SurvivalCurve log_survival_curve(const HazardNetParams& params, const TimeScaler& scaler,
                                 std::span<const double> x, const TimeGrid& grid);

/// log h(t|x) + log S(t|x).
double log_density(const HazardNetParams& params, const TimeScaler& scaler, std::span<const double> x, double t,
                   double log_s_at_t);

/// Checkpointed value at grid time `t`; no re-integration.
double lookup_log_survival(const SurvivalCurve& curve, const TimeGrid& grid, double t);

/// Differentiable curve: log S and h at checkpoints 0..last.
struct CurveVars {
    std::vector<ad::Var> log_s;
    std::vector<ad::Var> hazard;
};

CurveVars log_survival_curve(LossGraph& graph, const TimeScaler& scaler, std::span<const double> x,
                             const TimeGrid& grid, std::size_t last);

} // namespace hgp
