#include "hgp/survival_integrator.hpp"

#include <algorithm>
#include <cmath>

#include "hgp/error.hpp"

namespace hgp {

void TimeGrid::validate() const {
    if (unique_times.empty()) throw ContractError("time grid is empty");
    if (subdivisions_per_interval < 1) throw ContractError("subdivisions_per_interval must be >= 1");
    if (!(unique_times.front() > 0.0)) throw ContractError("time grid must be strictly positive");
    for (std::size_t k = 1; k < unique_times.size(); ++k)
        if (!(unique_times[k] > unique_times[k - 1])) throw ContractError("time grid must be strictly increasing");
    if (!std::isfinite(unique_times.back())) throw ContractError("time grid must be finite");
}

TimeGrid TimeGrid::from_times(std::span<const double> times, std::size_t subdivisions) {
    TimeGrid g;
    g.subdivisions_per_interval = subdivisions;
    for (double t : times)
        if (t > 0.0) g.unique_times.push_back(t);
    std::sort(g.unique_times.begin(), g.unique_times.end());
    g.unique_times.erase(std::unique(g.unique_times.begin(), g.unique_times.end()), g.unique_times.end());
    return g;
}

std::size_t TimeGrid::index_of(double t) const {
    auto it = std::lower_bound(unique_times.begin(), unique_times.end(), t);
    if (it == unique_times.end() || *it != t)
        throw ContractError("time " + std::to_string(t) + " is not a checkpoint of the grid");
    return static_cast<std::size_t>(it - unique_times.begin());
}

std::vector<double> TimeGrid::nodes(std::size_t last) const {
    if (last >= unique_times.size()) throw ContractError("checkpoint index out of range");
    const auto S = subdivisions_per_interval;
    std::vector<double> out;
    out.reserve((last + 1) * S + 1);
    out.push_back(0.0);
    double prev = 0.0;
    for (std::size_t k = 0; k <= last; ++k) {
        const double step = (unique_times[k] - prev) / static_cast<double>(S);
        for (std::size_t j = 1; j < S; ++j) out.push_back(prev + static_cast<double>(j) * step);
        out.push_back(unique_times[k]);
        prev = unique_times[k];
    }
    return out;
}

std::vector<double> cumulative_log_survival(const TimeGrid& grid, std::span<const double> node_hazards,
                                            std::size_t last) {
    const auto S = grid.subdivisions_per_interval;
    if (node_hazards.size() != (last + 1) * S + 1) throw ContractError("node hazard count does not match grid");
    std::vector<double> log_s(last + 1);
    double acc = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k <= last; ++k) {
        const double w = (grid.unique_times[k] - prev) / static_cast<double>(S);
        const std::size_t a = k * S;
        double panel = 0.5 * (node_hazards[a] + node_hazards[a + S]);
        for (std::size_t j = 1; j < S; ++j) panel += node_hazards[a + j];
        acc += w * panel;
        log_s[k] = -acc;
        prev = grid.unique_times[k];
    }
    return log_s;
}

std::vector<double> log_survival_curve(const std::function<double(double)>& hazard_fn, const TimeGrid& grid) {
    grid.validate();
    const auto last = grid.size() - 1;
    auto nodes = grid.nodes(last);
    std::vector<double> h(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        h[i] = hazard_fn(nodes[i]);
        if (!std::isfinite(h[i])) throw NumericError("non-finite hazard at t=" + std::to_string(nodes[i]));
    }
    return cumulative_log_survival(grid, h, last);
}

SurvivalCurve log_survival_curve(const HazardNetParams& params, const TimeScaler& scaler,
                                 std::span<const double> x, const TimeGrid& grid) {
    grid.validate();
    const auto last = grid.size() - 1;
    auto nodes = grid.nodes(last);
    for (auto& t : nodes) t = scaler.scale(t);
    HazardEvaluator ev(params);
    ev.forward(x, nodes);
    const auto& h = ev.hazard();
    if (!h.allFinite()) throw NumericError("non-finite hazard during integration");
    SurvivalCurve curve;
    curve.log_s = cumulative_log_survival(grid, std::span<const double>(h.data(), static_cast<std::size_t>(h.size())),
                                          last);
    curve.x.assign(x.begin(), x.end());
    return curve;
}

double log_density(const HazardNetParams& params, const TimeScaler& scaler, std::span<const double> x, double t,
                   double log_s_at_t) {
    return std::log(hazard(params, scaler.scale(t), x)) + log_s_at_t;
}

double lookup_log_survival(const SurvivalCurve& curve, const TimeGrid& grid, double t) {
    const auto k = grid.index_of(t);
    if (k >= curve.log_s.size()) throw ContractError("curve is shorter than the grid");
    return curve.log_s[k];
}

CurveVars log_survival_curve(LossGraph& graph, const TimeScaler& scaler, std::span<const double> x,
                             const TimeGrid& grid, std::size_t last) {
    grid.validate();
    const auto S = grid.subdivisions_per_interval;
    auto nodes = grid.nodes(last);
    for (auto& t : nodes) t = scaler.scale(t);
    auto h = graph.hazards(x, nodes);

    CurveVars out;
    out.log_s.reserve(last + 1);
    out.hazard.reserve(last + 1);
    std::vector<ad::Var> parents(S + 2);
    std::vector<double> weights(S + 2);
    ad::Var prev_log_s;
    double prev = 0.0;
    for (std::size_t k = 0; k <= last; ++k) {
        const double w = (grid.unique_times[k] - prev) / static_cast<double>(S);
        const std::size_t a = k * S;
        parents[0] = prev_log_s;
        weights[0] = 1.0;
        for (std::size_t j = 0; j <= S; ++j) {
            parents[j + 1] = h[a + j];
            weights[j + 1] = (j == 0 || j == S) ? -0.5 * w : -w;
        }
        prev_log_s = ad::weighted_sum(parents, weights);
        out.log_s.push_back(prev_log_s);
        out.hazard.push_back(h[a + S]);
        prev = grid.unique_times[k];
    }
    return out;
}

} // namespace hgp
