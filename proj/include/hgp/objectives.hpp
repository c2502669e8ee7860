#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hgp/dataset.hpp"
#include "hgp/hazard_model.hpp"
#include "hgp/loss_graph.hpp"
#include "hgp/survival_integrator.hpp"

namespace hgp {

using Rng = std::mt19937_64;

/// A minibatch with its union grid of unique times. Records observed at
/// t = 0 have no checkpoint (log S(0) = 0) and carry `at_origin`.
struct Batch {
    static constexpr std::size_t at_origin = static_cast<std::size_t>(-1);

    std::vector<SurvivalRecord> records;
    TimeGrid grid;
    std::vector<std::size_t> grid_index;

    /// `extra_times` are added to the grid (e.g. LCI evaluation times).
    static Batch make(std::span<const SurvivalRecord> records, std::size_t subdivisions = 8,
                      std::span<const double> extra_times = {});

    [[nodiscard]] std::size_t size() const noexcept { return records.size(); }
};

enum class RegularizerKind { none, hgp, l1, l2, lci };

std::string to_string(RegularizerKind k);
RegularizerKind regularizer_kind_from_string(const std::string& s);

struct RegularizerSpec {
    RegularizerKind kind = RegularizerKind::none;
    double lambda = 0.0;       // HGP coefficient
    double alpha = 0.0;        // L1 / L2 / LCI coefficient
    std::size_t m_samples = 5; // HGP draws per record

    void validate() const;
};

void to_json(nlohmann::json& j, const RegularizerSpec& s);
void from_json(const nlohmann::json& j, RegularizerSpec& s);

/// Differentiable log-survival curves of every record of a batch. With
/// `full` each curve runs to the last grid time, otherwise only to the
/// record's own time.
std::vector<CurveVars> integrate_batch(LossGraph& graph, const TimeScaler& scaler, const Batch& batch, bool full);

/// Mean censored negative log-likelihood -[e log p + (1 - e) log S].
ad::Var nll(LossGraph& graph, const TimeScaler& scaler, const Batch& batch, const std::vector<CurveVars>& curves);
double nll(const HazardNetParams& params, const TimeScaler& scaler, const Batch& batch);

/// Draws m times from s(t|x) proportional to S(t|x): a checkpoint index with
/// probability S(t_k|x) / sum_j S(t_j|x), then Uniform(t_{k-1}, t_k), t_0 = 0.
std::vector<double> sample_survival_times(std::span<const double> log_s, const TimeGrid& grid, std::size_t m,
                                          Rng& rng);
inline std::vector<double> sample_survival_times(const SurvivalCurve& curve, const TimeGrid& grid, std::size_t m,
                                                 Rng& rng) {
    return sample_survival_times(curve.log_s, grid, m, rng);
}

/// Batch mean over records of the average ||grad_x h(t'|x)|| across m draws
/// t' ~ s(t|x). Requires full-length curves.
ad::Var hgp(LossGraph& graph, const TimeScaler& scaler, const Batch& batch, const std::vector<CurveVars>& curves,
            std::size_t m, Rng& rng);
double hgp(const HazardNetParams& params, const TimeScaler& scaler, const Batch& batch, std::size_t m, Rng& rng);

double l1_penalty(const HazardNetParams& params, double alpha);
double l2_penalty(const HazardNetParams& params, double alpha);

/// Negated sum over evaluation times of the pairwise C-index lower bound
/// mean_{comparable (i,j)} [1 + log sigmoid(S(t|x_j) - S(t|x_i)) / log 2].
/// Every evaluation time must be a grid checkpoint. Zero when no pair is comparable.
ad::Var lci(LossGraph& graph, const Batch& batch, const std::vector<CurveVars>& curves,
            std::span<const double> eval_times);
double lci_penalty(const HazardNetParams& params, const TimeScaler& scaler, const Batch& batch,
                   std::span<const double> eval_times);

/// Deciles (10%..90%) of the batch's event times.
std::vector<double> default_lci_times(const Batch& batch);

/// nll + the active regularizer term. For LCI the grid is extended with the
/// default evaluation times when needed.
ad::Var total_loss(LossGraph& graph, const TimeScaler& scaler, const Batch& batch, const RegularizerSpec& spec,
                   Rng& rng);
double total_loss(const HazardNetParams& params, const TimeScaler& scaler, const Batch& batch,
                  const RegularizerSpec& spec, Rng& rng);

} // namespace hgp
