#include "hgp/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hgp/error.hpp"

namespace hgp {

Batch Batch::make(std::span<const SurvivalRecord> records, std::size_t subdivisions,
                  std::span<const double> extra_times) {
    if (records.empty()) throw ContractError("empty batch");
    Batch b;
    b.records.assign(records.begin(), records.end());
    std::vector<double> times;
    times.reserve(records.size() + extra_times.size());
    for (const auto& r : records) times.push_back(r.t);
    times.insert(times.end(), extra_times.begin(), extra_times.end());
    b.grid = TimeGrid::from_times(times, subdivisions);
    b.grid_index.reserve(records.size());
    for (const auto& r : records) b.grid_index.push_back(r.t > 0.0 ? b.grid.index_of(r.t) : at_origin);
    return b;
}

std::string to_string(RegularizerKind k) {
    switch (k) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::hgp: return "hgp";
    case RegularizerKind::l1: return "l1";
    case RegularizerKind::l2: return "l2";
    case RegularizerKind::lci: return "lci";
    }
    return "none";
}

RegularizerKind regularizer_kind_from_string(const std::string& s) {
    if (s == "none") return RegularizerKind::none;
    if (s == "hgp") return RegularizerKind::hgp;
    if (s == "l1") return RegularizerKind::l1;
    if (s == "l2") return RegularizerKind::l2;
    if (s == "lci") return RegularizerKind::lci;
    throw ConfigError("unknown regularizer kind '" + s + "'");
}

void RegularizerSpec::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be a non-negative real");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a non-negative real");
    if (kind == RegularizerKind::hgp && m_samples < 1) throw ConfigError("m_samples must be >= 1 for hgp");
}

void to_json(nlohmann::json& j, const RegularizerSpec& s) {
    j = nlohmann::json{{"kind", to_string(s.kind)}, {"lambda", s.lambda}, {"alpha", s.alpha}, {"m_samples", s.m_samples}};
}

void from_json(const nlohmann::json& j, RegularizerSpec& s) {
    s.kind = regularizer_kind_from_string(j.value("kind", std::string("none")));
    s.lambda = j.value("lambda", s.lambda);
    s.alpha = j.value("alpha", s.alpha);
    s.m_samples = j.value("m_samples", s.m_samples);
    s.validate();
}

std::vector<CurveVars> integrate_batch(LossGraph& graph, const TimeScaler& scaler, const Batch& batch, bool full) {
    std::vector<CurveVars> curves(batch.size());
    if (batch.grid.size() == 0) {
        if (full) throw ContractError("full curves requested for a batch without positive times");
        return curves;
    }
    const auto K = batch.grid.size();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto idx = batch.grid_index[i];
        if (!full && idx == Batch::at_origin) continue;
        curves[i] = log_survival_curve(graph, scaler, batch.records[i].x, batch.grid, full ? K - 1 : idx);
    }
    return curves;
}

ad::Var nll(LossGraph& graph, const TimeScaler& scaler, const Batch& batch, const std::vector<CurveVars>& curves) {
    std::vector<ad::Var> terms;
    terms.reserve(batch.size());
    const double origin = scaler.scale(0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& r = batch.records[i];
        const auto idx = batch.grid_index[i];
        ad::Var log_s;
        ad::Var h;
        if (idx == Batch::at_origin) {
            log_s = 0.0;
            if (r.e == 1) h = graph.hazards(r.x, std::span<const double>(&origin, 1))[0];
        } else {
            log_s = curves[i].log_s.at(idx);
            h = curves[i].hazard.at(idx);
        }
        // -[e log p + (1 - e) log S] with log p = log h + log S
        terms.push_back(r.e == 1 ? -(ad::log(h) + log_s) : -log_s);
    }
    return ad::mean(terms);
}

double nll(const HazardNetParams& params, const TimeScaler& scaler, const Batch& batch) {
    LossGraph graph(params);
    auto curves = integrate_batch(graph, scaler, batch, false);
    return nll(graph, scaler, batch, curves).value();
}

std::vector<double> sample_survival_times(std::span<const double> log_s, const TimeGrid& grid, std::size_t m,
                                          Rng& rng) {
    if (m < 1) throw ContractError("sample count must be >= 1");
    if (log_s.size() != grid.size()) throw ContractError("survival curve and grid differ in length");
    std::vector<double> w(log_s.size());
    double total = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] = std::exp(log_s[k]);
        total += w[k];
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("survival weights underflow; cannot sample");
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> out;
    out.reserve(m);
    for (std::size_t s = 0; s < m; ++s) {
        const auto k = pick(rng);
        const double lo = k == 0 ? 0.0 : grid.unique_times[k - 1];
        const double hi = grid.unique_times[k];
        // 1 - U lies in (0, 1], so draws stay inside (lo, hi]
        out.push_back(lo + (1.0 - unit(rng)) * (hi - lo));
    }
    return out;
}

ad::Var hgp(LossGraph& graph, const TimeScaler& scaler, const Batch& batch, const std::vector<CurveVars>& curves,
            std::size_t m, Rng& rng) {
    std::vector<ad::Var> per_record;
    per_record.reserve(batch.size());
    std::vector<double> log_s(batch.grid.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& c = curves.at(i).log_s;
        if (c.size() != batch.grid.size()) throw ContractError("hgp needs full-length survival curves");
        for (std::size_t k = 0; k < c.size(); ++k) log_s[k] = c[k].value();
        auto times = sample_survival_times(log_s, batch.grid, m, rng);
        for (auto& t : times) t = scaler.scale(t);
        auto norms = graph.grad_x_norms(batch.records[i].x, times);
        per_record.push_back(ad::mean(norms));
    }
    return ad::mean(per_record);
}

double hgp(const HazardNetParams& params, const TimeScaler& scaler, const Batch& batch, std::size_t m, Rng& rng) {
    LossGraph graph(params);
    auto curves = integrate_batch(graph, scaler, batch, true);
    return hgp(graph, scaler, batch, curves, m, rng).value();
}

double l1_penalty(const HazardNetParams& params, double alpha) { return alpha * params.values().cwiseAbs().sum(); }

double l2_penalty(const HazardNetParams& params, double alpha) { return alpha * params.values().squaredNorm(); }

ad::Var lci(LossGraph& graph, const Batch& batch, const std::vector<CurveVars>& curves,
            std::span<const double> eval_times) {
    const std::size_t n = batch.size();
    std::vector<ad::Var> per_time;
    std::vector<ad::Var> surv(n);
    std::vector<double> partial(n);
    for (double t : eval_times) {
        const auto idx = batch.grid.index_of(t);
        for (std::size_t i = 0; i < n; ++i) {
            if (curves.at(i).log_s.size() <= idx) throw ContractError("lci needs curves reaching every evaluation time");
            surv[i] = ad::exp(curves[i].log_s[idx]);
        }
        std::fill(partial.begin(), partial.end(), 0.0);
        double acc = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& ri = batch.records[i];
            if (ri.e != 1 || !(ri.t < t)) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (!(ri.t < batch.records[j].t)) continue;
                const double diff = surv[j].value() - surv[i].value();
                const double log_sig = -(std::max(-diff, 0.0) + std::log1p(std::exp(-std::abs(diff))));
                acc += 1.0 + log_sig / std::numbers::ln2;
                const double slope = sigmoid(-diff) / std::numbers::ln2;
                partial[j] += slope;
                partial[i] -= slope;
                ++pairs;
            }
        }
        if (pairs == 0) continue;
        const double inv = 1.0 / static_cast<double>(pairs);
        for (auto& p : partial) p *= inv;
        per_time.push_back(graph.tape().node(acc * inv, surv, partial, "lci_bound"));
    }
    if (per_time.empty()) return 0.0;
    std::vector<double> neg(per_time.size(), -1.0);
    return ad::weighted_sum(per_time, neg);
}

double lci_penalty(const HazardNetParams& params, const TimeScaler& scaler, const Batch& batch,
                   std::span<const double> eval_times) {
    bool on_grid = std::all_of(eval_times.begin(), eval_times.end(), [&](double t) {
        return std::binary_search(batch.grid.unique_times.begin(), batch.grid.unique_times.end(), t);
    });
    const Batch augmented =
        on_grid ? Batch{} : Batch::make(batch.records, batch.grid.subdivisions_per_interval, eval_times);
    const Batch& b = on_grid ? batch : augmented;
    const bool comparable = std::any_of(eval_times.begin(), eval_times.end(), [&](double t) {
        return std::any_of(b.records.begin(), b.records.end(), [&](const SurvivalRecord& ri) {
            return ri.e == 1 && ri.t < t &&
                   std::any_of(b.records.begin(), b.records.end(), [&](const SurvivalRecord& rj) { return ri.t < rj.t; });
        });
    });
    if (!comparable) throw ContractError("no comparable pairs at any lci evaluation time");
    LossGraph graph(params);
    auto curves = integrate_batch(graph, scaler, b, true);
    return lci(graph, b, curves, eval_times).value();
}

std::vector<double> default_lci_times(const Batch& batch) {
    std::vector<double> events;
    for (const auto& r : batch.records)
        if (r.e == 1) events.push_back(r.t);
    if (events.empty()) throw ContractError("batch has no events; cannot place lci evaluation times");
    std::vector<double> levels;
    for (int k = 1; k <= 9; ++k) levels.push_back(0.1 * k);
    auto qs = quantiles(std::move(events), levels);
    std::vector<double> out;
    for (double q : qs)
        if (q > 0.0 && (out.empty() || q != out.back())) out.push_back(q);
    if (out.empty()) throw ContractError("all batch event times are zero; cannot place lci evaluation times");
    return out;
}

ad::Var total_loss(LossGraph& graph, const TimeScaler& scaler, const Batch& batch, const RegularizerSpec& spec,
                   Rng& rng) {
    spec.validate();
    const bool has_event =
        std::any_of(batch.records.begin(), batch.records.end(), [](const auto& r) { return r.e == 1 && r.t > 0.0; });
    if (spec.kind == RegularizerKind::lci && spec.alpha > 0.0 && has_event) {
        auto eval_times = default_lci_times(batch);
        const Batch augmented = Batch::make(batch.records, batch.grid.subdivisions_per_interval, eval_times);
        // the nll keeps the batch's own grid so the likelihood does not depend on the regularizer
        auto own = integrate_batch(graph, scaler, batch, false);
        auto curves = integrate_batch(graph, scaler, augmented, true);
        return nll(graph, scaler, batch, own) + spec.alpha * lci(graph, augmented, curves, eval_times);
    }
    const bool sampling = spec.kind == RegularizerKind::hgp && spec.lambda > 0.0;
    auto curves = integrate_batch(graph, scaler, batch, sampling);
    ad::Var loss = nll(graph, scaler, batch, curves);
    switch (spec.kind) {
    case RegularizerKind::hgp:
        if (sampling) loss = loss + spec.lambda * hgp(graph, scaler, batch, curves, spec.m_samples, rng);
        break;
    case RegularizerKind::l1: loss = loss + spec.alpha * graph.l1_norm(); break;
    case RegularizerKind::l2: loss = loss + spec.alpha * graph.squared_l2_norm(); break;
    default: break;
    }
    return loss;
}

double total_loss(const HazardNetParams& params, const TimeScaler& scaler, const Batch& batch,
                  const RegularizerSpec& spec, Rng& rng) {
    LossGraph graph(params);
    return total_loss(graph, scaler, batch, spec, rng).value();
}

} // namespace hgp
