#include "hgp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hgp/dataset.hpp"
#include "hgp/error.hpp"

namespace hgp {

namespace {

constexpr double kClamp = 1e-7;

double ipcw(const KaplanMeierCurve& g, double t) {
    const double v = g.left_limit(t);
    return v > 0.0 ? 1.0 / v : 0.0;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> read_opt(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

} // namespace

double KaplanMeierCurve::at(double t) const {
    auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
    if (it == event_times.begin()) return 1.0;
    return survival_values[static_cast<std::size_t>(it - event_times.begin()) - 1];
}

double KaplanMeierCurve::left_limit(double t) const {
    auto it = std::lower_bound(event_times.begin(), event_times.end(), t);
    if (it == event_times.begin()) return 1.0;
    return survival_values[static_cast<std::size_t>(it - event_times.begin()) - 1];
}

KaplanMeierCurve km_censoring(std::span<const double> times, std::span<const int> events) {
    if (times.empty()) throw ContractError("km_censoring needs at least one observation");
    if (times.size() != events.size()) throw ContractError("km_censoring: times and events differ in length");
    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });

    KaplanMeierCurve g;
    double value = 1.0;
    std::size_t at_risk = times.size();
    for (std::size_t k = 0; k < order.size();) {
        const double u = times[order[k]];
        std::size_t censored = 0, tied = 0;
        while (k < order.size() && times[order[k]] == u) {
            if (events[order[k]] == 0) ++censored;
            ++tied;
            ++k;
        }
        if (censored > 0) {
            value *= 1.0 - static_cast<double>(censored) / static_cast<double>(at_risk);
            g.event_times.push_back(u);
            g.survival_values.push_back(value);
        }
        at_risk -= tied;
    }
    return g;
}

std::optional<double> c_td_at(double t, std::span<const Subject> subjects, const KaplanMeierCurve& g) {
    double num = 0.0, den = 0.0;
    for (const auto& si : subjects) {
        if (si.event != 1 || !(si.time < t)) continue;
        const double w = ipcw(g, si.time);
        if (w == 0.0) continue;
        const double w2 = w * w;
        for (const auto& sj : subjects) {
            if (!(si.time < sj.time)) continue;
            den += w2;
            if (si.surv < sj.surv) {
                num += w2;
            } else if (si.surv == sj.surv) {
                num += 0.5 * w2;
            }
        }
    }
    if (den == 0.0) return std::nullopt;
    return num / den;
}

std::optional<double> auc_at(double t, std::span<const Subject> subjects, const KaplanMeierCurve& g) {
    std::vector<double> controls;
    for (const auto& s : subjects)
        if (s.time > t) controls.push_back(s.surv);
    std::sort(controls.begin(), controls.end());
    if (controls.empty()) return std::nullopt;
    const double n_controls = static_cast<double>(controls.size());
    double num = 0.0, case_weight = 0.0;
    for (const auto& si : subjects) {
        if (si.event != 1 || !(si.time <= t)) continue;
        const double w = ipcw(g, si.time);
        if (w == 0.0) continue;
        case_weight += w;
        // controls with S_j >= S_i
        auto ge = controls.end() - std::lower_bound(controls.begin(), controls.end(), si.surv);
        // per-case fraction, so a perfect ordering accumulates exactly case_weight
        num += w * (static_cast<double>(ge) / n_controls);
    }
    if (case_weight == 0.0) return std::nullopt;
    return num / case_weight;
}

double nbll_at(double t, std::span<const Subject> subjects, const KaplanMeierCurve& g) {
    if (subjects.empty()) throw ContractError("nbll_at needs at least one subject");
    const double g_t = g.at(t);
    double acc = 0.0;
    for (const auto& s : subjects) {
        const double p = std::clamp(s.surv, kClamp, 1.0 - kClamp);
        if (s.time <= t && s.event == 1) {
            const double w = ipcw(g, s.time);
            if (w > 0.0) acc += std::log(1.0 - p) * w;
        } else if (s.time > t && g_t > 0.0) {
            acc += std::log(p) / g_t;
        }
    }
    return -acc / static_cast<double>(subjects.size());
}

void PredictionMatrix::validate() const {
    if (static_cast<std::size_t>(surv.cols()) != times.size())
        throw ContractError("prediction matrix column count does not match its times");
    if (!std::is_sorted(times.begin(), times.end())) throw ContractError("prediction times must be sorted");
    for (Eigen::Index i = 0; i < surv.rows(); ++i)
        for (Eigen::Index c = 0; c < surv.cols(); ++c) {
            const double v = surv(i, c);
            if (!(v >= 0.0 && v <= 1.0)) throw ContractError("predicted survival outside [0,1]");
            if (c > 0 && v > surv(i, c - 1) + 1e-12) throw ContractError("predicted survival increases in time");
        }
}

std::size_t PredictionMatrix::column_of(double t) const {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.end() || *it != t) throw ContractError("time " + std::to_string(t) + " not in prediction matrix");
    return static_cast<std::size_t>(it - times.begin());
}

void to_json(nlohmann::json& j, const MetricReport& r) {
    auto points = [](const std::vector<TimePointMetrics>& v) {
        auto arr = nlohmann::json::array();
        for (const auto& p : v)
            arr.push_back({{"t", p.t}, {"c_td", opt(p.c_td)}, {"auc", opt(p.auc)}, {"nbll", opt(p.nbll)}});
        return arr;
    };
    j = nlohmann::json{{"m_c_td", r.m_c_td},
                       {"m_auc", r.m_auc},
                       {"i_nbll", r.i_nbll},
                       {"per_time", points(r.per_time)},
                       {"nbll_curve", points(r.nbll_curve)}};
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.m_c_td = j.at("m_c_td").get<double>();
    r.m_auc = j.at("m_auc").get<double>();
    r.i_nbll = j.at("i_nbll").get<double>();
    auto points = [](const nlohmann::json& arr) {
        std::vector<TimePointMetrics> out;
        for (const auto& p : arr)
            out.push_back({p.at("t").get<double>(), read_opt(p, "c_td"), read_opt(p, "auc"), read_opt(p, "nbll")});
        return out;
    };
    if (j.contains("per_time")) r.per_time = points(j.at("per_time"));
    if (j.contains("nbll_curve")) r.nbll_curve = points(j.at("nbll_curve"));
    return r;
}

EvalProtocol make_protocol(std::span<const double> times, std::span<const int> events,
                           std::span<const double> levels, std::size_t n_nbll_points) {
    if (times.empty()) throw ContractError("evaluation split is empty");
    if (n_nbll_points < 2) throw ContractError("iNBLL needs at least two grid points");
    std::vector<double> event_times;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (events[i] == 1) event_times.push_back(times[i]);
    if (event_times.empty()) throw ContractError("evaluation split has no events");
    EvalProtocol p;
    p.cindex_times = quantiles(std::move(event_times), levels);
    const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
    if (!(*hi > *lo)) throw ContractError("evaluation times span an empty interval");
    const double step = (*hi - *lo) / static_cast<double>(n_nbll_points - 1);
    for (std::size_t k = 0; k < n_nbll_points; ++k) p.nbll_times.push_back(*lo + step * static_cast<double>(k));
    p.nbll_times.back() = *hi;
    return p;
}

MetricReport aggregate(std::span<const double> times, std::span<const int> events, const PredictionMatrix& pred,
                       const EvalProtocol& protocol) {
    if (times.size() != static_cast<std::size_t>(pred.surv.rows()))
        throw ContractError("prediction rows do not match the number of subjects");
    const auto g = km_censoring(times, events);
    std::vector<Subject> subjects(times.size());
    auto fill = [&](double t) {
        const auto c = static_cast<Eigen::Index>(pred.column_of(t));
        for (std::size_t i = 0; i < times.size(); ++i)
            subjects[i] = Subject{times[i], events[i], pred.surv(static_cast<Eigen::Index>(i), c)};
    };

    MetricReport r;
    double c_sum = 0.0, auc_sum = 0.0;
    std::size_t c_n = 0, auc_n = 0;
    for (double t : protocol.cindex_times) {
        fill(t);
        TimePointMetrics m{t, c_td_at(t, subjects, g), auc_at(t, subjects, g), nbll_at(t, subjects, g)};
        if (m.c_td) {
            c_sum += *m.c_td;
            ++c_n;
        }
        if (m.auc) {
            auc_sum += *m.auc;
            ++auc_n;
        }
        r.per_time.push_back(m);
    }
    if (c_n == 0 || auc_n == 0) throw ContractError("every concordance/AUC evaluation time is undefined");
    r.m_c_td = c_sum / static_cast<double>(c_n);
    r.m_auc = auc_sum / static_cast<double>(auc_n);

    const auto& nt = protocol.nbll_times;
    if (nt.size() < 2 || !(nt.back() > nt.front())) throw ContractError("iNBLL grid must span a positive interval");
    std::vector<double> values;
    for (double t : nt) {
        fill(t);
        values.push_back(nbll_at(t, subjects, g));
        r.nbll_curve.push_back({t, std::nullopt, std::nullopt, values.back()});
    }
    double integral = 0.0;
    for (std::size_t k = 1; k < nt.size(); ++k) integral += 0.5 * (values[k] + values[k - 1]) * (nt[k] - nt[k - 1]);
    r.i_nbll = integral / (nt.back() - nt.front());
    return r;
}

} // namespace hgp
