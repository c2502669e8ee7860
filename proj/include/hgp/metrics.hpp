#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace hgp {

/// Right-continuous product-limit estimate of the censoring survival G(t),
/// fit on (T, 1 - e).
struct KaplanMeierCurve {
    std::vector<double> event_times;     // distinct censoring times, increasing
    std::vector<double> survival_values; // G just after each of them

    [[nodiscard]] double at(double t) const;         // G(t)
    [[nodiscard]] double left_limit(double t) const; // G(t-)
};

KaplanMeierCurve km_censoring(std::span<const double> times, std::span<const int> events);

/// One subject as seen by a metric at a fixed evaluation time.
struct Subject {
    double time;  // T_i
    int event;    // e_i
    double surv;  // predicted S(t | x_i)
};

/// IPCW time-dependent concordance at t: comparable pairs e_i = 1,
/// T_i < T_j, T_i < t weighted by G(T_i-)^-2; ties in prediction count 0.5.
/// Empty when no comparable pair carries weight.
std::optional<double> c_td_at(double t, std::span<const Subject> subjects, const KaplanMeierCurve& g);

/// IPCW cumulative/dynamic AUC at t: cases T_i <= t with e_i = 1 weighted by
/// 1 / G(T_i-), controls T_j > t; a case scores when S_i <= S_j.
std::optional<double> auc_at(double t, std::span<const Subject> subjects, const KaplanMeierCurve& g);

/// IPCW negative binomial log-likelihood at t with S clamped to [1e-7, 1 - 1e-7].
double nbll_at(double t, std::span<const Subject> subjects, const KaplanMeierCurve& g);

/// Predicted S(t | x_i): one row per subject, one column per time.
struct PredictionMatrix {
    std::vector<double> times;
    Eigen::MatrixXd surv;

    void validate() const;
    [[nodiscard]] std::size_t column_of(double t) const;
};

struct TimePointMetrics {
    double t = 0.0;
    std::optional<double> c_td;
    std::optional<double> auc;
    std::optional<double> nbll;
};

struct MetricReport {
    double m_c_td = 0.0;
    double m_auc = 0.0;
    double i_nbll = 0.0;
    std::vector<TimePointMetrics> per_time;   // concordance/AUC evaluation times
    std::vector<TimePointMetrics> nbll_curve; // iNBLL integration grid
};

void to_json(nlohmann::json& j, const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

/// Evaluation times: event-time quantiles at `levels` for C^td/AUC, and
/// `n_nbll_points` equally spaced points from min to max time for iNBLL.
struct EvalProtocol {
    std::vector<double> cindex_times;
    std::vector<double> nbll_times;
};

EvalProtocol make_protocol(std::span<const double> times, std::span<const int> events,
                           std::span<const double> levels, std::size_t n_nbll_points = 100);

/// Means of C^td and AUC over the defined points of `cindex_times`, and
/// (1 / (t_last - t_first)) * trapezoid integral of NBLL over `nbll_times`.
/// The censoring curve is fit on the evaluated subjects.
MetricReport aggregate(std::span<const double> times, std::span<const int> events, const PredictionMatrix& pred,
                       const EvalProtocol& protocol);

} // namespace hgp
