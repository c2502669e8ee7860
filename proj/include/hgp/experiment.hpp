#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "hgp/dataset.hpp"
#include "hgp/hazard_model.hpp"
#include "hgp/metrics.hpp"
#include "hgp/objectives.hpp"

namespace hgp {

struct OptimizerConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct ExperimentConfig {
    std::string dataset_path;
    CsvColumns columns;
    ModelConfig model;           // input_dim is taken from the data
    RegularizerSpec regularizer;
    OptimizerConfig optimizer;
    double clip_norm = 1.0;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 500;
    std::size_t early_stop_patience = 20;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::uint64_t split_seed = 42;
    std::array<double, 3> split_fractions{0.7, 0.1, 0.2};
    std::vector<double> eval_quantiles{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::size_t nbll_points = 100;
    std::size_t subdivisions = 8;
    bool standardize = true;

    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

/// Decoupled weight decay Adam: theta <- theta (1 - lr wd), then the Adam step.
class AdamW {
public:
    AdamW(OptimizerConfig cfg, std::size_t n);
    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);
    [[nodiscard]] std::size_t steps() const noexcept { return t_; }

private:
    OptimizerConfig cfg_;
    Eigen::VectorXd m_, v_;
    std::size_t t_ = 0;
};

/// Rescales `grad` in place to norm `max_norm` when it is longer; returns the original norm.
double clip_gradient(Eigen::VectorXd& grad, double max_norm);

/// Splits plus the scalers fit on the training part. Features of every split
/// are already standardized when the config asks for it.
struct PreparedData {
    Dataset train;
    Dataset val;
    Dataset test;
    TimeScaler time_scaler;
    std::optional<FeatureScaler> feature_scaler;
};

PreparedData prepare(const Dataset& raw, const ExperimentConfig& cfg);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0; // mean total loss over the epoch's minibatches
    double val_nll = 0.0;
};

struct TrainedModel {
    HazardNetParams params;
    TimeScaler time_scaler;
    std::optional<FeatureScaler> feature_scaler;
};

void to_json(nlohmann::json& j, const TrainedModel& m);
TrainedModel trained_model_from_json(const nlohmann::json& j);

struct TrainResult {
    TrainedModel model;               // best-validation parameters
    std::vector<EpochRecord> curve;
    std::size_t best_epoch = 0;
};

/// Minibatch training with early stopping on validation NLL. Deterministic in
/// (config, data, seed).
TrainResult train(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed);

/// Record-weighted mean NLL over fixed consecutive batches of `batch_size`.
double dataset_nll(const HazardNetParams& params, const TimeScaler& scaler, const Dataset& ds,
                   std::size_t batch_size, std::size_t subdivisions);

/// Record-weighted mean HGP penalty over fixed consecutive batches.
double dataset_hgp(const HazardNetParams& params, const TimeScaler& scaler, const Dataset& ds,
                   std::size_t batch_size, std::size_t subdivisions, std::size_t m, std::uint64_t seed);

/// S(t | x_i) for every subject of `ds` at sorted `times`; t <= 0 gives 1.
PredictionMatrix predict_survival(const HazardNetParams& params, const TimeScaler& scaler, const Dataset& ds,
                                  std::vector<double> times, std::size_t subdivisions);

/// Evaluation protocol on `ds`: quantile times from its event times, iNBLL over its time range.
EvalProtocol protocol_for(const Dataset& ds, const ExperimentConfig& cfg);

/// Metrics of externally supplied predictions; `pred` must cover the protocol times.
MetricReport evaluate_predictions(const Dataset& ds, const PredictionMatrix& pred, const ExperimentConfig& cfg);

/// `ds` must already be in the model's feature space.
MetricReport evaluate(const TrainedModel& model, const Dataset& ds, const ExperimentConfig& cfg);

struct SeedRun {
    std::uint64_t seed = 0;
    MetricReport report;
    std::vector<EpochRecord> curve;
    std::size_t best_epoch = 0;
    double seconds = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0; // population standard deviation over seeds
};

struct RunResult {
    std::vector<SeedRun> runs;
    MetricSummary m_c_td, m_auc, i_nbll;
    double seconds = 0.0;
};

MetricSummary summarize(const std::vector<double>& values);
RunResult summarize_runs(std::vector<SeedRun> runs, double seconds);

void to_json(nlohmann::json& j, const RunResult& r);

/// `seed,metric,value` rows, one per seed and headline metric.
std::string to_csv(const RunResult& r);

RunResult run_suite(const ExperimentConfig& cfg, const PreparedData& data);
RunResult run_suite(const ExperimentConfig& cfg);

enum class SweepParam { lambda, m_samples, alpha };
SweepParam sweep_param_from_string(const std::string& s);
std::string to_string(SweepParam p);

/// Copy of `cfg` with one regularizer field replaced.
ExperimentConfig with_param(const ExperimentConfig& cfg, SweepParam p, double value);

struct SweepResult {
    SweepParam param;
    std::vector<double> values;
    std::vector<RunResult> results; // one per value, same order
};

SweepResult sweep(const ExperimentConfig& cfg, SweepParam p, const std::vector<double>& values);
SweepResult sweep(const ExperimentConfig& cfg, const PreparedData& data, SweepParam p,
                  const std::vector<double>& values);

void to_json(nlohmann::json& j, const SweepResult& s);

/// `param,param_value,seed,metric,value` rows.
std::string to_csv(const SweepResult& s);

/// Index of the sweep point with the highest mean mAUC (first on ties).
std::size_t best_by_mauc(const SweepResult& s);

} // namespace hgp
