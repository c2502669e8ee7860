#include "hgp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "hgp/error.hpp"
#include "hgp/loss_graph.hpp"

namespace hgp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Independent stream per (seed, epoch, batch).
Rng batch_rng(std::uint64_t seed, std::size_t epoch, std::size_t batch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(batch)};
    return Rng(seq);
}

template <typename Fn>
double batched_mean(const Dataset& ds, std::size_t batch_size, Fn&& per_batch) {
    if (batch_size == 0) throw ContractError("batch_size must be positive");
    const auto& recs = ds.records();
    double acc = 0.0;
    std::size_t b = 0;
    for (std::size_t lo = 0; lo < recs.size(); lo += batch_size, ++b) {
        const auto n = std::min(batch_size, recs.size() - lo);
        acc += per_batch(std::span<const SurvivalRecord>(recs.data() + lo, n), b) * static_cast<double>(n);
    }
    return acc / static_cast<double>(recs.size());
}

ModelConfig model_for(const ExperimentConfig& cfg, std::size_t dim) {
    ModelConfig mc = cfg.model;
    mc.input_dim = dim;
    mc.validate();
    return mc;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

void ExperimentConfig::validate() const {
    if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate))
        throw ConfigError("learning_rate must be a finite non-negative real");
    if (!(optimizer.weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
        throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    if (!(optimizer.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (eval_quantiles.empty()) throw ConfigError("eval_quantiles must be non-empty");
    for (double q : eval_quantiles)
        if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("eval_quantiles must lie in [0, 1]");
    if (nbll_points < 2) throw ConfigError("nbll_points must be >= 2");
    if (subdivisions == 0) throw ConfigError("subdivisions must be positive");
    regularizer.validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{
        {"dataset", {{"path", c.dataset_path}, {"time_column", c.columns.time}, {"event_column", c.columns.event}}},
        {"model",
         {{"hidden_dim", c.model.hidden_dim},
          {"n_hidden_layers", c.model.n_hidden_layers},
          {"time_embed_dim", c.model.time_embed_dim},
          {"layer_norm_epsilon", c.model.layer_norm_epsilon}}},
        {"regularizer", c.regularizer},
        {"optimizer",
         {{"learning_rate", c.optimizer.learning_rate},
          {"weight_decay", c.optimizer.weight_decay},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"epsilon", c.optimizer.epsilon}}},
        {"clip_norm", c.clip_norm},
        {"batch_size", c.batch_size},
        {"max_epochs", c.max_epochs},
        {"early_stop_patience", c.early_stop_patience},
        {"seeds", c.seeds},
        {"split_seed", c.split_seed},
        {"split_fractions", c.split_fractions},
        {"eval_quantiles", c.eval_quantiles},
        {"nbll_points", c.nbll_points},
        {"subdivisions", c.subdivisions},
        {"standardize", c.standardize}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    try {
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            c.dataset_path = d.value("path", c.dataset_path);
            c.columns.time = d.value("time_column", c.columns.time);
            c.columns.event = d.value("event_column", c.columns.event);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            c.model.hidden_dim = m.value("hidden_dim", c.model.hidden_dim);
            c.model.n_hidden_layers = m.value("n_hidden_layers", c.model.n_hidden_layers);
            c.model.time_embed_dim = m.value("time_embed_dim", c.model.time_embed_dim);
            c.model.layer_norm_epsilon = m.value("layer_norm_epsilon", c.model.layer_norm_epsilon);
        }
        if (j.contains("regularizer")) c.regularizer = j.at("regularizer").get<RegularizerSpec>();
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
            c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
            c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
            c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
            c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
        }
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
        c.seeds = j.value("seeds", c.seeds);
        c.split_seed = j.value("split_seed", c.split_seed);
        c.split_fractions = j.value("split_fractions", c.split_fractions);
        c.eval_quantiles = j.value("eval_quantiles", c.eval_quantiles);
        c.nbll_points = j.value("nbll_points", c.nbll_points);
        c.subdivisions = j.value("subdivisions", c.subdivisions);
        c.standardize = j.value("standardize", c.standardize);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed experiment config: ") + e.what());
    }
    c.validate();
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return j.get<ExperimentConfig>();
}

AdamW::AdamW(OptimizerConfig cfg, std::size_t n)
    : cfg_(cfg), m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

void AdamW::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
    if (grad.size() != theta.size() || theta.size() != m_.size()) throw ContractError("AdamW: size mismatch");
    ++t_;
    const double lr = cfg_.learning_rate;
    theta *= 1.0 - lr * cfg_.weight_decay;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    theta.array() -= lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.epsilon);
}

double clip_gradient(Eigen::VectorXd& grad, double max_norm) {
    const double norm = grad.norm();
    if (norm > max_norm) grad *= max_norm / norm;
    return norm;
}

PreparedData prepare(const Dataset& raw, const ExperimentConfig& cfg) {
    auto parts = split(raw, cfg.split_fractions, cfg.split_seed);
    auto ts = fit_time_scaler(parts.train);
    if (!cfg.standardize) return PreparedData{parts.train, parts.val, parts.test, ts, std::nullopt};
    auto fs = fit_feature_scaler(parts.train);
    return PreparedData{fs.transform(parts.train), fs.transform(parts.val), fs.transform(parts.test), ts, fs};
}

void to_json(nlohmann::json& j, const TrainedModel& m) {
    j = m.params;
    j["time_scaler"] = m.time_scaler;
    j["feature_scaler"] = m.feature_scaler ? nlohmann::json(*m.feature_scaler) : nlohmann::json(nullptr);
}

TrainedModel trained_model_from_json(const nlohmann::json& j) {
    try {
        std::optional<FeatureScaler> fs;
        if (j.contains("feature_scaler") && !j.at("feature_scaler").is_null())
            fs = feature_scaler_from_json(j.at("feature_scaler"));
        return TrainedModel{params_from_json(j), time_scaler_from_json(j.at("time_scaler")), std::move(fs)};
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("malformed model file: ") + e.what());
    }
}

double dataset_nll(const HazardNetParams& params, const TimeScaler& scaler, const Dataset& ds,
                   std::size_t batch_size, std::size_t subdivisions) {
    return batched_mean(ds, batch_size, [&](std::span<const SurvivalRecord> recs, std::size_t) {
        return nll(params, scaler, Batch::make(recs, subdivisions));
    });
}

double dataset_hgp(const HazardNetParams& params, const TimeScaler& scaler, const Dataset& ds,
                   std::size_t batch_size, std::size_t subdivisions, std::size_t m, std::uint64_t seed) {
    return batched_mean(ds, batch_size, [&](std::span<const SurvivalRecord> recs, std::size_t b) {
        auto rng = batch_rng(seed, 0, b);
        return hgp(params, scaler, Batch::make(recs, subdivisions), m, rng);
    });
}

TrainResult train(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed) {
    cfg.validate();
    const auto mc = model_for(cfg, data.train.dim());
    const auto init = init_params(mc, seed);
    Eigen::VectorXd theta = init.values();
    AdamW opt(cfg.optimizer, init.size());
    Rng shuffle_rng(seed);

    const auto& recs = data.train.records();
    std::vector<std::size_t> order(recs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<SurvivalRecord> batch_recs;

    TrainResult result{TrainedModel{init, data.time_scaler, data.feature_scaler}, {}, 0};
    double best = dataset_nll(init, data.time_scaler, data.val, cfg.batch_size, cfg.subdivisions);
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_acc = 0.0;
        std::size_t b = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size, ++b) {
            const auto hi = std::min(order.size(), lo + cfg.batch_size);
            batch_recs.clear();
            for (std::size_t k = lo; k < hi; ++k) batch_recs.push_back(recs[order[k]]);
            const auto batch = Batch::make(batch_recs, cfg.subdivisions);
            auto rng = batch_rng(seed, epoch, b);
            const auto params = init.with_values(theta);
            GradientBundle gb;
            try {
                gb = loss_and_param_grad(params, [&](LossGraph& g) {
                    return total_loss(g, data.time_scaler, batch, cfg.regularizer, rng);
                });
            } catch (const NumericError& e) {
                throw NumericError("diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                                   ": " + e.what());
            }
            if (!std::isfinite(gb.loss) || !gb.grad.allFinite())
                throw NumericError("non-finite loss or gradient at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b));
            clip_gradient(gb.grad, cfg.clip_norm);
            opt.step(theta, gb.grad);
            loss_acc += gb.loss * static_cast<double>(hi - lo);
        }
        const auto params = init.with_values(theta);
        const double val = dataset_nll(params, data.time_scaler, data.val, cfg.batch_size, cfg.subdivisions);
        if (!std::isfinite(val))
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        result.curve.push_back({epoch, loss_acc / static_cast<double>(order.size()), val});
        if (val < best) {
            best = val;
            result.model.params = params;
            result.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= cfg.early_stop_patience) {
            break;
        }
    }
    return result;
}

PredictionMatrix predict_survival(const HazardNetParams& params, const TimeScaler& scaler, const Dataset& ds,
                                  std::vector<double> times, std::size_t subdivisions) {
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    const auto first_pos = static_cast<std::size_t>(
        std::upper_bound(times.begin(), times.end(), 0.0) - times.begin());
    PredictionMatrix pred;
    pred.times = times;
    pred.surv = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(times.size()));
    if (first_pos == times.size()) return pred;
    TimeGrid grid{std::vector<double>(times.begin() + static_cast<std::ptrdiff_t>(first_pos), times.end()),
                  subdivisions};
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto curve = log_survival_curve(params, scaler, ds[i].x, grid);
        for (std::size_t k = 0; k < curve.log_s.size(); ++k)
            pred.surv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(first_pos + k)) = std::exp(curve.log_s[k]);
    }
    return pred;
}

EvalProtocol protocol_for(const Dataset& ds, const ExperimentConfig& cfg) {
    const auto times = ds.times();
    const auto events = ds.events();
    return make_protocol(times, events, cfg.eval_quantiles, cfg.nbll_points);
}

MetricReport evaluate_predictions(const Dataset& ds, const PredictionMatrix& pred, const ExperimentConfig& cfg) {
    pred.validate();
    const auto times = ds.times();
    const auto events = ds.events();
    return aggregate(times, events, pred, protocol_for(ds, cfg));
}

MetricReport evaluate(const TrainedModel& model, const Dataset& ds, const ExperimentConfig& cfg) {
    const auto protocol = protocol_for(ds, cfg);
    std::vector<double> times = protocol.cindex_times;
    times.insert(times.end(), protocol.nbll_times.begin(), protocol.nbll_times.end());
    const auto pred = predict_survival(model.params, model.time_scaler, ds, std::move(times), cfg.subdivisions);
    const auto t = ds.times();
    const auto e = ds.events();
    return aggregate(t, e, pred, protocol);
}

MetricSummary summarize(const std::vector<double>& values) {
    if (values.empty()) throw ContractError("cannot summarize an empty list");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n)};
}

RunResult summarize_runs(std::vector<SeedRun> runs, double seconds) {
    std::vector<double> c, a, nb;
    for (const auto& r : runs) {
        c.push_back(r.report.m_c_td);
        a.push_back(r.report.m_auc);
        nb.push_back(r.report.i_nbll);
    }
    RunResult out;
    out.m_c_td = summarize(c);
    out.m_auc = summarize(a);
    out.i_nbll = summarize(nb);
    out.runs = std::move(runs);
    out.seconds = seconds;
    return out;
}

void to_json(nlohmann::json& j, const RunResult& r) {
    auto runs = nlohmann::json::array();
    for (const auto& s : r.runs) {
        auto curve = nlohmann::json::array();
        for (const auto& e : s.curve)
            curve.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_nll", e.val_nll}});
        runs.push_back({{"seed", s.seed},
                        {"report", s.report},
                        {"best_epoch", s.best_epoch},
                        {"seconds", s.seconds},
                        {"curve", curve}});
    }
    auto summary = [](const MetricSummary& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}}; };
    j = nlohmann::json{{"m_c_td", summary(r.m_c_td)},
                       {"m_auc", summary(r.m_auc)},
                       {"i_nbll", summary(r.i_nbll)},
                       {"seconds", r.seconds},
                       {"runs", runs}};
}

std::string to_csv(const RunResult& r) {
    std::ostringstream os;
    os << "seed,metric,value\n";
    for (const auto& s : r.runs) {
        os << s.seed << ",m_c_td," << fmt_double(s.report.m_c_td) << '\n';
        os << s.seed << ",m_auc," << fmt_double(s.report.m_auc) << '\n';
        os << s.seed << ",i_nbll," << fmt_double(s.report.i_nbll) << '\n';
    }
    return os.str();
}

RunResult run_suite(const ExperimentConfig& cfg, const PreparedData& data) {
    cfg.validate();
    const auto start = Clock::now();
    std::vector<SeedRun> runs;
    for (auto seed : cfg.seeds) {
        const auto seed_start = Clock::now();
        try {
            auto tr = train(cfg, data, seed);
            auto report = evaluate(tr.model, data.test, cfg);
            runs.push_back({seed, std::move(report), std::move(tr.curve), tr.best_epoch, seconds_since(seed_start)});
        } catch (const Error& e) {
            throw Error(e.kind(), "seed " + std::to_string(seed) + ": " + e.what());
        }
    }
    return summarize_runs(std::move(runs), seconds_since(start));
}

RunResult run_suite(const ExperimentConfig& cfg) {
    cfg.validate();
    return run_suite(cfg, prepare(load_csv(cfg.dataset_path, cfg.columns), cfg));
}

SweepParam sweep_param_from_string(const std::string& s) {
    if (s == "lambda") return SweepParam::lambda;
    if (s == "m_samples" || s == "M" || s == "m") return SweepParam::m_samples;
    if (s == "alpha") return SweepParam::alpha;
    throw ConfigError("unknown sweep parameter '" + s + "' (expected lambda, m_samples or alpha)");
}

std::string to_string(SweepParam p) {
    switch (p) {
    case SweepParam::lambda: return "lambda";
    case SweepParam::m_samples: return "m_samples";
    case SweepParam::alpha: return "alpha";
    }
    return "lambda";
}

ExperimentConfig with_param(const ExperimentConfig& cfg, SweepParam p, double value) {
    ExperimentConfig out = cfg;
    switch (p) {
    case SweepParam::lambda: out.regularizer.lambda = value; break;
    case SweepParam::alpha: out.regularizer.alpha = value; break;
    case SweepParam::m_samples:
        if (!(value >= 1.0) || value != std::floor(value)) throw ConfigError("m_samples values must be integers >= 1");
        out.regularizer.m_samples = static_cast<std::size_t>(value);
        break;
    }
    out.validate();
    return out;
}

SweepResult sweep(const ExperimentConfig& cfg, const PreparedData& data, SweepParam p,
                  const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    SweepResult out{p, values, {}};
    for (double v : values) out.results.push_back(run_suite(with_param(cfg, p, v), data));
    return out;
}

SweepResult sweep(const ExperimentConfig& cfg, SweepParam p, const std::vector<double>& values) {
    cfg.validate();
    return sweep(cfg, prepare(load_csv(cfg.dataset_path, cfg.columns), cfg), p, values);
}

void to_json(nlohmann::json& j, const SweepResult& s) {
    auto points = nlohmann::json::array();
    for (std::size_t k = 0; k < s.values.size(); ++k)
        points.push_back({{"value", s.values[k]}, {"result", s.results[k]}});
    j = nlohmann::json{{"param", to_string(s.param)}, {"points", points}, {"best_by_m_auc", best_by_mauc(s)}};
}

std::string to_csv(const SweepResult& s) {
    std::ostringstream os;
    os << "param,param_value,seed,metric,value\n";
    const auto name = to_string(s.param);
    for (std::size_t k = 0; k < s.values.size(); ++k) {
        std::istringstream rows(to_csv(s.results[k]));
        std::string line;
        std::getline(rows, line); // header
        while (std::getline(rows, line)) os << name << ',' << fmt_double(s.values[k]) << ',' << line << '\n';
    }
    return os.str();
}

std::size_t best_by_mauc(const SweepResult& s) {
    if (s.results.empty()) throw ContractError("empty sweep");
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.results.size(); ++k)
        if (s.results[k].m_auc.mean > s.results[best].m_auc.mean) best = k;
    return best;
}

} // namespace hgp
