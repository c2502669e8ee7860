#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hgp/dataset.hpp"
#include "hgp/error.hpp"
#include "hgp/experiment.hpp"
#include "hgp/synthetic.hpp"

namespace {

using nlohmann::json;

void emit(const json& j, const std::string& path) {
    if (path.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw hgp::LoadError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

void write_text(const std::string& text, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw hgp::LoadError("cannot write '" + path + "'");
    out << text;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hgp::LoadError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw hgp::LoadError("'" + path + "' is not valid JSON: " + e.what());
    }
}

int fail(const std::string& kind, const std::string& what) {
    std::cerr << json{{"error", what}, {"kind", kind}}.dump() << '\n';
    return 2;
}

const hgp::Dataset& pick(const hgp::Splits& s, const std::string& which) {
    if (which == "train") return s.train;
    if (which == "val") return s.val;
    if (which == "test") return s.test;
    throw hgp::ConfigError("unknown split '" + which + "'");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural survival models with hazard gradient penalty"};
    app.require_subcommand(1);

    std::string csv_path, time_col = "time", event_col = "event";
    auto* stats = app.add_subcommand("stats", "Summary statistics of a survival CSV");
    stats->add_option("csv", csv_path, "Dataset CSV")->required();
    stats->add_option("--time-col", time_col, "Duration column");
    stats->add_option("--event-col", event_col, "Event indicator column");

    std::string config_path, out_path, csv_out;
    std::uint64_t seed = 0;
    auto* train = app.add_subcommand("train", "Train one model and save it with its scalers");
    train->add_option("config", config_path, "Experiment config JSON")->required();
    train->add_option("--seed", seed, "Training seed");
    train->add_option("--out", out_path, "Write the model JSON here instead of stdout");

    std::string model_path, split_name = "test";
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a saved model on a split of the config's dataset");
    evaluate->add_option("model", model_path, "Model JSON from `train`")->required();
    evaluate->add_option("config", config_path, "Experiment config JSON")->required();
    evaluate->add_option("--split", split_name, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    evaluate->add_option("--out", out_path, "Write the report here instead of stdout");

    auto* suite = app.add_subcommand("suite", "Train and evaluate once per configured seed");
    suite->add_option("config", config_path, "Experiment config JSON")->required();
    suite->add_option("--out", out_path, "Write the RunResult JSON here instead of stdout");
    suite->add_option("--csv", csv_out, "Also write seed,metric,value rows");

    std::string param;
    std::vector<double> values;
    auto* sweep = app.add_subcommand("sweep", "Run the suite for each value of one regularizer parameter");
    sweep->add_option("config", config_path, "Experiment config JSON")->required();
    sweep->add_option("--param", param, "lambda, m_samples or alpha")->required();
    sweep->add_option("--values", values, "Values to try")->required()->delimiter(',');
    sweep->add_option("--out", out_path, "Write the sweep JSON here instead of stdout");
    sweep->add_option("--csv", csv_out, "Also write param,param_value,seed,metric,value rows");

    std::size_t n_pairs = 1000, n_lemma = 50;
    std::uint64_t check_seed = 7;
    auto* check = app.add_subcommand("synth-check", "Certify the KL bound and the lemma residual on random pairs");
    check->add_option("--pairs", n_pairs, "Pairs for the KL bound sweep");
    check->add_option("--lemma-pairs", n_lemma, "Pairs for the refinement study");
    check->add_option("--seed", check_seed, "Sweep seed");
    check->add_option("--out", out_path, "Write the JSON result here");

    std::string family = "exponential";
    double rate = 1.0, shape = 1.0, scale = 1.0, censor = 0.3;
    std::size_t n = 1000, noise_dim = 4;
    std::vector<double> weights;
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("synth-generate", "Write a synthetic dataset with a known hazard");
    gen->add_option("--family", family, "exponential, weibull or linear_in_x")
        ->check(CLI::IsMember({"exponential", "weibull", "linear_in_x"}));
    gen->add_option("--rate", rate, "Rate (exponential, linear_in_x)");
    gen->add_option("--shape", shape, "Weibull shape");
    gen->add_option("--scale", scale, "Weibull scale");
    gen->add_option("--weights", weights, "linear_in_x weights")->delimiter(',');
    gen->add_option("--noise-dim", noise_dim, "Covariates for x-independent families");
    gen->add_option("-n,--n", n, "Records");
    gen->add_option("--censor", censor, "Expected censored fraction");
    gen->add_option("--seed", gen_seed, "Seed");
    gen->add_option("--out", out_path, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage_error", e.what());
    }

    try {
        if (*stats) {
            const auto ds = hgp::load_csv(csv_path, hgp::CsvColumns{time_col, event_col});
            json j = hgp::compute_stats(ds);
            j["dataset"] = ds.name();
            emit(j, "");
        } else if (*train) {
            const auto cfg = hgp::load_config(config_path);
            const auto data = hgp::prepare(hgp::load_csv(cfg.dataset_path, cfg.columns), cfg);
            const auto tr = hgp::train(cfg, data, seed);
            json j = tr.model;
            j["best_epoch"] = tr.best_epoch;
            auto curve = json::array();
            for (const auto& e : tr.curve)
                curve.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_nll", e.val_nll}});
            j["curve"] = curve;
            emit(j, out_path);
        } else if (*evaluate) {
            const auto cfg = hgp::load_config(config_path);
            const auto model = hgp::trained_model_from_json(read_json(model_path));
            const auto parts = hgp::split(hgp::load_csv(cfg.dataset_path, cfg.columns), cfg.split_fractions,
                                          cfg.split_seed);
            const auto& raw = pick(parts, split_name);
            const auto ds = model.feature_scaler ? model.feature_scaler->transform(raw) : raw;
            emit(json(hgp::evaluate(model, ds, cfg)), out_path);
        } else if (*suite) {
            const auto result = hgp::run_suite(hgp::load_config(config_path));
            emit(json(result), out_path);
            if (!csv_out.empty()) write_text(hgp::to_csv(result), csv_out);
        } else if (*sweep) {
            const auto cfg = hgp::load_config(config_path);
            const auto result = hgp::sweep(cfg, hgp::sweep_param_from_string(param), values);
            emit(json(result), out_path);
            if (!csv_out.empty()) write_text(hgp::to_csv(result), csv_out);
        } else if (*check) {
            const auto r = hgp::synth::certify(n_pairs, n_lemma, check_seed);
            std::printf("%-28s %-10s %s\n", "check", "result", "detail");
            std::printf("%-28s %-10s violations=%zu/%zu min_slack=%.3e\n", "kl <= bound", r.kl_pass ? "PASS" : "FAIL",
                        r.kl_violations, r.pairs, r.min_slack);
            std::printf("%-28s %-10s pairs=%zu ratio in [%.4f, %.4f]\n", "lemma residual halves",
                        r.lemma_pass ? "PASS" : "FAIL", r.lemma_pairs, r.min_halving_ratio, r.max_halving_ratio);
            if (!out_path.empty())
                emit(json{{"pairs", r.pairs},
                          {"kl_violations", r.kl_violations},
                          {"min_slack", r.min_slack},
                          {"lemma_pairs", r.lemma_pairs},
                          {"min_halving_ratio", r.min_halving_ratio},
                          {"max_halving_ratio", r.max_halving_ratio},
                          {"kl_pass", r.kl_pass},
                          {"lemma_pass", r.lemma_pass}},
                     out_path);
            return r.kl_pass && r.lemma_pass ? 0 : 1;
        } else if (*gen) {
            hgp::synth::ParametricHazard ph;
            if (family == "exponential") {
                ph = hgp::synth::ParametricHazard::exponential(rate, noise_dim);
            } else if (family == "weibull") {
                ph = hgp::synth::ParametricHazard::weibull(shape, scale, noise_dim);
            } else {
                ph = hgp::synth::ParametricHazard::linear_in_x(weights, rate);
            }
            hgp::synth::Rng rng(gen_seed);
            hgp::write_csv(hgp::synth::generate(ph, n, censor, rng), out_path);
        }
    } catch (const hgp::Error& e) {
        return fail(e.kind(), e.what());
    } catch (const std::exception& e) {
        return fail("internal_error", e.what());
    }
    return 0;
}
