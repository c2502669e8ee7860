#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hgp/error.hpp"
#include "hgp/experiment.hpp"
#include "hgp/synthetic.hpp"

using namespace hgp;

namespace {

Dataset exponential_data(std::size_t n, double censor, std::uint64_t seed) {
    synth::Rng rng(seed);
    return synth::generate(synth::ParametricHazard::exponential(1.0), n, censor, rng);
}

// Small network and short schedule for tests that exercise plumbing only.
ExperimentConfig quick_config() {
    ExperimentConfig cfg;
    cfg.model.hidden_dim = 8;
    cfg.model.time_embed_dim = 4;
    cfg.batch_size = 32;
    cfg.max_epochs = 3;
    cfg.nbll_points = 20;
    return cfg;
}

double mean_hazard_at(const TrainedModel& m, const Dataset& ds, double t) {
    double acc = 0.0;
    for (const auto& r : ds.records()) acc += hazard(m.params, m.time_scaler.scale(t), r.x);
    return acc / static_cast<double>(ds.size());
}

} // namespace

TEST_SUITE("experiment") {
    TEST_CASE("AdamW matches a hand computation") {
        OptimizerConfig oc;
        oc.learning_rate = 0.1;
        oc.weight_decay = 0.01;
        AdamW opt(oc, 2);
        Eigen::VectorXd theta(2), g1(2), g2(2);
        theta << 1.0, -2.0;
        g1 << 0.5, -3.0;
        g2 << -1.0, 2.0;

        Eigen::VectorXd want = theta;
        Eigen::VectorXd m = Eigen::VectorXd::Zero(2), v = Eigen::VectorXd::Zero(2);
        int t = 0;
        for (const Eigen::VectorXd& g : {g1, g2}) {
            ++t;
            for (Eigen::Index k = 0; k < 2; ++k) {
                want[k] *= 1.0 - 0.1 * 0.01;
                m[k] = 0.9 * m[k] + 0.1 * g[k];
                v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
                const double mh = m[k] / (1.0 - std::pow(0.9, t));
                const double vh = v[k] / (1.0 - std::pow(0.999, t));
                want[k] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
            }
            opt.step(theta, g);
        }
        CHECK(opt.steps() == 2);
        CHECK(theta[0] == doctest::Approx(want[0]).epsilon(1e-14));
        CHECK(theta[1] == doctest::Approx(want[1]).epsilon(1e-14));
        // the first step moves each coordinate by lr in the direction of -sign(g)
        AdamW fresh(oc, 1);
        Eigen::VectorXd one = Eigen::VectorXd::Constant(1, 0.0);
        fresh.step(one, Eigen::VectorXd::Constant(1, 123.0));
        CHECK(one[0] == doctest::Approx(-0.1).epsilon(1e-9));
    }

    TEST_CASE("gradient clipping rescales to the bound") {
        Eigen::VectorXd g(2);
        g << 3.0, 4.0;
        CHECK(clip_gradient(g, 1.0) == 5.0);
        CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(g[0] == doctest::Approx(0.6));
        CHECK(g[1] == doctest::Approx(0.8));
        Eigen::VectorXd small(2);
        small << 0.3, 0.4;
        CHECK(clip_gradient(small, 1.0) == doctest::Approx(0.5));
        CHECK(small[0] == 0.3);
        CHECK(small[1] == 0.4);
    }

    TEST_CASE("zero learning rate leaves parameters unchanged") {
        OptimizerConfig oc;
        oc.learning_rate = 0.0;
        AdamW opt(oc, 3);
        Eigen::VectorXd theta(3);
        theta << 0.1, -0.2, 0.3;
        const Eigen::VectorXd before = theta;
        for (int k = 0; k < 50; ++k) opt.step(theta, Eigen::VectorXd::Constant(3, 1.0 + k));
        CHECK(theta == before);

        auto cfg = quick_config();
        cfg.optimizer.learning_rate = 0.0;
        cfg.max_epochs = 4;
        cfg.early_stop_patience = 10;
        const auto data = prepare(exponential_data(120, 0.2, 3), cfg);
        const auto res = train(cfg, data, 5);
        CHECK(res.curve.size() == 4);
        for (const auto& e : res.curve) CHECK(e.val_nll == res.curve.front().val_nll);
        CHECK(res.best_epoch == 0);
        CHECK(res.model.params.values() == init_params(res.model.params.config(), 5).values());
    }

    TEST_CASE("training recovers a constant hazard on 200-record datasets") {
        // With 140 training records the rate estimate itself has a standard
        // error near 8.5%, so the check averages five independent datasets.
        ExperimentConfig cfg;
        cfg.batch_size = 32;
        double total = 0.0;
        for (std::uint64_t s = 1; s <= 5; ++s) {
            const auto raw = exponential_data(200, 0.0, s);
            const auto data = prepare(raw, cfg);
            const auto res = train(cfg, data, 0);
            const double med = quantile(raw.times(), 0.5);
            const double h = mean_hazard_at(res.model, data.train, med);
            MESSAGE("dataset " << s << ": mean h(median) = " << h << ", best epoch " << res.best_epoch);
            total += h;
        }
        CHECK(std::abs(total / 5.0 - 1.0) < 0.1);
    }

    TEST_CASE("training is deterministic") {
        auto cfg = quick_config();
        cfg.regularizer = {RegularizerKind::hgp, 10.0, 0.0, 3};
        const auto data = prepare(exponential_data(100, 0.3, 8), cfg);
        const auto a = train(cfg, data, 2);
        const auto b = train(cfg, data, 2);
        CHECK(a.model.params.values() == b.model.params.values());
        REQUIRE(a.curve.size() == b.curve.size());
        for (std::size_t k = 0; k < a.curve.size(); ++k) {
            CHECK(a.curve[k].train_loss == b.curve[k].train_loss);
            CHECK(a.curve[k].val_nll == b.curve[k].val_nll);
        }
        CHECK(train(cfg, data, 3).model.params.values() != a.model.params.values());
    }

    TEST_CASE("prepare standardizes on the training split") {
        ExperimentConfig cfg;
        const auto data = prepare(exponential_data(300, 0.3, 4), cfg);
        CHECK(data.train.size() == 210);
        CHECK(data.val.size() == 30);
        CHECK(data.test.size() == 60);
        REQUIRE(data.feature_scaler.has_value());
        for (std::size_t j = 0; j < data.train.dim(); ++j) {
            double mean = 0.0;
            for (const auto& r : data.train.records()) mean += r.x[j];
            CHECK(std::abs(mean / 210.0) < 1e-12);
        }
        cfg.standardize = false;
        CHECK_FALSE(prepare(exponential_data(300, 0.3, 4), cfg).feature_scaler.has_value());
    }

    TEST_CASE("oracle predictions pass straight through to the metrics") {
        ExperimentConfig cfg;
        const auto ds = exponential_data(80, 0.3, 21);
        const auto proto = protocol_for(ds, cfg);
        CHECK(proto.cindex_times.size() == 9);
        CHECK(proto.nbll_times.size() == 100);
        std::vector<double> times(proto.cindex_times);
        times.insert(times.end(), proto.nbll_times.begin(), proto.nbll_times.end());
        std::sort(times.begin(), times.end());
        times.erase(std::unique(times.begin(), times.end()), times.end());
        // x-dependent oracle so orderings are not all ties
        PredictionMatrix pred{times, Eigen::MatrixXd(static_cast<Eigen::Index>(ds.size()),
                                                     static_cast<Eigen::Index>(times.size()))};
        for (std::size_t i = 0; i < ds.size(); ++i)
            for (std::size_t c = 0; c < times.size(); ++c)
                pred.surv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                    std::exp(-std::exp(0.3 * ds[i].x[0]) * times[c]);
        const auto r = evaluate_predictions(ds, pred, cfg);

        const auto T = ds.times();
        const auto e = ds.events();
        const auto g = km_censoring(T, e);
        double c_sum = 0.0;
        int c_n = 0;
        for (double t : proto.cindex_times) {
            std::vector<Subject> subj;
            const auto col = static_cast<Eigen::Index>(pred.column_of(t));
            for (std::size_t i = 0; i < ds.size(); ++i)
                subj.push_back({T[i], e[i], pred.surv(static_cast<Eigen::Index>(i), col)});
            if (auto c = c_td_at(t, subj, g)) c_sum += *c, ++c_n;
        }
        CHECK(r.m_c_td == doctest::Approx(c_sum / c_n).epsilon(1e-12));
        const auto direct = aggregate(T, e, pred, proto);
        CHECK(r.m_auc == direct.m_auc);
        CHECK(r.i_nbll == direct.i_nbll);
    }

    TEST_CASE("identical models give identical reports") {
        auto cfg = quick_config();
        const auto data = prepare(exponential_data(100, 0.3, 13), cfg);
        const auto res = train(cfg, data, 1);
        const auto copy = trained_model_from_json(nlohmann::json(res.model));
        const auto a = evaluate(res.model, data.test, cfg);
        const auto b = evaluate(copy, data.test, cfg);
        CHECK(a.m_c_td == b.m_c_td);
        CHECK(a.m_auc == b.m_auc);
        CHECK(a.i_nbll == b.i_nbll);
        CHECK(a.per_time.size() == 9);
    }

    TEST_CASE("predicted survival matches the integrator") {
        auto cfg = quick_config();
        const auto data = prepare(exponential_data(60, 0.3, 14), cfg);
        const auto p = init_params(ModelConfig{data.train.dim(), 8, 2, 4}, 3);
        const auto pred = predict_survival(p, data.time_scaler, data.test, {2.0, 0.0, 0.5, 2.0, -1.0}, 8);
        CHECK(pred.times == std::vector<double>{-1.0, 0.0, 0.5, 2.0});
        pred.validate();
        const TimeGrid grid{{0.5, 2.0}, 8};
        for (std::size_t i = 0; i < data.test.size(); ++i) {
            const auto curve = log_survival_curve(p, data.time_scaler, data.test[i].x, grid);
            const auto row = static_cast<Eigen::Index>(i);
            CHECK(pred.surv(row, 0) == 1.0);
            CHECK(pred.surv(row, 1) == 1.0);
            CHECK(pred.surv(row, 2) == doctest::Approx(std::exp(curve.log_s[0])).epsilon(1e-14));
            CHECK(pred.surv(row, 3) == doctest::Approx(std::exp(curve.log_s[1])).epsilon(1e-14));
        }
    }

    TEST_CASE("single-seed suite has zero spread") {
        auto cfg = quick_config();
        cfg.seeds = {7};
        const auto data = prepare(exponential_data(100, 0.3, 15), cfg);
        const auto r = run_suite(cfg, data);
        REQUIRE(r.runs.size() == 1);
        CHECK(r.runs[0].seed == 7);
        CHECK(r.m_c_td.mean == r.runs[0].report.m_c_td);
        CHECK(r.m_auc.mean == r.runs[0].report.m_auc);
        CHECK(r.i_nbll.mean == r.runs[0].report.i_nbll);
        CHECK(r.m_c_td.std == 0.0);
        CHECK(r.m_auc.std == 0.0);
        CHECK(r.i_nbll.std == 0.0);
    }

    TEST_CASE("summaries are recomputable from per-seed values") {
        const auto s = summarize({0.61, 0.7, 0.74, 0.69, 0.8});
        const double mean = (0.61 + 0.7 + 0.74 + 0.69 + 0.8) / 5.0;
        double var = 0.0;
        for (double v : {0.61, 0.7, 0.74, 0.69, 0.8}) var += (v - mean) * (v - mean) / 5.0;
        CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
        CHECK(s.std == doctest::Approx(std::sqrt(var)).epsilon(1e-12));

        std::vector<SeedRun> runs;
        for (int k = 0; k < 3; ++k) {
            SeedRun sr;
            sr.seed = static_cast<std::uint64_t>(k);
            sr.report.m_c_td = 0.6 + 0.05 * k;
            sr.report.m_auc = 0.7 - 0.02 * k;
            sr.report.i_nbll = 0.2 + 0.01 * k * k;
            runs.push_back(sr);
        }
        const auto r = summarize_runs(runs, 1.5);
        CHECK(r.m_c_td.mean == doctest::Approx(0.65).epsilon(1e-12));
        CHECK(r.m_auc.mean == doctest::Approx(0.68).epsilon(1e-12));
        CHECK(r.i_nbll.std == doctest::Approx(summarize({0.2, 0.21, 0.24}).std).epsilon(1e-12));
        const auto csv = to_csv(r);
        CHECK(csv.rfind("seed,metric,value\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 3);
        const nlohmann::json j = r;
        CHECK(j.at("runs").size() == 3);
    }

    TEST_CASE("lambda sweep yields one result per value in order") {
        auto cfg = quick_config();
        cfg.seeds = {0};
        cfg.max_epochs = 1;
        cfg.regularizer = {RegularizerKind::hgp, 10.0, 0.0, 2};
        const auto data = prepare(exponential_data(80, 0.3, 16), cfg);
        const std::vector<double> values{1, 5, 10, 50};
        const auto s = sweep(cfg, data, SweepParam::lambda, values);
        CHECK(s.values == values);
        REQUIRE(s.results.size() == 4);
        for (const auto& r : s.results) CHECK(r.runs.size() == 1);
        // lambda only enters the loss, so different values train differently
        CHECK(s.results[0].runs[0].curve[0].train_loss != s.results[3].runs[0].curve[0].train_loss);
        const auto csv = to_csv(s);
        CHECK(csv.rfind("param,param_value,seed,metric,value\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * 3);
    }

    TEST_CASE("sweep parameters and best-by-mAUC selection") {
        ExperimentConfig cfg;
        CHECK(with_param(cfg, SweepParam::lambda, 5.0).regularizer.lambda == 5.0);
        CHECK(with_param(cfg, SweepParam::m_samples, 10.0).regularizer.m_samples == 10);
        CHECK(with_param(cfg, SweepParam::alpha, 1e-3).regularizer.alpha == 1e-3);
        CHECK(sweep_param_from_string("M") == SweepParam::m_samples);
        CHECK(sweep_param_from_string("alpha") == SweepParam::alpha);
        CHECK_THROWS_AS((void)sweep_param_from_string("beta"), ConfigError);

        SweepResult s{SweepParam::alpha, {1e-1, 1e-2, 1e-3}, {}};
        for (double auc : {0.71, 0.74, 0.74}) {
            RunResult r;
            r.m_auc.mean = auc;
            s.results.push_back(r);
        }
        CHECK(best_by_mauc(s) == 1);
        const nlohmann::json j = s;
        CHECK(j.at("best_by_m_auc").get<std::size_t>() == 1);
        CHECK(j.at("points").at(1).at("value").get<double>() == 1e-2);
    }

    TEST_CASE("a failing seed is named in the suite error") {
        auto cfg = quick_config();
        cfg.seeds = {7};
        cfg.max_epochs = 1;
        // the test split loses its events: training works, evaluation cannot
        auto data = prepare(exponential_data(60, 0.3, 1), cfg);
        std::vector<SurvivalRecord> recs(data.test.records());
        for (auto& r : recs) r.e = 0;
        data.test = Dataset(recs, data.test.feature_names(), "censored");
        try {
            (void)run_suite(cfg, data);
            FAIL("expected the suite to fail");
        } catch (const std::exception& e) {
            CHECK(std::string(e.what()).find("seed 7") != std::string::npos);
        }
    }

    TEST_CASE("config JSON round trip and validation") {
        ExperimentConfig cfg;
        cfg.dataset_path = "data/metabric.csv";
        cfg.columns.time = "duration";
        cfg.regularizer = {RegularizerKind::hgp, 5.0, 0.0, 10};
        cfg.seeds = {3, 4};
        cfg.optimizer.weight_decay = 0.0;
        const nlohmann::json j = cfg;
        const auto back = j.get<ExperimentConfig>();
        CHECK(back.dataset_path == cfg.dataset_path);
        CHECK(back.columns.time == "duration");
        CHECK(back.regularizer.lambda == 5.0);
        CHECK(back.regularizer.m_samples == 10);
        CHECK(back.seeds == cfg.seeds);
        CHECK(back.optimizer.weight_decay == 0.0);
        CHECK(back.split_seed == 42);
        CHECK(nlohmann::json(back) == j);

        const auto path = std::filesystem::temp_directory_path() / "hgp_config_roundtrip.json";
        std::ofstream(path) << j.dump(2);
        CHECK(nlohmann::json(load_config(path.string())) == j);
        std::filesystem::remove(path);

        auto bad = cfg;
        bad.clip_norm = 0.0;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = cfg;
        bad.seeds.clear();
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = cfg;
        bad.optimizer.learning_rate = -1.0;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        CHECK_THROWS_AS((void)load_config("/nonexistent/config.json"), std::exception);
    }
}
