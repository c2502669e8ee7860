#include <doctest.h>

#include <cmath>
#include <random>

#include "hgp/error.hpp"
#include "hgp/hazard_model.hpp"
#include "hgp/loss_graph.hpp"
#include "support.hpp"

using namespace hgp;
using namespace testing_support;

namespace {

double norm_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double q : v) s += q * q;
    return std::sqrt(s);
}

} // namespace

TEST_SUITE("hazard_model") {
    TEST_CASE("parameter count for the default wiring with d = 9") {
        // embed 2*8; layer 0: 64*(9+8) + 3*64 + 64*8 + 64; layer 1: 64*64 + 3*64 + 64*8 + 64; out 64 + 1
        const std::size_t by_hand = 16 + (64 * 17 + 192 + 512 + 64) + (64 * 64 + 192 + 512 + 64) + 65;
        CHECK(by_hand == 6801);
        CHECK(parameter_count(model_config(9)) == by_hand);
    }

    TEST_CASE("init is deterministic with zero biases and unit gains") {
        const auto cfg = model_config(9);
        const auto a = init_params(cfg, 11);
        const auto b = init_params(cfg, 11);
        CHECK(a.values() == b.values());
        CHECK(a.values() != init_params(cfg, 12).values());
        const auto& L = a.layout();
        const auto& v = a.values();
        for (std::size_t e = 0; e < cfg.time_embed_dim; ++e) CHECK(v[static_cast<Eigen::Index>(L.embed_bias + e)] == 0.0);
        for (const auto& h : L.hidden) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(h.in_dim));
            for (std::size_t k = 0; k < cfg.hidden_dim; ++k) {
                CHECK(v[static_cast<Eigen::Index>(h.bias + k)] == 0.0);
                CHECK(v[static_cast<Eigen::Index>(h.inject_bias + k)] == 0.0);
                CHECK(v[static_cast<Eigen::Index>(h.ln_gain + k)] == 1.0);
                CHECK(v[static_cast<Eigen::Index>(h.ln_bias + k)] == 0.0);
            }
            for (std::size_t k = 0; k < cfg.hidden_dim * h.in_dim; ++k)
                CHECK(std::abs(v[static_cast<Eigen::Index>(h.weight + k)]) <= bound);
        }
        CHECK(v[static_cast<Eigen::Index>(L.out_bias)] == 0.0);
    }

    TEST_CASE("all-zero parameters give ln 2 everywhere") {
        const auto cfg = model_config(3);
        HazardNetParams p(cfg, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count(cfg))));
        for (double t : {-3.0, 0.0, 2.5}) {
            CHECK(hazard(p, t, std::vector<double>{1.0, -2.0, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
        }
    }

    TEST_CASE("forward pass matches the straight-line reference") {
        std::mt19937_64 rng(5);
        for (std::size_t layers : {1, 2, 3}) {
            const auto cfg = model_config(6, 16, layers, 8);
            for (int rep = 0; rep < 10; ++rep) {
                const auto p = random_params(cfg, 100 + rep);
                const auto x = random_vector(6, rng);
                const double t = random_vector(1, rng)[0];
                const double want = reference_hazard(cfg, p.values(), t, x);
                CHECK(hazard(p, t, x) == doctest::Approx(want).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("batched evaluation agrees with single-point evaluation") {
        const auto cfg = model_config(4);
        const auto p = random_params(cfg, 3);
        std::vector<double> x{0.1, -1.0, 2.0, 0.3};
        std::vector<double> ts{-2.0, -0.5, 0.0, 0.25, 1.0, 4.0};
        HazardEvaluator ev(p);
        ev.forward(x, ts);
        const Eigen::MatrixXd g = ev.grad_x();
        for (std::size_t k = 0; k < ts.size(); ++k) {
            CHECK(ev.hazard()[static_cast<Eigen::Index>(k)] == doctest::Approx(hazard(p, ts[k], x)).epsilon(1e-14));
            const auto gk = grad_x_hazard(p, ts[k], x);
            for (std::size_t i = 0; i < x.size(); ++i)
                CHECK(g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) ==
                      doctest::Approx(gk[i]).epsilon(1e-12));
        }
    }

    TEST_CASE("hazard is positive, also for extreme raw outputs") {
        const auto cfg = model_config(3, 8, 2, 4);
        std::mt19937_64 rng(9);
        for (int rep = 0; rep < 50; ++rep) {
            const auto p = random_params(cfg, 500 + rep, 2.0);
            const auto x = random_vector(3, rng, 5.0);
            const double h = hazard(p, random_vector(1, rng, 10.0)[0], x);
            CHECK(h > 0.0);
            CHECK(std::isfinite(h));
        }
        CHECK(softplus(800.0) == 800.0);
        CHECK(softplus(-800.0) > 0.0);
        CHECK(sigmoid(-800.0) >= 0.0);
        CHECK(sigmoid(800.0) == 1.0);
    }

    TEST_CASE("dimension mismatch is rejected") {
        const auto p = init_params(model_config(3), 0);
        CHECK_THROWS_AS(hazard(p, 0.0, std::vector<double>{1.0, 2.0}), ContractError);
        CHECK_THROWS_AS(grad_x_hazard(p, 0.0, std::vector<double>{1.0, 2.0, 3.0, 4.0}), ContractError);
        CHECK_THROWS_AS(HazardNetParams(model_config(3), Eigen::VectorXd::Zero(5)), ContractError);
    }

    TEST_CASE("covariate gradient vanishes when no weight touches x") {
        const auto cfg = model_config(5);
        auto v = random_params(cfg, 21).values();
        const auto L = ParamLayout::of(cfg);
        const auto& h0 = L.hidden[0];
        for (std::size_t r = 0; r < cfg.hidden_dim; ++r)
            for (std::size_t i = 0; i < cfg.input_dim; ++i) v[static_cast<Eigen::Index>(h0.weight + r * h0.in_dim + i)] = 0.0;
        const HazardNetParams p(cfg, v);
        const auto g = grad_x_hazard(p, 0.3, std::vector<double>{1.0, 2.0, -1.0, 0.5, 0.0});
        for (double gi : g) CHECK(gi == 0.0);
    }

    TEST_CASE("layer-norm fixture has the closed-form value and covariate gradient") {
        LayerNormFixture fx({0.5, -1.5, 2.0}, -0.25);
        const auto p = fx.params();
        std::mt19937_64 rng(2);
        for (int rep = 0; rep < 20; ++rep) {
            const auto x = random_vector(3, rng);
            const double t = random_vector(1, rng)[0];
            CHECK(hazard(p, t, x) == doctest::Approx(fx.hazard(x)).epsilon(1e-13));
            const auto g = grad_x_hazard(p, t, x);
            const auto want = fx.grad(x);
            for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(want[i]).epsilon(1e-12).scale(1e-12));
        }
    }

    TEST_CASE("covariate gradient matches central differences") {
        std::mt19937_64 rng(17);
        const auto cfg = model_config(7);
        for (int rep = 0; rep < 20; ++rep) {
            const auto p = random_params(cfg, 40 + rep);
            const auto x = random_vector(7, rng);
            const double t = random_vector(1, rng)[0];
            const auto g = grad_x_hazard(p, t, x);
            Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(x.data(), 7);
            auto f = [&](const Eigen::VectorXd& xv) {
                return hazard(p, t, std::vector<double>(xv.data(), xv.data() + xv.size()));
            };
            const auto fd = fd_gradient(f, x0, 1e-5);
            if (fd.norm() < 1e-8) continue;
            CHECK(relative_error(Eigen::Map<const Eigen::VectorXd>(g.data(), 7), fd) < 1e-4);
        }
    }

    TEST_CASE("parameter gradient of the hazard matches central differences") {
        std::mt19937_64 rng(23);
        const auto cfg = model_config(4, 16, 2, 8);
        for (int rep = 0; rep < 10; ++rep) {
            const auto p = random_params(cfg, 70 + rep);
            const auto x = random_vector(4, rng);
            const double t = random_vector(1, rng)[0];
            const auto gb = loss_and_param_grad(p, [&](LossGraph& g) {
                return g.hazards(x, std::span<const double>(&t, 1))[0];
            });
            CHECK(gb.loss == doctest::Approx(hazard(p, t, x)).epsilon(1e-15));
            auto f = [&](const Eigen::VectorXd& v) { return hazard(p.with_values(v), t, x); };
            CHECK(relative_error(gb.grad, fd_gradient(f, p.values(), 1e-6)) < 1e-4);
        }
    }

    TEST_CASE("parameter gradient of the covariate-gradient norm matches central differences") {
        std::mt19937_64 rng(29);
        const auto cfg = model_config(4, 16, 2, 8);
        for (int rep = 0; rep < 10; ++rep) {
            const auto p = random_params(cfg, 90 + rep);
            const auto x = random_vector(4, rng);
            const double t = random_vector(1, rng)[0];
            const auto gb = loss_and_param_grad(p, [&](LossGraph& g) {
                return g.grad_x_norms(x, std::span<const double>(&t, 1))[0];
            });
            CHECK(gb.loss == doctest::Approx(norm_of(grad_x_hazard(p, t, x))).epsilon(1e-14));
            auto f = [&](const Eigen::VectorXd& v) { return norm_of(grad_x_hazard(p.with_values(v), t, x)); };
            CHECK(relative_error(gb.grad, fd_gradient(f, p.values(), 1e-6)) < 1e-3);
        }
    }

    TEST_CASE("constant loss has zero gradient") {
        const auto p = init_params(model_config(2), 1);
        const auto gb = loss_and_param_grad(p, [](LossGraph&) { return ad::Var(3.5); });
        CHECK(gb.loss == 3.5);
        CHECK(gb.grad.size() == static_cast<Eigen::Index>(p.size()));
        CHECK(gb.grad.isZero(0.0));
    }

    TEST_CASE("non-finite intermediate names the node") {
        const auto p = init_params(model_config(2), 1);
        const std::vector<double> x{0.0, 1.0};
        const double t = 0.0;
        try {
            (void)loss_and_param_grad(p, [&](LossGraph& g) {
                auto h = g.hazards(x, std::span<const double>(&t, 1))[0];
                return ad::log(h - h);
            });
            FAIL("expected a numeric error");
        } catch (const NumericError& e) {
            const std::string what = e.what();
            CHECK(what.find("node 2") != std::string::npos);
            CHECK(what.find("log") != std::string::npos);
        }
    }

    TEST_CASE("parameters round-trip through JSON") {
        const auto p = random_params(model_config(3, 8, 2, 4), 4);
        const nlohmann::json j = p;
        const auto q = params_from_json(j);
        CHECK(q.values() == p.values());
        CHECK(q.config().hidden_dim == 8);
        CHECK(q.config().time_embed_dim == 4);
        CHECK(q.config().input_dim == 3);
    }
}
