#include "hgp/hazard_model.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "hgp/error.hpp"

namespace hgp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMat>;
using MutMat = Eigen::Map<RowMat>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

Eigen::RowVectorXd softplus_row(const Eigen::RowVectorXd& o) {
    return o.unaryExpr([](double v) { return softplus(v); });
}

Eigen::RowVectorXd sigmoid_row(const Eigen::RowVectorXd& o) {
    return o.unaryExpr([](double v) { return sigmoid(v); });
}

} // namespace

// Floored at the smallest normal double so the hazard stays strictly positive
// when exp(v) underflows.
double softplus(double v) noexcept {
    return std::max(std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))), std::numeric_limits<double>::min());
}

double sigmoid(double v) noexcept {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    double e = std::exp(v);
    return e / (1.0 + e);
}

void ModelConfig::validate() const {
    if (input_dim < 1 || hidden_dim < 1 || n_hidden_layers < 1 || time_embed_dim < 1)
        throw ConfigError("model dimensions must all be >= 1");
    if (!(layer_norm_epsilon > 0.0)) throw ConfigError("layer_norm_epsilon must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"input_dim", c.input_dim},
                       {"hidden_dim", c.hidden_dim},
                       {"n_hidden_layers", c.n_hidden_layers},
                       {"time_embed_dim", c.time_embed_dim},
                       {"layer_norm_epsilon", c.layer_norm_epsilon}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.input_dim = j.value("input_dim", c.input_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.n_hidden_layers = j.value("n_hidden_layers", c.n_hidden_layers);
    c.time_embed_dim = j.value("time_embed_dim", c.time_embed_dim);
    c.layer_norm_epsilon = j.value("layer_norm_epsilon", c.layer_norm_epsilon);
}

ParamLayout ParamLayout::of(const ModelConfig& cfg) {
    cfg.validate();
    const auto H = cfg.hidden_dim;
    const auto E = cfg.time_embed_dim;
    ParamLayout L;
    std::size_t off = 0;
    L.embed_weight = off;
    off += E;
    L.embed_bias = off;
    off += E;
    for (std::size_t l = 0; l < cfg.n_hidden_layers; ++l) {
        Hidden h{};
        h.in_dim = l == 0 ? cfg.input_dim + E : H;
        h.weight = off;
        off += H * h.in_dim;
        h.bias = off;
        off += H;
        h.ln_gain = off;
        off += H;
        h.ln_bias = off;
        off += H;
        h.inject_weight = off;
        off += H * E;
        h.inject_bias = off;
        off += H;
        L.hidden.push_back(h);
    }
    L.out_weight = off;
    off += H;
    L.out_bias = off;
    off += 1;
    L.total = off;
    return L;
}

std::size_t parameter_count(const ModelConfig& cfg) { return ParamLayout::of(cfg).total; }

HazardNetParams::HazardNetParams(ModelConfig cfg, Eigen::VectorXd values)
    : cfg_(cfg), layout_(ParamLayout::of(cfg)), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.size()) != layout_.total)
        throw ContractError("parameter vector has " + std::to_string(values_.size()) + " entries, expected " +
                            std::to_string(layout_.total));
    if (!values_.allFinite()) throw NumericError("parameter vector contains non-finite entries");
}

HazardNetParams HazardNetParams::with_values(Eigen::VectorXd values) const {
    return HazardNetParams(cfg_, std::move(values));
}

HazardNetParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    const auto L = ParamLayout::of(cfg);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.total));
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t off, std::size_t count, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t k = 0; k < count; ++k) v[static_cast<Eigen::Index>(off + k)] = dist(rng);
    };
    const auto H = cfg.hidden_dim;
    const auto E = cfg.time_embed_dim;
    fill(L.embed_weight, E, 1);
    for (const auto& h : L.hidden) {
        fill(h.weight, H * h.in_dim, h.in_dim);
        for (std::size_t k = 0; k < H; ++k) v[static_cast<Eigen::Index>(h.ln_gain + k)] = 1.0;
        fill(h.inject_weight, H * E, E);
    }
    fill(L.out_weight, H, H);
    return HazardNetParams(cfg, std::move(v));
}

void to_json(nlohmann::json& j, const HazardNetParams& p) {
    j = nlohmann::json{{"model", p.config()},
                       {"params", std::vector<double>(p.values().data(), p.values().data() + p.values().size())}};
}

HazardNetParams params_from_json(const nlohmann::json& j) {
    auto cfg = j.at("model").get<ModelConfig>();
    auto flat = j.at("params").get<std::vector<double>>();
    return HazardNetParams(cfg, ConstVec(flat.data(), static_cast<Eigen::Index>(flat.size())));
}

HazardEvaluator::HazardEvaluator(const HazardNetParams& params) : params_(&params) {}

void HazardEvaluator::forward(std::span<const double> x, std::span<const double> t_scaled) {
    const auto& cfg = params_->config();
    const auto& L = params_->layout();
    if (x.size() != cfg.input_dim)
        throw ContractError("covariate dimension " + std::to_string(x.size()) + " does not match model input " +
                            std::to_string(cfg.input_dim));
    const double* p = params_->values().data();
    const auto H = static_cast<Eigen::Index>(cfg.hidden_dim);
    const auto E = static_cast<Eigen::Index>(cfg.time_embed_dim);
    const auto d = static_cast<Eigen::Index>(cfg.input_dim);
    const auto N = static_cast<Eigen::Index>(t_scaled.size());
    const double eps = cfg.layer_norm_epsilon;

    x_ = ConstVec(x.data(), d);
    t_ = Eigen::Map<const Eigen::RowVectorXd>(t_scaled.data(), N);
    z_ = ConstVec(p + L.embed_weight, E) * t_;
    z_.colwise() += ConstVec(p + L.embed_bias, E);

    layers_.resize(L.hidden.size());
    for (std::size_t l = 0; l < L.hidden.size(); ++l) {
        const auto& hl = L.hidden[l];
        auto& cache = layers_[l];
        ConstMat W(p + hl.weight, H, static_cast<Eigen::Index>(hl.in_dim));
        Eigen::MatrixXd a;
        if (l == 0) {
            a.noalias() = W.rightCols(E) * z_;
            a.colwise() += W.leftCols(d) * x_;
        } else {
            a.noalias() = W * layers_[l - 1].out;
        }
        a.colwise() += ConstVec(p + hl.bias, H);
        Eigen::RowVectorXd mu = a.colwise().mean();
        a.rowwise() -= mu;
        Eigen::RowVectorXd var = a.array().square().colwise().mean();
        cache.sigma = (var.array() + eps).sqrt();
        cache.a_hat = a.array().rowwise() / cache.sigma.array();
        cache.c = cache.a_hat.array().colwise() * ConstVec(p + hl.ln_gain, H).array();
        cache.c.colwise() += ConstVec(p + hl.ln_bias, H) + ConstVec(p + hl.inject_bias, H);
        cache.c.noalias() += ConstMat(p + hl.inject_weight, H, E) * z_;
        cache.out = cache.c.cwiseMax(0.0);
    }
    o_.noalias() = ConstVec(p + L.out_weight, H).transpose() * layers_.back().out;
    o_.array() += p[L.out_bias];
    h_ = softplus_row(o_);
    has_tangent_ = false;
}

void HazardEvaluator::forward_tangent(const Eigen::MatrixXd& u) {
    const auto& cfg = params_->config();
    const auto& L = params_->layout();
    const double* p = params_->values().data();
    const auto H = static_cast<Eigen::Index>(cfg.hidden_dim);
    const auto d = static_cast<Eigen::Index>(cfg.input_dim);
    if (u.rows() != d || u.cols() != t_.size()) throw ContractError("tangent direction has wrong shape");
    u_ = u;
    for (std::size_t l = 0; l < L.hidden.size(); ++l) {
        const auto& hl = L.hidden[l];
        auto& cache = layers_[l];
        ConstMat W(p + hl.weight, H, static_cast<Eigen::Index>(hl.in_dim));
        if (l == 0) {
            cache.d_dot.noalias() = W.leftCols(d) * u_;
        } else {
            cache.d_dot.noalias() = W * layers_[l - 1].out_dot;
        }
        Eigen::RowVectorXd m = cache.d_dot.colwise().mean();
        cache.d_dot.rowwise() -= m;
        cache.kappa = (cache.a_hat.array() * cache.d_dot.array()).colwise().mean();
        cache.a_hat_dot = (cache.d_dot.array() - cache.a_hat.array().rowwise() * cache.kappa.array()).rowwise() /
                          cache.sigma.array();
        cache.out_dot = (cache.a_hat_dot.array().colwise() * ConstVec(p + hl.ln_gain, H).array()) *
                        (cache.c.array() >= 0.0).cast<double>();
    }
    o_dot_.noalias() = ConstVec(p + L.out_weight, H).transpose() * layers_.back().out_dot;
    h_dot_ = sigmoid_row(o_).cwiseProduct(o_dot_);
    has_tangent_ = true;
}

Eigen::MatrixXd HazardEvaluator::grad_x() {
    Eigen::MatrixXd cols;
    Eigen::RowVectorXd ones = Eigen::RowVectorXd::Ones(t_.size());
    backward_impl(ones, nullptr, nullptr, &cols);
    return cols;
}

void HazardEvaluator::backward(const Eigen::RowVectorXd& h_bar, const Eigen::RowVectorXd* h_dot_bar,
                               Eigen::Ref<Eigen::VectorXd> param_grad) {
    if (static_cast<std::size_t>(param_grad.size()) != params_->size())
        throw ContractError("gradient buffer has wrong length");
    if (h_dot_bar != nullptr && !has_tangent_) throw ContractError("backward through tangent without forward_tangent");
    backward_impl(h_bar, h_dot_bar, param_grad.data(), nullptr);
}

void HazardEvaluator::backward_impl(const Eigen::RowVectorXd& h_bar, const Eigen::RowVectorXd* h_dot_bar,
                                    double* grad, Eigen::MatrixXd* x_bar_cols) {
    const auto& cfg = params_->config();
    const auto& L = params_->layout();
    const double* p = params_->values().data();
    const auto H = static_cast<Eigen::Index>(cfg.hidden_dim);
    const auto E = static_cast<Eigen::Index>(cfg.time_embed_dim);
    const auto d = static_cast<Eigen::Index>(cfg.input_dim);
    const auto N = t_.size();
    const auto Hd = static_cast<double>(cfg.hidden_dim);
    const bool tangent = h_dot_bar != nullptr;

    const Eigen::RowVectorXd sig = sigmoid_row(o_);
    Eigen::RowVectorXd o_bar = h_bar.cwiseProduct(sig);
    Eigen::RowVectorXd o_dot_bar;
    if (tangent) {
        o_bar.array() += h_dot_bar->array() * sig.array() * (1.0 - sig.array()) * o_dot_.array();
        o_dot_bar = h_dot_bar->cwiseProduct(sig);
    }
    ConstVec w_out(p + L.out_weight, H);
    if (grad != nullptr) {
        MutVec g_out(grad + L.out_weight, H);
        g_out.noalias() += layers_.back().out * o_bar.transpose();
        if (tangent) g_out.noalias() += layers_.back().out_dot * o_dot_bar.transpose();
        grad[L.out_bias] += o_bar.sum();
    }
    Eigen::MatrixXd r_bar = w_out * o_bar;
    Eigen::MatrixXd r_dot_bar;
    if (tangent) r_dot_bar = w_out * o_dot_bar;

    Eigen::MatrixXd z_bar = Eigen::MatrixXd::Zero(E, N);
    for (std::size_t li = L.hidden.size(); li-- > 0;) {
        const auto& hl = L.hidden[li];
        const auto& cache = layers_[li];
        ConstVec gain(p + hl.ln_gain, H);
        ConstMat inject(p + hl.inject_weight, H, E);
        ConstMat W(p + hl.weight, H, static_cast<Eigen::Index>(hl.in_dim));
        const auto mask = (cache.c.array() >= 0.0).cast<double>();

        Eigen::MatrixXd c_bar = r_bar.array() * mask;
        if (grad != nullptr) {
            MutVec(grad + hl.ln_gain, H) += (c_bar.array() * cache.a_hat.array()).rowwise().sum().matrix();
            MutVec(grad + hl.ln_bias, H) += c_bar.rowwise().sum();
            MutMat(grad + hl.inject_weight, H, E).noalias() += c_bar * z_.transpose();
            MutVec(grad + hl.inject_bias, H) += c_bar.rowwise().sum();
        }
        z_bar.noalias() += inject.transpose() * c_bar;
        Eigen::MatrixXd a_hat_bar = c_bar.array().colwise() * gain.array();

        Eigen::RowVectorXd sigma_bar = Eigen::RowVectorXd::Zero(N);
        Eigen::MatrixXd a_dot_bar;
        if (tangent) {
            Eigen::MatrixXd c_dot_bar = r_dot_bar.array() * mask;
            if (grad != nullptr)
                MutVec(grad + hl.ln_gain, H) +=
                    (c_dot_bar.array() * cache.a_hat_dot.array()).rowwise().sum().matrix();
            Eigen::MatrixXd q = c_dot_bar.array().colwise() * gain.array();
            Eigen::RowVectorXd kappa_bar =
                -((q.array() * cache.a_hat.array()).colwise().sum() / cache.sigma.array()).matrix();
            Eigen::MatrixXd d_dot_bar = q.array().rowwise() / cache.sigma.array();
            d_dot_bar.array() += cache.a_hat.array().rowwise() * (kappa_bar.array() / Hd);
            a_hat_bar.array() -= q.array().rowwise() * (cache.kappa.array() / cache.sigma.array());
            a_hat_bar.array() += cache.d_dot.array().rowwise() * (kappa_bar.array() / Hd);
            sigma_bar = -((q.array() * cache.a_hat_dot.array()).colwise().sum() / cache.sigma.array()).matrix();
            Eigen::RowVectorXd mean_ddb = d_dot_bar.colwise().mean();
            a_dot_bar = d_dot_bar.rowwise() - mean_ddb;
        }

        Eigen::RowVectorXd sigma_total =
            sigma_bar.array() - (a_hat_bar.array() * cache.a_hat.array()).colwise().sum() / cache.sigma.array();
        Eigen::MatrixXd d_bar = a_hat_bar.array().rowwise() / cache.sigma.array();
        d_bar.array() += cache.a_hat.array().rowwise() * (sigma_total.array() / Hd);
        Eigen::RowVectorXd mean_db = d_bar.colwise().mean();
        Eigen::MatrixXd a_bar = d_bar.rowwise() - mean_db;

        if (li > 0) {
            const auto& prev = layers_[li - 1];
            if (grad != nullptr) {
                MutMat gW(grad + hl.weight, H, static_cast<Eigen::Index>(hl.in_dim));
                gW.noalias() += a_bar * prev.out.transpose();
                if (tangent) gW.noalias() += a_dot_bar * prev.out_dot.transpose();
                MutVec(grad + hl.bias, H) += a_bar.rowwise().sum();
            }
            r_bar.noalias() = W.transpose() * a_bar;
            if (tangent) r_dot_bar.noalias() = W.transpose() * a_dot_bar;
        } else {
            if (grad != nullptr) {
                MutMat gW(grad + hl.weight, H, static_cast<Eigen::Index>(hl.in_dim));
                gW.leftCols(d).noalias() += a_bar.rowwise().sum() * x_.transpose();
                if (tangent) gW.leftCols(d).noalias() += a_dot_bar * u_.transpose();
                gW.rightCols(E).noalias() += a_bar * z_.transpose();
                MutVec(grad + hl.bias, H) += a_bar.rowwise().sum();
            }
            z_bar.noalias() += W.rightCols(E).transpose() * a_bar;
            if (x_bar_cols != nullptr) *x_bar_cols = W.leftCols(d).transpose() * a_bar;
        }
    }
    if (grad != nullptr) {
        MutVec(grad + L.embed_weight, E).noalias() += z_bar * t_.transpose();
        MutVec(grad + L.embed_bias, E) += z_bar.rowwise().sum();
    }
}

double hazard(const HazardNetParams& params, double t_scaled, std::span<const double> x) {
    HazardEvaluator ev(params);
    ev.forward(x, std::span<const double>(&t_scaled, 1));
    return ev.hazard()[0];
}

std::vector<double> grad_x_hazard(const HazardNetParams& params, double t_scaled, std::span<const double> x) {
    HazardEvaluator ev(params);
    ev.forward(x, std::span<const double>(&t_scaled, 1));
    Eigen::MatrixXd g = ev.grad_x();
    return std::vector<double>(g.data(), g.data() + g.size());
}

} // namespace hgp
