#include "hgp/loss_graph.hpp"

#include <cmath>

#include "hgp/error.hpp"

namespace hgp {

namespace {

// Columns of `g` scaled to unit length; zero columns stay zero.
Eigen::MatrixXd unit_columns(const Eigen::MatrixXd& g, Eigen::RowVectorXd& norms) {
    norms = g.colwise().norm();
    Eigen::MatrixXd u = g;
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
        if (norms[c] > 0.0) {
            u.col(c) /= norms[c];
        } else {
            u.col(c).setZero();
        }
    }
    return u;
}

} // namespace

LossGraph::LossGraph(const HazardNetParams& params) : params_(&params) {}

std::vector<ad::Var> LossGraph::hazards(std::span<const double> x, std::span<const double> t_scaled) {
    HazardEvaluator ev(*params_);
    ev.forward(x, t_scaled);
    const auto& h = ev.hazard();
    Call call{Kind::hazard, {x.begin(), x.end()}, {t_scaled.begin(), t_scaled.end()},
              static_cast<std::int64_t>(tape_.size())};
    std::vector<ad::Var> out;
    out.reserve(t_scaled.size());
    for (Eigen::Index k = 0; k < h.size(); ++k) out.push_back(tape_.leaf(h[k], "hazard"));
    calls_.push_back(std::move(call));
    return out;
}

std::vector<ad::Var> LossGraph::grad_x_norms(std::span<const double> x, std::span<const double> t_scaled) {
    HazardEvaluator ev(*params_);
    ev.forward(x, t_scaled);
    Eigen::RowVectorXd norms;
    (void)unit_columns(ev.grad_x(), norms);
    Call call{Kind::grad_norm, {x.begin(), x.end()}, {t_scaled.begin(), t_scaled.end()},
              static_cast<std::int64_t>(tape_.size())};
    std::vector<ad::Var> out;
    out.reserve(t_scaled.size());
    for (Eigen::Index k = 0; k < norms.size(); ++k) out.push_back(tape_.leaf(norms[k], "grad_x_norm"));
    calls_.push_back(std::move(call));
    return out;
}

ad::Var LossGraph::l1_norm() {
    calls_.push_back(Call{Kind::l1, {}, {}, static_cast<std::int64_t>(tape_.size())});
    return tape_.leaf(params_->values().cwiseAbs().sum(), "l1_norm");
}

ad::Var LossGraph::squared_l2_norm() {
    calls_.push_back(Call{Kind::l2, {}, {}, static_cast<std::int64_t>(tape_.size())});
    return tape_.leaf(params_->values().squaredNorm(), "squared_l2_norm");
}

GradientBundle LossGraph::backward(const ad::Var& loss) {
    GradientBundle out;
    out.loss = loss.value();
    out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params_->size()));
    if (loss.is_constant()) return out;
    const auto adj = tape_.adjoints(loss);

    HazardEvaluator ev(*params_);
    for (const auto& call : calls_) {
        if (call.kind == Kind::l1 || call.kind == Kind::l2) {
            const double a = adj[static_cast<std::size_t>(call.first_leaf)];
            const auto& w = params_->values();
            if (call.kind == Kind::l1) {
                out.grad += a * w.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
            } else {
                out.grad += 2.0 * a * w;
            }
            continue;
        }
        const auto n = static_cast<Eigen::Index>(call.t.size());
        Eigen::RowVectorXd seed(n);
        bool any = false;
        for (Eigen::Index k = 0; k < n; ++k) {
            seed[k] = adj[static_cast<std::size_t>(call.first_leaf + k)];
            any = any || seed[k] != 0.0;
        }
        if (!any) continue;
        ev.forward(call.x, call.t);
        if (call.kind == Kind::hazard) {
            ev.backward(seed, nullptr, out.grad);
        } else {
            Eigen::RowVectorXd norms;
            Eigen::MatrixXd u = unit_columns(ev.grad_x(), norms);
            ev.forward_tangent(u);
            Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(n);
            ev.backward(zero, &seed, out.grad);
        }
    }
    if (!out.grad.allFinite()) throw NumericError("non-finite parameter gradient");
    return out;
}

GradientBundle loss_and_param_grad(const HazardNetParams& params,
                                   const std::function<ad::Var(LossGraph&)>& loss) {
    LossGraph graph(params);
    ad::Var value = loss(graph);
    return graph.backward(value);
}

} // namespace hgp
