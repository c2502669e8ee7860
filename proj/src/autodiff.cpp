#include "hgp/autodiff.hpp"

#include <array>
#include <cmath>

#include "hgp/error.hpp"

namespace hgp::ad {

namespace {

Tape* tape_of(std::span<const Var> xs) {
    Tape* found = nullptr;
    for (const auto& x : xs) {
        if (x.tape() == nullptr) continue;
        if (found != nullptr && found != x.tape()) throw ContractError("mixing variables from different tapes");
        found = x.tape();
    }
    return found;
}

Var make(double value, std::span<const Var> parents, std::span<const double> partials, const char* op) {
    Tape* t = tape_of(parents);
    if (t == nullptr) {
        if (!std::isfinite(value)) throw NumericError(std::string("non-finite constant produced by ") + op);
        return Var(value);
    }
    return t->node(value, parents, partials, op);
}

Var unary(const Var& a, double value, double partial, const char* op) {
    std::array<Var, 1> p{a};
    std::array<double, 1> d{partial};
    return make(value, p, d, op);
}

Var binary(const Var& a, const Var& b, double value, double da, double db, const char* op) {
    std::array<Var, 2> p{a, b};
    std::array<double, 2> d{da, db};
    return make(value, p, d, op);
}

} // namespace

Var Tape::leaf(double value, const char* op) { return node(value, {}, {}, op); }

Var Tape::node(double value, std::span<const Var> parents, std::span<const double> partials, const char* op) {
    if (!std::isfinite(value))
        throw NumericError("non-finite value at tape node " + std::to_string(nodes_.size()) + " (" + op + ")");
    Node n{parents_.size(), 0};
    for (std::size_t k = 0; k < parents.size(); ++k) {
        if (parents[k].is_constant()) continue;
        if (parents[k].tape() != this) throw ContractError("parent variable belongs to another tape");
        parents_.push_back(parents[k].index());
        partials_.push_back(partials[k]);
        ++n.count;
    }
    nodes_.push_back(n);
    return Var(this, static_cast<std::int64_t>(nodes_.size() - 1), value);
}

std::vector<double> Tape::adjoints(const Var& output) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    if (output.is_constant()) return adj;
    if (output.tape() != this) throw ContractError("output variable belongs to another tape");
    adj[static_cast<std::size_t>(output.index())] = 1.0;
    for (auto i = static_cast<std::size_t>(output.index()) + 1; i-- > 0;) {
        const double a = adj[i];
        if (a == 0.0) continue;
        const auto& n = nodes_[i];
        for (std::uint32_t k = 0; k < n.count; ++k)
            adj[static_cast<std::size_t>(parents_[n.offset + k])] += a * partials_[n.offset + k];
    }
    return adj;
}

Var operator+(const Var& a, const Var& b) { return binary(a, b, a.value() + b.value(), 1.0, 1.0, "add"); }
Var operator-(const Var& a, const Var& b) { return binary(a, b, a.value() - b.value(), 1.0, -1.0, "sub"); }
Var operator*(const Var& a, const Var& b) {
    return binary(a, b, a.value() * b.value(), b.value(), a.value(), "mul");
}
Var operator/(const Var& a, const Var& b) {
    const double q = a.value() / b.value();
    return binary(a, b, q, 1.0 / b.value(), -q / b.value(), "div");
}
Var operator-(const Var& a) { return unary(a, -a.value(), -1.0, "neg"); }

Var log(const Var& a) { return unary(a, std::log(a.value()), 1.0 / a.value(), "log"); }

Var exp(const Var& a) {
    const double e = std::exp(a.value());
    return unary(a, e, e, "exp");
}

Var log_sigmoid(const Var& a) {
    const double v = a.value();
    // log sigmoid(v) = -softplus(-v); derivative sigmoid(-v)
    const double value = -(std::max(-v, 0.0) + std::log1p(std::exp(-std::abs(v))));
    const double s = v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
    return unary(a, value, s, "log_sigmoid");
}

Var weighted_sum(std::span<const Var> xs, std::span<const double> weights) {
    if (xs.size() != weights.size()) throw ContractError("weighted_sum size mismatch");
    double v = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) v += weights[k] * xs[k].value();
    return make(v, xs, weights, "weighted_sum");
}

Var sum(std::span<const Var> xs) {
    std::vector<double> w(xs.size(), 1.0);
    return weighted_sum(xs, w);
}

Var mean(std::span<const Var> xs) {
    if (xs.empty()) throw ContractError("mean of an empty list");
    std::vector<double> w(xs.size(), 1.0 / static_cast<double>(xs.size()));
    return weighted_sum(xs, w);
}

} // namespace hgp::ad
