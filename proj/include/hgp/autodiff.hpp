#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hgp::ad {

class Tape;

/// Scalar handle on a Tape node. A default or double-constructed Var is a
/// constant that does not live on any tape.
class Var {
public:
    Var() = default;
    Var(double constant) : value_(constant) {} // NOLINT(google-explicit-constructor)

    [[nodiscard]] double value() const noexcept { return value_; }
    [[nodiscard]] bool is_constant() const noexcept { return tape_ == nullptr; }
    [[nodiscard]] std::int64_t index() const noexcept { return index_; }
    [[nodiscard]] Tape* tape() const noexcept { return tape_; }

private:
    friend class Tape;
    Var(Tape* tape, std::int64_t index, double value) : value_(value), index_(index), tape_(tape) {}

    double value_ = 0.0;
    std::int64_t index_ = -1;
    Tape* tape_ = nullptr;
};

/// Reverse-mode tape of n-ary nodes with stored local partials.
class Tape {
public:
    Var leaf(double value, const char* op = "leaf");

    /// New node with the given value and d(node)/d(parent_k) = partials[k].
    /// Constant parents are skipped. Throws NumericError on a non-finite value.
    Var node(double value, std::span<const Var> parents, std::span<const double> partials, const char* op);

    /// Adjoint of `output` with respect to every node on the tape.
    [[nodiscard]] std::vector<double> adjoints(const Var& output) const;

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        std::size_t offset;
        std::uint32_t count;
    };
    std::vector<Node> nodes_;
    std::vector<std::int64_t> parents_;
    std::vector<double> partials_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var log(const Var& a);
Var exp(const Var& a);
/// log(sigmoid(a)), stable for large |a|.
Var log_sigmoid(const Var& a);
Var sum(std::span<const Var> xs);
Var mean(std::span<const Var> xs);
/// sum_k w_k x_k as a single node.
Var weighted_sum(std::span<const Var> xs, std::span<const double> weights);

} // namespace hgp::ad
