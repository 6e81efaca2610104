#pragma once

#include "paraformer/core.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records every operation applied to its Vars; backward() walks the
// records in reverse and accumulates d(output)/d(node) into each node that
// depends on a leaf. Values are immutable once recorded.
namespace paraformer::ad {

class Tape;

class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Matrix& out_value, const Matrix& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// A value with no gradient.
    Var constant(Matrix value);
    /// A differentiable input.
    Var leaf(Matrix value);

    const Matrix& value(Var v) const { return nodes_[v.id()].value; }
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

    /// Gradient of the last backward() output with respect to `v`; zeros if
    /// `v` did not influence it.
    Matrix grad(Var v) const;

    /// Seeds d out / d out = 1 for a 1x1 `out` and propagates.
    void backward(Var out);

    std::size_t size() const { return nodes_.size(); }

    /// Hash of every piecewise branch taken so far (ReLU signs, max-pool
    /// winners). Two evaluations with equal signatures lie on the same
    /// smooth piece.
    std::uint64_t kink_signature() const { return kink_signature_; }
    void note_branch(std::uint64_t bits);

    // Used by operation implementations.
    Var record(Matrix value, bool requires_grad, Backward backward);
    void accumulate(Var v, const Matrix& g);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        bool has_grad = false;
        Backward backward;
    };
    std::deque<Node> nodes_;
    std::uint64_t kink_signature_ = 0xcbf29ce484222325ULL;
};

using SparseHandle = std::shared_ptr<const SparseMatrix>;

Var matmul(Var a, Var b);
/// a^T b
Var matmul_tn(Var a, Var b);
/// a b^T
Var matmul_nt(Var a, Var b);
/// s b for a constant sparse s.
Var spmm(SparseHandle s, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double c);
/// ca * a + cb * b
Var lincomb(Var a, double ca, Var b, double cb);
/// g(0, k) * a where g is a row of scalars.
Var scale_by_entry(Var a, Var g, Index k);
/// a + 1 * bias with bias a 1 x cols row.
Var add_row_bias(Var a, Var bias);
Var hadamard(Var a, Var b);
/// Elementwise product with a constant (dropout masks).
Var mask_mul(Var a, std::shared_ptr<const Matrix> mask);
Var relu(Var a);

Var softmax_rows(Var a);
Var softmax_cols(Var a);
/// Row softmax of scale * q k^T, storing only the n x n probabilities.
Var attention_softmax(Var q, Var k, double scale);

/// Mean over `rows` of -log softmax(logits)[i, labels[i]]; 1 x 1.
Var softmax_cross_entropy(Var logits, const std::vector<int>& labels, const std::vector<Index>& rows);

Var mean_rows(Var a);
Var sum_rows(Var a);
Var max_rows(Var a);
Var sum(Var a);

}  // namespace paraformer::ad
