#include "paraformer/autodiff.hpp"

#include "paraformer/attention.hpp"

#include <cmath>

namespace paraformer::ad {

namespace {

Tape& tape_of(Var a) {
    if (!a.valid()) throw ArgumentError("autodiff: uninitialized Var");
    return *a.tape();
}

Tape& tape_of(Var a, Var b) {
    if (a.tape() != b.tape()) throw ArgumentError("autodiff: operands belong to different tapes");
    return tape_of(a);
}

}  // namespace

const Matrix& Var::value() const {
    return tape_->value(*this);
}

Var Tape::constant(Matrix value) {
    return record(std::move(value), false, nullptr);
}

Var Tape::leaf(Matrix value) {
    return record(std::move(value), true, nullptr);
}

Var Tape::record(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, false, requires_grad ? std::move(backward) : nullptr});
    return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Matrix& g) {
    Node& node = nodes_[v.id()];
    if (!node.requires_grad) return;
    if (node.has_grad) {
        node.grad += g;
    } else {
        node.grad = g;
        node.has_grad = true;
    }
}

Matrix Tape::grad(Var v) const {
    const Node& node = nodes_[v.id()];
    if (node.has_grad) return node.grad;
    return Matrix::Zero(node.value.rows(), node.value.cols());
}

void Tape::backward(Var out) {
    require_shape(value(out).rows() == 1 && value(out).cols() == 1, "backward: output must be 1x1");
    for (Node& node : nodes_) {
        node.has_grad = false;
        node.grad.resize(0, 0);
    }
    accumulate(out, Matrix::Ones(1, 1));
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.has_grad || !node.backward) continue;
        node.backward(*this, node.value, node.grad);
    }
}

void Tape::note_branch(std::uint64_t bits) {
    kink_signature_ = (kink_signature_ ^ bits) * 0x100000001b3ULL;
}

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_shape(a.cols() == b.rows(), "matmul: inner dimensions differ");
    return t.record(a.value() * b.value(), t.requires_grad(a) || t.requires_grad(b), [a, b](Tape& tp, const Matrix&, const Matrix& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
        if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
    });
}

Var matmul_tn(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_shape(a.rows() == b.rows(), "matmul_tn: row counts differ");
    return t.record(a.value().transpose() * b.value(), t.requires_grad(a) || t.requires_grad(b),
                    [a, b](Tape& tp, const Matrix&, const Matrix& g) {
                        if (tp.requires_grad(a)) tp.accumulate(a, b.value() * g.transpose());
                        if (tp.requires_grad(b)) tp.accumulate(b, a.value() * g);
                    });
}

Var matmul_nt(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_shape(a.cols() == b.cols(), "matmul_nt: column counts differ");
    return t.record(a.value() * b.value().transpose(), t.requires_grad(a) || t.requires_grad(b),
                    [a, b](Tape& tp, const Matrix&, const Matrix& g) {
                        if (tp.requires_grad(a)) tp.accumulate(a, g * b.value());
                        if (tp.requires_grad(b)) tp.accumulate(b, g.transpose() * a.value());
                    });
}

Var spmm(SparseHandle s, Var b) {
    Tape& t = tape_of(b);
    require_shape(s && s->cols() == b.rows(), "spmm: inner dimensions differ");
    Matrix out = (*s) * b.value();
    return t.record(std::move(out), t.requires_grad(b), [s, b](Tape& tp, const Matrix&, const Matrix& g) {
        tp.accumulate(b, Matrix(s->transpose() * g));
    });
}

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add: shapes differ");
    return t.record(a.value() + b.value(), t.requires_grad(a) || t.requires_grad(b), [a, b](Tape& tp, const Matrix&, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

Var sub(Var a, Var b) {
    return lincomb(a, 1.0, b, -1.0);
}

Var scale(Var a, double c) {
    Tape& t = tape_of(a);
    return t.record(c * a.value(), t.requires_grad(a), [a, c](Tape& tp, const Matrix&, const Matrix& g) { tp.accumulate(a, c * g); });
}

Var lincomb(Var a, double ca, Var b, double cb) {
    Tape& t = tape_of(a, b);
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "lincomb: shapes differ");
    return t.record(ca * a.value() + cb * b.value(), t.requires_grad(a) || t.requires_grad(b),
                    [a, b, ca, cb](Tape& tp, const Matrix&, const Matrix& g) {
                        if (tp.requires_grad(a)) tp.accumulate(a, ca * g);
                        if (tp.requires_grad(b)) tp.accumulate(b, cb * g);
                    });
}

Var scale_by_entry(Var a, Var gv, Index k) {
    Tape& t = tape_of(a, gv);
    require_shape(gv.rows() == 1 && k >= 0 && k < gv.cols(), "scale_by_entry: index outside the weight row");
    const double c = gv.value()(0, k);
    return t.record(c * a.value(), t.requires_grad(a) || t.requires_grad(gv), [a, gv, k, c](Tape& tp, const Matrix&, const Matrix& g) {
        if (tp.requires_grad(a)) tp.accumulate(a, c * g);
        if (tp.requires_grad(gv)) {
            Matrix dg = Matrix::Zero(1, gv.cols());
            dg(0, k) = (g.array() * a.value().array()).sum();
            tp.accumulate(gv, dg);
        }
    });
}

Var add_row_bias(Var a, Var bias) {
    Tape& t = tape_of(a, bias);
    require_shape(bias.rows() == 1 && bias.cols() == a.cols(), "add_row_bias: bias must be 1 x cols");
    Matrix out = a.value().rowwise() + bias.value().row(0);
    return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(bias), [a, bias](Tape& tp, const Matrix&, const Matrix& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
    });
}

Var hadamard(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shapes differ");
    return t.record(a.value().cwiseProduct(b.value()), t.requires_grad(a) || t.requires_grad(b),
                    [a, b](Tape& tp, const Matrix&, const Matrix& g) {
                        if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
                        if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
                    });
}

Var mask_mul(Var a, std::shared_ptr<const Matrix> mask) {
    Tape& t = tape_of(a);
    require_shape(mask && mask->rows() == a.rows() && mask->cols() == a.cols(), "mask_mul: mask shape differs");
    return t.record(a.value().cwiseProduct(*mask), t.requires_grad(a),
                    [a, mask](Tape& tp, const Matrix&, const Matrix& g) { tp.accumulate(a, g.cwiseProduct(*mask)); });
}

Var relu(Var a) {
    Tape& t = tape_of(a);
    const Matrix& x = a.value();
    for (Index i = 0; i < x.size(); ++i) t.note_branch(x.data()[i] > 0.0 ? 1 : 2);
    return t.record(a.value().cwiseMax(0.0), t.requires_grad(a), [a](Tape& tp, const Matrix&, const Matrix& g) {
        tp.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
    });
}

Var softmax_rows(Var a) {
    Tape& t = tape_of(a);
    return t.record(paraformer::softmax_rows(a.value()), t.requires_grad(a),
                    [a](Tape& tp, const Matrix& y, const Matrix& g) {
                        const Vector inner = y.cwiseProduct(g).rowwise().sum();
                        Matrix dx = y.cwiseProduct(g.colwise() - inner);
                        tp.accumulate(a, dx);
                    });
}

Var softmax_cols(Var a) {
    Tape& t = tape_of(a);
    return t.record(paraformer::softmax_cols(a.value()), t.requires_grad(a),
                    [a](Tape& tp, const Matrix& y, const Matrix& g) {
                        const RowVector inner = y.cwiseProduct(g).colwise().sum();
                        Matrix dx = y.cwiseProduct(g.rowwise() - inner);
                        tp.accumulate(a, dx);
                    });
}

Var attention_softmax(Var q, Var k, double scale_factor) {
    Tape& t = tape_of(q, k);
    require_shape(q.cols() == k.cols(), "attention_softmax: Q and K widths differ");
    Matrix logits = (q.value() * k.value().transpose()) * scale_factor;
    if (!logits.allFinite()) throw NumericError("attention_softmax: non-finite logits");
    return t.record(paraformer::softmax_rows(logits), t.requires_grad(q) || t.requires_grad(k),
                    [q, k, scale_factor](Tape& tp, const Matrix& y, const Matrix& g) {
                        const Vector inner = y.cwiseProduct(g).rowwise().sum();
                        Matrix dlogits = y.cwiseProduct(g.colwise() - inner);
                        dlogits *= scale_factor;
                        if (tp.requires_grad(q)) tp.accumulate(q, dlogits * k.value());
                        if (tp.requires_grad(k)) tp.accumulate(k, dlogits.transpose() * q.value());
                    });
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& labels, const std::vector<Index>& rows) {
    Tape& t = tape_of(logits);
    if (rows.empty()) throw ArgumentError("softmax_cross_entropy: empty mask");
    const Matrix& z = logits.value();
    Matrix prob(static_cast<Index>(rows.size()), z.cols());
    double loss = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Index i = rows[r];
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= z.cols()) throw ArgumentError("softmax_cross_entropy: row without a valid label");
        const double mx = z.row(i).maxCoeff();
        const double lse = mx + std::log((z.row(i).array() - mx).exp().sum());
        loss += lse - z(i, y);
        prob.row(static_cast<Index>(r)) = (z.row(i).array() - lse).exp().matrix();
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    Matrix out(1, 1);
    out(0, 0) = loss * inv;
    return t.record(std::move(out), t.requires_grad(logits),
                    [logits, labels, rows, prob, inv](Tape& tp, const Matrix&, const Matrix& g) {
                        Matrix dz = Matrix::Zero(logits.rows(), logits.cols());
                        const double s = g(0, 0) * inv;
                        for (std::size_t r = 0; r < rows.size(); ++r) {
                            const Index i = rows[r];
                            dz.row(i) += s * prob.row(static_cast<Index>(r));
                            dz(i, labels[static_cast<std::size_t>(i)]) -= s;
                        }
                        tp.accumulate(logits, dz);
                    });
}

Var mean_rows(Var a) {
    Tape& t = tape_of(a);
    if (a.rows() == 0) throw ArgumentError("mean_rows: empty matrix");
    const double inv = 1.0 / static_cast<double>(a.rows());
    return t.record(a.value().colwise().sum() * inv, t.requires_grad(a), [a, inv](Tape& tp, const Matrix&, const Matrix& g) {
        Matrix dx = g.replicate(a.rows(), 1) * inv;
        tp.accumulate(a, dx);
    });
}

Var sum_rows(Var a) {
    Tape& t = tape_of(a);
    if (a.rows() == 0) throw ArgumentError("sum_rows: empty matrix");
    return t.record(a.value().colwise().sum(), t.requires_grad(a), [a](Tape& tp, const Matrix&, const Matrix& g) {
        tp.accumulate(a, g.replicate(a.rows(), 1));
    });
}

Var max_rows(Var a) {
    Tape& t = tape_of(a);
    if (a.rows() == 0) throw ArgumentError("max_rows: empty matrix");
    const Matrix& x = a.value();
    Matrix out(1, x.cols());
    std::vector<Index> arg(static_cast<std::size_t>(x.cols()));
    for (Index j = 0; j < x.cols(); ++j) {
        Index best = 0;
        for (Index i = 1; i < x.rows(); ++i)
            if (x(i, j) > x(best, j)) best = i;
        arg[static_cast<std::size_t>(j)] = best;
        t.note_branch(static_cast<std::uint64_t>(best));
        out(0, j) = x(best, j);
    }
    return t.record(std::move(out), t.requires_grad(a), [a, arg](Tape& tp, const Matrix&, const Matrix& g) {
        Matrix dx = Matrix::Zero(a.rows(), a.cols());
        for (Index j = 0; j < a.cols(); ++j) dx(arg[static_cast<std::size_t>(j)], j) = g(0, j);
        tp.accumulate(a, dx);
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return t.record(std::move(out), t.requires_grad(a), [a](Tape& tp, const Matrix&, const Matrix& g) {
        tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

}  // namespace paraformer::ad
