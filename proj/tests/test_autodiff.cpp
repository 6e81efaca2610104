#include "paraformer/autodiff.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <functional>

using namespace paraformer;
using test::max_abs_diff;

namespace {

using Build = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

// Central differences of sum(f(inputs) .* weights) against the tape.
void check_op(const Build& f, std::vector<Matrix> inputs, double tol = 1e-6) {
    Rng rng(99);
    Matrix weights;
    auto eval = [&](const std::vector<Matrix>& in) {
        ad::Tape t;
        std::vector<ad::Var> vars;
        for (const auto& m : in) vars.push_back(t.leaf(m));
        const Matrix out = f(t, vars).value();
        if (weights.size() == 0) weights = normal_matrix(out.rows(), out.cols(), 1.0, rng);
        return out.cwiseProduct(weights).sum();
    };
    eval(inputs);

    ad::Tape t;
    std::vector<ad::Var> vars;
    for (const auto& m : inputs) vars.push_back(t.leaf(m));
    const ad::Var out = f(t, vars);
    const ad::Var loss = ad::sum(ad::hadamard(out, t.constant(weights)));
    t.backward(loss);

    const double h = 1e-6;
    for (std::size_t a = 0; a < inputs.size(); ++a) {
        const Matrix g = t.grad(vars[a]);
        for (Index i = 0; i < inputs[a].rows(); ++i)
            for (Index j = 0; j < inputs[a].cols(); ++j) {
                auto plus = inputs, minus = inputs;
                plus[a](i, j) += h;
                minus[a](i, j) -= h;
                const double fd = (eval(plus) - eval(minus)) / (2 * h);
                EXPECT_NEAR(g(i, j), fd, tol * std::max(1.0, std::abs(fd))) << "input " << a << " (" << i << "," << j << ")";
            }
    }
}

Matrix rnd(Index r, Index c, std::uint64_t seed) {
    Rng rng(seed);
    return normal_matrix(r, c, 1.0, rng);
}

}  // namespace

TEST(Autodiff, ScalarSquare) {
    ad::Tape t;
    const ad::Var x = t.leaf(Matrix::Constant(1, 1, 3.0));
    t.backward(ad::sum(ad::hadamard(x, x)));
    EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 6.0);
}

TEST(Autodiff, MatmulFamily) {
    check_op([](ad::Tape&, const auto& v) { return ad::matmul(v[0], v[1]); }, {rnd(3, 4, 1), rnd(4, 2, 2)});
    check_op([](ad::Tape&, const auto& v) { return ad::matmul_tn(v[0], v[1]); }, {rnd(4, 3, 3), rnd(4, 2, 4)});
    check_op([](ad::Tape&, const auto& v) { return ad::matmul_nt(v[0], v[1]); }, {rnd(3, 4, 5), rnd(2, 4, 6)});
}

TEST(Autodiff, Spmm) {
    SparseMatrix s(3, 4);
    s.insert(0, 1) = 2.0;
    s.insert(1, 0) = -1.0;
    s.insert(2, 3) = 0.5;
    s.makeCompressed();
    auto handle = std::make_shared<const SparseMatrix>(s);
    check_op([handle](ad::Tape&, const auto& v) { return ad::spmm(handle, v[0]); }, {rnd(4, 2, 7)});
}

TEST(Autodiff, Elementwise) {
    check_op([](ad::Tape&, const auto& v) { return ad::add(v[0], v[1]); }, {rnd(2, 3, 8), rnd(2, 3, 9)});
    check_op([](ad::Tape&, const auto& v) { return ad::sub(v[0], v[1]); }, {rnd(2, 3, 8), rnd(2, 3, 9)});
    check_op([](ad::Tape&, const auto& v) { return ad::scale(v[0], -2.5); }, {rnd(2, 3, 10)});
    check_op([](ad::Tape&, const auto& v) { return ad::lincomb(v[0], 0.3, v[1], 0.7); }, {rnd(2, 3, 11), rnd(2, 3, 12)});
    check_op([](ad::Tape&, const auto& v) { return ad::hadamard(v[0], v[1]); }, {rnd(2, 3, 13), rnd(2, 3, 14)});
    check_op([](ad::Tape&, const auto& v) { return ad::scale_by_entry(v[0], v[1], 2); }, {rnd(3, 2, 15), rnd(1, 4, 16)});
    check_op([](ad::Tape&, const auto& v) { return ad::add_row_bias(v[0], v[1]); }, {rnd(4, 3, 17), rnd(1, 3, 18)});
    auto mask = std::make_shared<const Matrix>(rnd(3, 3, 19).cwiseSign().cwiseMax(0.0) * 2.0);
    check_op([mask](ad::Tape&, const auto& v) { return ad::mask_mul(v[0], mask); }, {rnd(3, 3, 20)});
}

TEST(Autodiff, ReluAwayFromKink) {
    Matrix x = rnd(4, 4, 21);
    for (Index i = 0; i < x.size(); ++i)
        if (std::abs(x.data()[i]) < 0.05) x.data()[i] = 0.5;
    check_op([](ad::Tape&, const auto& v) { return ad::relu(v[0]); }, {x});
}

TEST(Autodiff, Softmaxes) {
    check_op([](ad::Tape&, const auto& v) { return ad::softmax_rows(v[0]); }, {rnd(4, 5, 22)});
    check_op([](ad::Tape&, const auto& v) { return ad::softmax_cols(v[0]); }, {rnd(4, 5, 23)});
    check_op([](ad::Tape&, const auto& v) { return ad::attention_softmax(v[0], v[1], 0.7); }, {rnd(5, 3, 24), rnd(5, 3, 25)});
}

TEST(Autodiff, Reductions) {
    check_op([](ad::Tape&, const auto& v) { return ad::mean_rows(v[0]); }, {rnd(5, 3, 26)});
    check_op([](ad::Tape&, const auto& v) { return ad::sum_rows(v[0]); }, {rnd(5, 3, 27)});
    check_op([](ad::Tape&, const auto& v) { return ad::max_rows(v[0]); }, {rnd(5, 3, 28)});
    check_op([](ad::Tape&, const auto& v) { return ad::sum(v[0]); }, {rnd(5, 3, 29)});
}

TEST(Autodiff, CrossEntropy) {
    const std::vector<int> labels{0, 2, 1, 1};
    check_op([labels](ad::Tape&, const auto& v) { return ad::softmax_cross_entropy(v[0], labels, {0, 1, 3}); },
             {rnd(4, 3, 30)});
    ad::Tape t;
    const ad::Var l = ad::softmax_cross_entropy(t.leaf(Matrix::Zero(2, 7)), {3, 4}, {0, 1});
    EXPECT_NEAR(l.value()(0, 0), std::log(7.0), 1e-15);
}

TEST(Autodiff, ConstantsGetNoGradientAndFanOutAccumulates) {
    ad::Tape t;
    const ad::Var c = t.constant(Matrix::Constant(1, 1, 2.0));
    const ad::Var x = t.leaf(Matrix::Constant(1, 1, 5.0));
    const ad::Var y = ad::add(ad::hadamard(x, c), ad::hadamard(x, x));
    t.backward(ad::sum(y));
    EXPECT_FALSE(t.requires_grad(c));
    EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 2.0 + 10.0);
}

TEST(Autodiff, KinkSignatureTracksReluPattern) {
    auto sig = [](double v) {
        ad::Tape t;
        ad::relu(t.leaf(Matrix::Constant(1, 2, v)));
        return t.kink_signature();
    };
    EXPECT_EQ(sig(1.0), sig(2.0));
    EXPECT_NE(sig(1.0), sig(-1.0));
}

TEST(Autodiff, ShapeMismatchThrows) {
    ad::Tape t;
    EXPECT_THROW(ad::matmul(t.leaf(rnd(2, 3, 1)), t.leaf(rnd(2, 3, 2))), ShapeError);
    EXPECT_THROW(ad::add(t.leaf(rnd(2, 3, 1)), t.leaf(rnd(3, 2, 2))), ShapeError);
}
