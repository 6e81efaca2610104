#pragma once

#include "paraformer/core.hpp"

#include <string>
#include <vector>

namespace paraformer {

/// Divisor applied to the logits QK^T before the softmax.
enum class ScaleMode { inv_sqrt_d, inv_sqrt_n, none };

ScaleMode parse_scale_mode(const std::string& s);
std::string to_string(ScaleMode m);
double logit_scale(ScaleMode mode, Index n, Index d);

struct AttentionParams {
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;
    ScaleMode scale_mode = ScaleMode::inv_sqrt_d;

    /// Throws ShapeError if the three weights disagree, NumericError on non-finite entries.
    void validate() const;
};

enum class GammaInit { ppr, uniform, explicit_values };

/// The K+1 propagation weights gamma_0..gamma_K.
struct GammaWeights {
    std::vector<double> values;
    bool learnable = true;
    GammaInit init = GammaInit::ppr;
    double alpha_damp = 0.1;

    int order() const { return static_cast<int>(values.size()) - 1; }

    /// gamma_k = a (1 - a)^k for k < K, gamma_K = (1 - a)^K so the weights sum to one.
    static GammaWeights ppr(int K, double alpha_damp);
    static GammaWeights uniform(int K);
    static GammaWeights from_values(std::vector<double> values);
};

/// Row-normalized queries and column-normalized keys.
struct AttentionFactors {
    Matrix q_hat;  // n x d, each row sums to 1
    Matrix k_hat;  // n x d, each column sums to 1

    /// The n x n matrix q_hat * k_hat^T. Only for tests and small probes.
    Matrix materialize() const;
};

struct Projections {
    Matrix q;
    Matrix k;
    Matrix v;
};

struct DenseAttention {
    Matrix attention;  // row-stochastic n x n
    Matrix output;     // attention * V
};

/// Max-subtracted softmax along each row.
Matrix softmax_rows(const Matrix& x);
/// Max-subtracted softmax along each column.
Matrix softmax_cols(const Matrix& x);

Projections project(const Matrix& h, const AttentionParams& p);

/// Softmax(QK^T * scale) and its product with V. Throws NumericError on non-finite logits.
DenseAttention dense_attention(const Matrix& q, const Matrix& k, const Matrix& v, ScaleMode scale_mode);

AttentionFactors linear_attention_factors(const Matrix& q, const Matrix& k);

struct GpaExactOptions {
    bool require_stochastic = true;
    double row_sum_tolerance = 1e-8;
};

/// Reference path: builds sum_k gamma_k A^k with explicit n x n products,
/// then multiplies by V. O(K n^3).
Matrix gpa_exact(const Matrix& a, const Matrix& v, const GammaWeights& gamma, GpaExactOptions opts = {});

/// Linear-cost GPA on factored attention: no n x n matrix is formed.
///   Z = g0 V;  M = Khat^T V;  C = Khat^T Qhat
///   for k = 1..K:  Z += gk Qhat M;  M = C M
Matrix gpa_scalable(const AttentionFactors& f, const Matrix& v, const GammaWeights& gamma);

enum class AttentionMode { exact, scalable };

AttentionMode parse_attention_mode(const std::string& s);
std::string to_string(AttentionMode m);

/// project, then exact softmax attention + gpa_exact or linear factors + gpa_scalable.
Matrix gpa_forward(const Matrix& h, const AttentionParams& p, const GammaWeights& gamma, AttentionMode mode);

}  // namespace paraformer
