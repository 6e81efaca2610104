#include "paraformer/attention.hpp"

#include <cmath>

namespace paraformer {

ScaleMode parse_scale_mode(const std::string& s) {
    if (s == "inv_sqrt_d") return ScaleMode::inv_sqrt_d;
    if (s == "inv_sqrt_n") return ScaleMode::inv_sqrt_n;
    if (s == "none") return ScaleMode::none;
    throw ArgumentError("unknown scale_mode: " + s);
}

std::string to_string(ScaleMode m) {
    switch (m) {
        case ScaleMode::inv_sqrt_d: return "inv_sqrt_d";
        case ScaleMode::inv_sqrt_n: return "inv_sqrt_n";
        case ScaleMode::none: return "none";
    }
    return "none";
}

double logit_scale(ScaleMode mode, Index n, Index d) {
    switch (mode) {
        case ScaleMode::inv_sqrt_d: return 1.0 / std::sqrt(static_cast<double>(std::max<Index>(d, 1)));
        case ScaleMode::inv_sqrt_n: return 1.0 / std::sqrt(static_cast<double>(std::max<Index>(n, 1)));
        case ScaleMode::none: return 1.0;
    }
    return 1.0;
}

AttentionMode parse_attention_mode(const std::string& s) {
    if (s == "exact") return AttentionMode::exact;
    if (s == "scalable") return AttentionMode::scalable;
    throw ArgumentError("unknown attention_mode: " + s);
}

std::string to_string(AttentionMode m) {
    return m == AttentionMode::exact ? "exact" : "scalable";
}

void AttentionParams::validate() const {
    require_shape(w_q.rows() == w_k.rows() && w_q.rows() == w_v.rows() && w_q.cols() == w_k.cols() &&
                      w_q.cols() == w_v.cols(),
                  "W_Q, W_K, W_V must share one shape");
    if (!all_finite(w_q) || !all_finite(w_k) || !all_finite(w_v))
        throw NumericError("attention weights contain non-finite entries");
}

GammaWeights GammaWeights::ppr(int K, double alpha_damp) {
    if (K < 0) throw ArgumentError("gamma: K must be >= 0");
    if (!(alpha_damp > 0.0 && alpha_damp < 1.0)) throw ArgumentError("gamma: alpha_damp must lie in (0, 1)");
    GammaWeights g;
    g.init = GammaInit::ppr;
    g.alpha_damp = alpha_damp;
    g.values.resize(static_cast<std::size_t>(K) + 1);
    for (int k = 0; k < K; ++k) g.values[static_cast<std::size_t>(k)] = alpha_damp * std::pow(1.0 - alpha_damp, k);
    g.values[static_cast<std::size_t>(K)] = std::pow(1.0 - alpha_damp, K);
    return g;
}

GammaWeights GammaWeights::uniform(int K) {
    if (K < 0) throw ArgumentError("gamma: K must be >= 0");
    GammaWeights g;
    g.init = GammaInit::uniform;
    g.values.assign(static_cast<std::size_t>(K) + 1, 1.0 / (K + 1));
    return g;
}

GammaWeights GammaWeights::from_values(std::vector<double> values) {
    if (values.empty()) throw ArgumentError("gamma: need at least one weight");
    GammaWeights g;
    g.init = GammaInit::explicit_values;
    g.values = std::move(values);
    return g;
}

Matrix AttentionFactors::materialize() const {
    return q_hat * k_hat.transpose();
}

Matrix softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        const double mx = x.row(i).maxCoeff();
        y.row(i) = (x.row(i).array() - mx).exp().matrix();
        y.row(i) /= y.row(i).sum();
    }
    return y;
}

Matrix softmax_cols(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    const RowVector mx = x.colwise().maxCoeff();
    y = (x.rowwise() - mx).array().exp().matrix();
    const RowVector sums = y.colwise().sum();
    for (Index j = 0; j < y.cols(); ++j) y.col(j) /= sums(j);
    return y;
}

Projections project(const Matrix& h, const AttentionParams& p) {
    p.validate();
    require_shape(h.cols() == p.w_q.rows(),
                  "project: h has " + std::to_string(h.cols()) + " columns, weights expect " +
                      std::to_string(p.w_q.rows()));
    return {h * p.w_q, h * p.w_k, h * p.w_v};
}

DenseAttention dense_attention(const Matrix& q, const Matrix& k, const Matrix& v, ScaleMode scale_mode) {
    require_shape(q.cols() == k.cols(), "dense_attention: Q and K widths differ");
    require_shape(q.rows() == k.rows() && k.rows() == v.rows(), "dense_attention: node counts differ");
    Matrix logits = (q * k.transpose()) * logit_scale(scale_mode, q.rows(), q.cols());
    if (!all_finite(logits)) throw NumericError("dense_attention: non-finite logits");
    DenseAttention out;
    out.attention = softmax_rows(logits);
    out.output = out.attention * v;
    return out;
}

AttentionFactors linear_attention_factors(const Matrix& q, const Matrix& k) {
    require_shape(q.rows() == k.rows() && q.cols() == k.cols(), "linear_attention_factors: Q and K differ in shape");
    if (!all_finite(q) || !all_finite(k)) throw NumericError("linear_attention_factors: non-finite input");
    return {softmax_rows(q), softmax_cols(k)};
}

Matrix gpa_exact(const Matrix& a, const Matrix& v, const GammaWeights& gamma, GpaExactOptions opts) {
    require_shape(a.rows() == a.cols(), "gpa_exact: attention matrix must be square");
    require_shape(a.cols() == v.rows(), "gpa_exact: attention and V disagree on n");
    if (gamma.values.empty()) throw ArgumentError("gpa_exact: empty gamma");
    if (opts.require_stochastic) {
        const Vector sums = a.rowwise().sum();
        const double dev = (sums.array() - 1.0).abs().maxCoeff();
        if (a.rows() > 0 && dev > opts.row_sum_tolerance)
            throw NumericError("gpa_exact: matrix is not row-stochastic (row-sum deviation " + std::to_string(dev) + ")");
    }
    const Index n = a.rows();
    Matrix power = Matrix::Identity(n, n);
    Matrix poly = gamma.values[0] * power;
    for (std::size_t k = 1; k < gamma.values.size(); ++k) {
        power = power * a;
        poly += gamma.values[k] * power;
    }
    return poly * v;
}

Matrix gpa_scalable(const AttentionFactors& f, const Matrix& v, const GammaWeights& gamma) {
    require_shape(f.q_hat.rows() == f.k_hat.rows() && f.q_hat.cols() == f.k_hat.cols(),
                  "gpa_scalable: Qhat and Khat differ in shape");
    require_shape(f.k_hat.rows() == v.rows(), "gpa_scalable: factors and V disagree on n");
    if (gamma.values.empty()) throw ArgumentError("gpa_scalable: empty gamma");
    Matrix z = gamma.values[0] * v;
    if (gamma.values.size() == 1) return z;
    const Matrix kq = f.k_hat.transpose() * f.q_hat;  // d x d
    Matrix m = f.k_hat.transpose() * v;               // d x d_v
    for (std::size_t k = 1; k < gamma.values.size(); ++k) {
        z.noalias() += gamma.values[k] * (f.q_hat * m);
        if (k + 1 < gamma.values.size()) m = kq * m;
    }
    return z;
}

Matrix gpa_forward(const Matrix& h, const AttentionParams& p, const GammaWeights& gamma, AttentionMode mode) {
    const Projections qkv = project(h, p);
    if (mode == AttentionMode::exact) {
        const DenseAttention att = dense_attention(qkv.q, qkv.k, qkv.v, p.scale_mode);
        return gpa_exact(att.attention, qkv.v, gamma);
    }
    return gpa_scalable(linear_attention_factors(qkv.q, qkv.k), qkv.v, gamma);
}

}  // namespace paraformer
