#include "paraformer/diagnostics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <complex>

using namespace paraformer;
using test::max_abs_diff;

namespace {

double loop_l2(const Matrix& h) {
    double s = 0.0;
    for (Index i = 0; i < h.rows(); ++i)
        for (Index j = 0; j < h.rows(); ++j)
            if (i != j) {
                double d = 0.0;
                for (Index k = 0; k < h.cols(); ++k) d += (h(i, k) - h(j, k)) * (h(i, k) - h(j, k));
                s += std::sqrt(d);
            }
    return s / static_cast<double>(h.rows() * (h.rows() - 1));
}

double loop_cos(const Matrix& h) {
    double s = 0.0;
    for (Index i = 0; i < h.rows(); ++i)
        for (Index j = 0; j < h.rows(); ++j)
            if (i != j) {
                double dot = 0.0, ni = 0.0, nj = 0.0;
                for (Index k = 0; k < h.cols(); ++k) {
                    dot += h(i, k) * h(j, k);
                    ni += h(i, k) * h(i, k);
                    nj += h(j, k) * h(j, k);
                }
                s += dot / std::sqrt(ni * nj);
            }
    return s / static_cast<double>(h.rows() * (h.rows() - 1));
}

// Keeps DFT bin 0 of each column.
Matrix dft_bin0(const Matrix& h) {
    using C = std::complex<double>;
    const Index n = h.rows();
    const double pi = std::acos(-1.0);
    Matrix out(n, h.cols());
    for (Index c = 0; c < h.cols(); ++c) {
        C bin0 = 0.0;
        for (Index t = 0; t < n; ++t) bin0 += h(t, c) * std::exp(C(0, -2 * pi * 0 * t / n));
        for (Index t = 0; t < n; ++t) out(t, c) = (bin0 * std::exp(C(0, 2 * pi * 0 * t / n))).real() / n;
    }
    return out;
}

Matrix plain_softmax(const Matrix& p) {
    Matrix e = p.array().exp().matrix();
    for (Index i = 0; i < e.rows(); ++i) e.row(i) /= e.row(i).sum();
    return e;
}

}  // namespace

TEST(PairwiseL2, SmallCases) {
    EXPECT_EQ(pairwise_l2(Matrix::Ones(4, 3)), 0.0);
    EXPECT_DOUBLE_EQ(pairwise_l2((Matrix(2, 1) << 0, 1).finished()), 1.0);
    EXPECT_THROW(pairwise_l2(Matrix::Ones(1, 3)), ArgumentError);
}

TEST(PairwiseL2, MatchesLoopAndProperties) {
    Rng rng(1);
    const Matrix h = normal_matrix(10, 4, 1.0, rng);
    EXPECT_NEAR(pairwise_l2(h), loop_l2(h), 1e-12);
    EXPECT_NEAR(pairwise_l2(3.5 * h), 3.5 * pairwise_l2(h), 1e-12);
    Matrix p = h;
    p.row(0).swap(p.row(7));
    p.row(2).swap(p.row(5));
    EXPECT_NEAR(pairwise_l2(p), pairwise_l2(h), 1e-12);
}

TEST(CosineSim, SmallCases) {
    EXPECT_NEAR(cosine_sim(Matrix::Constant(3, 2, 2.0)).value, 1.0, 1e-15);
    EXPECT_NEAR(cosine_sim(Matrix::Identity(2, 2)).value, 0.0, 1e-15);
    Matrix z = Matrix::Ones(3, 2);
    z.row(1).setZero();
    const CosineResult r = cosine_sim(z);
    EXPECT_EQ(r.zero_rows, 1);
    EXPECT_NEAR(r.value, 1.0, 1e-15);
    EXPECT_THROW(cosine_sim(Matrix::Zero(3, 2)), ArgumentError);
}

TEST(CosineSim, MatchesLoopAndProperties) {
    Rng rng(2);
    const Matrix h = normal_matrix(10, 4, 1.0, rng);
    EXPECT_NEAR(cosine_sim(h).value, loop_cos(h), 1e-12);
    Matrix s = h;
    for (Index i = 0; i < 10; ++i) s.row(i) *= 0.5 + i;
    EXPECT_NEAR(cosine_sim(s).value, cosine_sim(h).value, 1e-12);
}

TEST(SpectralSplit, ConstantAndZeroMean) {
    Matrix h(4, 2);
    h << 3, 1, 3, -1, 3, 2, 3, -2;
    const SpectralSplit s = spectral_split(h);
    EXPECT_EQ(s.hc.col(0).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(s.dc.col(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SpectralSplit, ReconstructionOrthogonalityAndDft) {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const Matrix h = normal_matrix(8, 3, 1.0 + t, rng);
        const SpectralSplit s = spectral_split(h);
        EXPECT_LT(max_abs_diff(s.dc + s.hc, h), 1e-12);
        EXPECT_LT(std::abs(s.dc.cwiseProduct(s.hc).sum()), 1e-10);
        EXPECT_LT(s.hc.colwise().sum().cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT(max_abs_diff(s.dc, dft_bin0(h)), 1e-10);
    }
}

TEST(HcEnergy, Cases) {
    Rng rng(4);
    const Matrix h = normal_matrix(12, 4, 1.0, rng);
    EXPECT_DOUBLE_EQ(*hc_energy_ratio(h, h), 1.0);
    EXPECT_FALSE(hc_energy_ratio(h, Matrix::Constant(12, 4, 2.0)).has_value());

    const Matrix q = normal_matrix(12, 3, 1.0, rng), k = normal_matrix(12, 3, 1.0, rng);
    const Matrix post = dense_attention(q, k, h, ScaleMode::inv_sqrt_d).output;
    const Matrix hc_pre = h.rowwise() - h.colwise().mean(), hc_post = post.rowwise() - post.colwise().mean();
    const auto r = hc_energy_ratio(h, post);
    ASSERT_TRUE(r.has_value());
    EXPECT_GT(*r, 0.0);
    EXPECT_NEAR(*r, hc_pre.norm() / hc_post.norm(), 1e-12);
}

TEST(SmoothingRate, ClosedForm) {
    EXPECT_DOUBLE_EQ(smoothing_rate_closed_form(0.0, 1, 1.0), 1.0);
    const double e2 = std::exp(2.0);
    EXPECT_NEAR(smoothing_rate_closed_form(1.0, 4, 1.0), std::sqrt((e2 + 3) / (4 * e2)), 1e-15);
    double prev = smoothing_rate_closed_form(0.0, 16, 2.0);
    for (double a = 0.25; a <= 5.0; a += 0.25) {
        const double cur = smoothing_rate_closed_form(a, 16, 2.0);
        EXPECT_LT(cur, prev);
        prev = cur;
    }
}

TEST(SmoothingRate, L1) {
    const SmoothingL1 one = smoothing_rate_l1(Matrix::Constant(1, 1, 3.0), 2.5);
    EXPECT_NEAR(one.c, 1.0, 1e-15);
    EXPECT_NEAR(one.lambda, 2.5, 1e-15);

    Rng rng(5);
    // Identical rows: column j of the softmax is constant, so its sum is n * s_j.
    const Matrix row = normal_matrix(1, 5, 1.0, rng);
    const Matrix p = Matrix::Ones(5, 1) * row;
    const Matrix s = plain_softmax(row);
    EXPECT_NEAR(smoothing_rate_l1(p, 1.0).c, 5.0 * s.maxCoeff(), 1e-12);

    const Matrix r = normal_matrix(6, 6, 1.0, rng);
    const double c = plain_softmax(r).colwise().sum().maxCoeff();
    const SmoothingL1 l = smoothing_rate_l1(r, 0.8);
    EXPECT_NEAR(l.c, c, 1e-12);
    EXPECT_NEAR(l.lambda, std::sqrt(c) * 0.8, 1e-12);
}

TEST(Theorem2, RandomLogitsAllHold) {
    const Theorem2Report r = theorem2_probe(8, 100, 0);
    EXPECT_EQ(r.trials, 100);
    EXPECT_EQ(r.passed + r.skipped, 100);
    EXPECT_EQ(r.failed, 0);
    EXPECT_GT(r.min_margin, 0.0);
}

TEST(Theorem2, DominantDiagonalAndDegenerate) {
    // Near-identity softmax has all column sums within rounding of 1.
    EXPECT_TRUE(theorem2_check(30.0 * Matrix::Identity(6, 6)).skipped);

    Matrix p = 30.0 * Matrix::Identity(6, 6);
    p(1, 0) = 30.0;  // row 1 splits evenly over columns 0 and 1
    const Theorem2Instance e = theorem2_check(p);
    EXPECT_FALSE(e.skipped);
    EXPECT_NEAR(e.c, 1.5, 1e-9);
    EXPECT_NEAR(e.lhs, 0.75, 1e-9);
    EXPECT_TRUE(e.holds);
    EXPECT_NEAR(e.margin, 0.75, 1e-9);

    EXPECT_TRUE(theorem2_check(Matrix::Zero(2, 2)).skipped);
}

TEST(Theorem2, CheckMatchesDirectNorm) {
    Rng rng(6);
    const Matrix p = normal_matrix(7, 7, 1.0, rng);
    const Matrix s = plain_softmax(p);
    const double c = s.colwise().sum().maxCoeff();
    const Matrix m = ((c - 1) / 2) * Matrix::Identity(7, 7) - s / c;
    const double lhs = m.cwiseAbs().colwise().sum().maxCoeff();
    const Theorem2Instance inst = theorem2_check(p);
    EXPECT_NEAR(inst.c, c, 1e-12);
    EXPECT_NEAR(inst.lhs, lhs, 1e-12);
    EXPECT_EQ(inst.holds, lhs < c);
}

TEST(Highpass, ZeroOrderIsIdentity) {
    Rng rng(7);
    const Matrix h = normal_matrix(10, 3, 1.0, rng) + Matrix::Ones(10, 3);
    const HighpassCurve c = highpass_probe(random_stochastic(10, rng), 0.05, 0, h);
    ASSERT_EQ(c.r.size(), 1u);
    EXPECT_NEAR(c.r[0], 1.0, 1e-15);
}

TEST(Highpass, UniformMatrixMatchesGeometricSeries) {
    Rng rng(8);
    const Index n = 16;
    const double a = 0.5 / n;
    const Matrix h = normal_matrix(n, 4, 1.0, rng) + Matrix::Ones(n, 4);
    const HighpassCurve c = highpass_probe(Matrix::Constant(n, n, 1.0 / n), a, 16, h);
    double partial = 0.0;
    for (int k = 0; k <= 16; ++k) {
        partial += std::pow(-a, k);
        EXPECT_NEAR(c.r[k], std::abs(partial), 1e-10) << k;
    }
}

TEST(Highpass, RandomStochasticDecreases) {
    Rng rng(9);
    for (int t = 0; t < 20; ++t) {
        const Matrix h = normal_matrix(10, 3, 1.0, rng) + Matrix::Ones(10, 3);
        const HighpassCurve c = highpass_probe(random_stochastic(10, rng), 0.05, 16, h);
        EXPECT_LT(c.r[16], c.r[2]);
    }
}

TEST(Highpass, RejectsBadCoefficient) {
    Rng rng(10);
    const Matrix a = random_stochastic(5, rng), h = Matrix::Ones(5, 2);
    EXPECT_THROW(highpass_probe(a, 0.2, 3, h), ArgumentError);
    EXPECT_THROW(highpass_probe(a, 0.0, 3, h), ArgumentError);
    EXPECT_THROW(highpass_probe(normal_matrix(5, 5, 1.0, rng), 0.1, 3, h), NumericError);
}

TEST(Gamma, SummaryOfInitAndTrained) {
    const GammaSummary init = summarize_gamma(GammaWeights::ppr(15, 0.1).values);
    EXPECT_FALSE(init.has_negative);
    for (int k = 1; k < 15; ++k) EXPECT_LT(init.values[k], init.values[k - 1]);
    ASSERT_TRUE(init.tail_mean_abs.has_value());
    EXPECT_NEAR(init.head_mean_abs, (0.1 + 0.09 + 0.081 + 0.0729) / 4, 1e-15);

    const GammaSummary shortg = summarize_gamma({0.5, -0.2, 0.1});
    EXPECT_TRUE(shortg.has_negative);
    EXPECT_FALSE(shortg.tail_mean_abs.has_value());
}

TEST(Gamma, ZeroEpochReportEqualsInit) {
    TrainReport r;
    r.initial_gamma = GammaWeights::ppr(5, 0.1).values;
    r.final_gamma = r.initial_gamma;
    EXPECT_EQ(gamma_report(r).values, r.initial_gamma);
}

TEST(DepthSweep, SinglePoint) {
    Rng rng(11);
    Dataset ds;
    ds.manifest.name = "toy";
    const Index n = 30;
    std::vector<Edge> e;
    for (Index i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
    ds.graph = Graph::from_edges(n, e, false);
    ds.features = normal_matrix(n, 4, 1.0, rng);
    for (Index i = 0; i < n; ++i) ds.labels.labels.push_back(ds.features(i, 0) > 0 ? 1 : 0);
    ds.labels.num_classes = 2;
    ds.split = random_split(n, {0.6, 0.2, 0.2}, 0);
    ParaFormerConfig m;
    m.d_hidden = 8;
    TrainConfig t;
    t.max_epochs = 5;
    t.patience = 5;
    for (Architecture a : {Architecture::paraformer, Architecture::vanilla_transformer, Architecture::sgformer_like}) {
        const DepthSweepResult r = depth_sweep(ds, a, {1}, m, t);
        ASSERT_EQ(r.points.size(), 1u);
        EXPECT_EQ(r.points[0].depth, 1);
        EXPECT_GT(r.points[0].d_l2, 0.0);
    }
    const auto dir = test::scratch_dir("depth");
    write_depth_sweep_csv({depth_sweep(ds, Architecture::paraformer, {1, 2}, m, t, 2)}, dir / "d.csv");
    EXPECT_EQ(test::slurp(dir / "d.csv").substr(0, 5), "model");
}

TEST(Output, FileStemAndSvg) {
    EXPECT_EQ(probe_file_stem("gamma", "cora", "k15"), "gamma_cora_k15");
    const auto dir = test::scratch_dir("svg");
    write_svg_chart(dir / "c.svg", {{"a", {1, 2, 3}, {3, 1, 2}}, {"b", {1, 2, 3}, {1, 10, 100}}},
                    {"t", "x", "y", false, true});
    const std::string svg = test::slurp(dir / "c.svg");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_NE(svg.find("polyline"), std::string::npos);
}

TEST(ApproximationGap, ZeroForUniformCase) {
    EXPECT_LT(attention_approximation_gap(Matrix::Zero(5, 3), Matrix::Zero(5, 3), ScaleMode::inv_sqrt_d), 1e-15);
    Rng rng(12);
    EXPECT_GT(attention_approximation_gap(normal_matrix(5, 3, 2.0, rng), normal_matrix(5, 3, 2.0, rng), ScaleMode::inv_sqrt_d),
              0.0);
}
