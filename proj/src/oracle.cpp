#include "paraformer/oracle.hpp"

#include "paraformer/attention.hpp"
#include "paraformer/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <numbers>

namespace paraformer::oracle {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    require_shape(a.cols() == b.rows(), "naive_matmul: inner dimensions differ");
    Matrix c = Matrix::Zero(a.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

Matrix naive_gpa(const Matrix& a, const Matrix& v, const std::vector<double>& gamma) {
    require_shape(a.rows() == a.cols() && a.cols() == v.rows(), "naive_gpa: A must be n x n and V n x d");
    const Index n = a.rows();
    Matrix z = Matrix::Zero(n, v.cols());
    for (std::size_t k = 0; k < gamma.size(); ++k) {
        Matrix pw = Matrix::Identity(n, n);
        for (std::size_t i = 0; i < k; ++i) pw = naive_matmul(pw, a);
        z += gamma[k] * naive_matmul(pw, v);
    }
    return z;
}

Matrix naive_softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (Index j = 0; j < x.cols(); ++j) s += std::exp(x(i, j));
        for (Index j = 0; j < x.cols(); ++j) y(i, j) = std::exp(x(i, j)) / s;
    }
    return y;
}

std::vector<double> finite_diff_grad(const std::function<double(const ModelParams&)>& loss, const ModelParams& params,
                                     const std::vector<Coord>& coords, double h) {
    std::vector<double> out;
    ModelParams p = params;
    for (const Coord& c : coords) {
        double& x = p.value(c.tensor)(c.row, c.col);
        const double x0 = x;
        x = x0 + h;
        const double fp = loss(p);
        x = x0 - h;
        const double fm = loss(p);
        x = x0;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_grad: non-finite loss at " + p.name(c.tensor));
        out.push_back((fp - fm) / (2.0 * h));
    }
    return out;
}

std::vector<Coord> sample_coords(const ModelParams& params, std::size_t count, Rng& rng) {
    const Index total = params.num_scalars();
    if (total == 0) throw ArgumentError("sample_coords: no parameters");
    std::uniform_int_distribution<Index> dist(0, total - 1);
    std::vector<Coord> out;
    for (std::size_t s = 0; s < count; ++s) {
        Index flat = dist(rng);
        std::size_t t = 0;
        while (flat >= params.value(t).size()) flat -= params.value(t++).size();
        const Index cols = params.value(t).cols();
        out.push_back({t, flat / cols, flat % cols});
    }
    return out;
}

Matrix dft_dc_oracle(const Matrix& h) {
    const Index n = h.rows();
    if (n < 1) throw ArgumentError("dft_dc_oracle: empty matrix");
    using C = std::complex<double>;
    Eigen::MatrixXcd f(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index k = 0; k < n; ++k)
            f(j, k) = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(n));
    const Eigen::MatrixXcd finv = f.adjoint() / static_cast<double>(n);
    const Eigen::MatrixXcd spectrum = f * h.cast<C>();
    Eigen::MatrixXcd kept = Eigen::MatrixXcd::Zero(n, h.cols());
    kept.row(0) = spectrum.row(0);
    const Eigen::MatrixXcd back = finv * kept;
    const double residue = back.imag().cwiseAbs().maxCoeff();
    if (residue > 1e-10) throw NumericError("dft_dc_oracle: imaginary residue " + std::to_string(residue));
    return back.real();
}

BenchOp parse_bench_op(const std::string& s) {
    if (s == "dense" || s == "gpa_exact_dense") return BenchOp::gpa_exact_dense;
    if (s == "scalable" || s == "gpa_scalable") return BenchOp::gpa_scalable;
    throw ArgumentError("unknown bench op: " + s);
}

std::string to_string(BenchOp op) {
    return op == BenchOp::gpa_exact_dense ? "gpa_exact_dense" : "gpa_scalable";
}

double median(std::vector<double> v) {
    if (v.empty()) throw ArgumentError("median: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    require_shape(x.size() == y.size(), "loglog_slope: lengths differ");
    if (x.size() < 2) return 0.0;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxx > 0 ? sxy / sxx : 0.0;
}

BenchResult scaling_benchmark(BenchOp op, const std::vector<Index>& sizes, Index d, int K, int repeats,
                              std::uint64_t seed) {
    if (sizes.empty()) throw ArgumentError("scaling_benchmark: empty size list");
    if (repeats < 1 || d < 1 || K < 0) throw ArgumentError("scaling_benchmark: need repeats >= 1, d >= 1, K >= 0");
    Rng rng(seed);
    BenchResult res;
    res.op = op;
    const GammaWeights gamma = GammaWeights::ppr(K, 0.1);
    using Clock = std::chrono::steady_clock;
    for (Index n : sizes) {
        if (n < 1) throw ArgumentError("scaling_benchmark: sizes must be positive");
        const Matrix v = normal_matrix(n, d, 1.0, rng);
        std::function<Matrix()> run;
        Matrix a;
        AttentionFactors f;
        if (op == BenchOp::gpa_exact_dense) {
            a = random_stochastic(n, rng);
            run = [&] { return gpa_exact(a, v, gamma); };
        } else {
            f = linear_attention_factors(normal_matrix(n, d, 1.0, rng), normal_matrix(n, d, 1.0, rng));
            run = [&] { return gpa_scalable(f, v, gamma); };
        }
        volatile double sink = run()(0, 0);  // warm-up, discarded
        std::vector<double> times;
        for (int r = 0; r < repeats; ++r) {
            const auto t0 = Clock::now();
            const Matrix z = run();
            const double s = std::chrono::duration<double>(Clock::now() - t0).count();
            sink = z(0, 0);
            times.push_back(s);
            res.rows.push_back({n, d, K, r, s});
        }
        (void)sink;
        res.sizes.push_back(n);
        res.medians.push_back(median(times));
    }
    std::vector<double> xs(res.sizes.begin(), res.sizes.end());
    res.slope = loglog_slope(xs, res.medians);
    return res;
}

void write_bench_csv(const BenchResult& r, const std::filesystem::path& file) {
    CsvTable t;
    t.header = {"op", "n", "d", "K", "repeat", "seconds"};
    for (const auto& row : r.rows)
        t.add_row({to_string(r.op), std::to_string(row.n), std::to_string(row.d), std::to_string(row.K),
                   std::to_string(row.repeat), format_number(row.seconds)});
    t.write(file);
}

}  // namespace paraformer::oracle
