#pragma once

#include "paraformer/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

// Slow references for the optimized paths. The reference functions share no
// code with attention.cpp, model.cpp or diagnostics.cpp; only the benchmark
// calls the kernels it times.
namespace paraformer::oracle {

struct Tolerance {
    double rel_tol = 1e-10;
    double abs_floor = 1e-12;
};

/// sum_k gamma_k A^k V, each A^k rebuilt from scratch by k full products.
Matrix naive_gpa(const Matrix& a, const Matrix& v, const std::vector<double>& gamma);

/// Triple-loop product.
Matrix naive_matmul(const Matrix& a, const Matrix& b);

/// exp / row-sum without max subtraction.
Matrix naive_softmax_rows(const Matrix& x);

struct Coord {
    std::size_t tensor = 0;
    Index row = 0;
    Index col = 0;
};

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for each coord.
/// Throws NumericError on a non-finite evaluation.
std::vector<double> finite_diff_grad(const std::function<double(const ModelParams&)>& loss, const ModelParams& params,
                                     const std::vector<Coord>& coords, double h = 1e-4);

/// `count` coordinates drawn uniformly over all scalars of `params`.
std::vector<Coord> sample_coords(const ModelParams& params, std::size_t count, Rng& rng);

/// Per-column DC part via the explicit n x n DFT matrix: keep bin 0,
/// inverse transform. Throws NumericError if the imaginary residue exceeds 1e-10.
Matrix dft_dc_oracle(const Matrix& h);

enum class BenchOp { gpa_exact_dense, gpa_scalable };

BenchOp parse_bench_op(const std::string& s);
std::string to_string(BenchOp op);

struct BenchRow {
    Index n = 0;
    Index d = 0;
    int K = 0;
    int repeat = 0;
    double seconds = 0.0;
};

struct BenchResult {
    BenchOp op = BenchOp::gpa_scalable;
    std::vector<BenchRow> rows;
    std::vector<Index> sizes;
    std::vector<double> medians;
    double slope = 0.0;  // least-squares slope of log(median) on log(n); 0 for one size
};

/// Times the GPA kernel on random inputs per size (one discarded warm-up,
/// then `repeats` timed runs). Dense runs gpa_exact on a materialized
/// stochastic n x n matrix; scalable runs gpa_scalable on precomputed factors.
BenchResult scaling_benchmark(BenchOp op, const std::vector<Index>& sizes, Index d, int K, int repeats,
                              std::uint64_t seed);

/// op, n, d, K, repeat, seconds
void write_bench_csv(const BenchResult& r, const std::filesystem::path& file);

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);
double median(std::vector<double> v);

}  // namespace paraformer::oracle
