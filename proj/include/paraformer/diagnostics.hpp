#pragma once

#include "paraformer/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace paraformer {

/// Mean L2 distance over ordered pairs of distinct rows. Needs n >= 2.
double pairwise_l2(const Matrix& h);

struct CosineResult {
    double value = 0.0;
    Index zero_rows = 0;  // rows left out of the average
};

/// Mean cosine similarity over ordered pairs of distinct nonzero rows.
/// Throws ArgumentError when fewer than two nonzero rows remain.
CosineResult cosine_sim(const Matrix& h);

struct SpectralSplit {
    Matrix dc;  // column means broadcast to every row
    Matrix hc;  // input - dc
};

SpectralSplit spectral_split(const Matrix& h);

/// ||HC[pre]||_F / ||HC[post]||_F; empty when either HC part is zero.
std::optional<double> hc_energy_ratio(const Matrix& pre, const Matrix& post);

/// sqrt((e^{2a} + n - 1) / (n e^{2a} wv_norm)) with a = max |P_ij|.
double smoothing_rate_closed_form(double alpha_p, Index n, double wv_norm);

struct SmoothingL1 {
    double c = 0.0;       // max absolute column sum of softmax(P)
    double lambda = 0.0;  // sqrt(c) * wv_norm
};

SmoothingL1 smoothing_rate_l1(const Matrix& logits, double wv_norm);

struct Theorem2Instance {
    double c = 0.0;      // ||S||_1
    double lhs = 0.0;    // ||gamma_0 I + gamma_1 S||_1 with gamma_0 = (c-1)/2, gamma_1 = -1/c
    double margin = 0.0; // c - lhs
    bool skipped = false;
    bool holds = false;
};

/// Evaluates the prescribed two-term filter on softmax(logits). Instances
/// with c <= 1 (within 1e-12) are marked skipped.
Theorem2Instance theorem2_check(const Matrix& logits);

struct Theorem2Report {
    int trials = 0;
    int skipped = 0;
    int passed = 0;
    int failed = 0;
    double min_margin = 0.0;
    double mean_margin = 0.0;
    double wv_norm = 1.0;
    std::vector<Theorem2Instance> instances;
};

/// Random n x n logits with N(0, logit_std^2) entries, `trials` times.
Theorem2Report theorem2_probe(Index n, int trials, std::uint64_t seed, double logit_std = 1.0, double wv_norm = 1.0);

struct HighpassCurve {
    std::vector<double> r;  // r[K] for K = 0..K_max
};

/// r(K) = ||DC[sum_{k<=K} (-a)^k A^k H]||_F / ||DC[H]||_F for K = 0..k_max.
/// Requires A row-stochastic (1e-8) and 0 < a < 1/n.
HighpassCurve highpass_probe(const Matrix& a_stochastic, double a, int k_max, const Matrix& h);

struct DepthSweepPoint {
    int depth = 0;
    double test_acc = 0.0;
    double d_l2 = 0.0;
    double s_cos = 0.0;
};

struct DepthSweepResult {
    std::string model_tag;
    std::vector<DepthSweepPoint> points;
};

/// One training per depth: layer count for the baselines, K for paraformer.
/// Metrics are taken on the eval-mode representation of the restored best
/// parameters over all nodes.
DepthSweepResult depth_sweep(const Dataset& ds, Architecture kind, const std::vector<int>& depths,
                             const ParaFormerConfig& base, const TrainConfig& tc, int workers = 1);

struct GammaSummary {
    std::vector<double> values;
    bool has_negative = false;
    double head_mean_abs = 0.0;  // k in [0, 3]
    std::optional<double> tail_mean_abs;  // k in [10, K], present when K >= 10
};

GammaSummary summarize_gamma(const std::vector<double>& gamma);
GammaSummary gamma_report(const TrainReport& report);
void write_gamma_csv(const GammaSummary& g, const std::filesystem::path& file);

/// Relative Frobenius gap between softmax(QK^T * scale) and Qhat Khat^T.
double attention_approximation_gap(const Matrix& q, const Matrix& k, ScaleMode scale_mode);

// ---------------------------------------------------------------------------
// Output helpers

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    void write(const std::filesystem::path& file) const;
};

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct ChartOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
};

/// Static line chart with axes, ticks and a legend.
void write_svg_chart(const std::filesystem::path& file, const std::vector<Series>& series, const ChartOptions& opt);

/// {probe}_{dataset}_{tag}
std::string probe_file_stem(const std::string& probe, const std::string& dataset, const std::string& tag);

void write_depth_sweep_csv(const std::vector<DepthSweepResult>& results, const std::filesystem::path& file);

}  // namespace paraformer
