#pragma once

#include "paraformer/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace paraformer {

struct SuiteResult {
    std::string name;
    int instances = 0;
    int passed = 0;
    int skipped = 0;
    double worst = 0.0;      // largest error (or smallest margin for theorem2)
    double tolerance = 0.0;
    double seconds = 0.0;
    long skipped_coords = 0;  // gradient suite: draws rejected for straddling a ReLU kink
    nlohmann::json failures = nlohmann::json::array();  // replay data for failing instances

    bool ok() const { return passed + skipped == instances && instances > 0; }
};

struct VerifyOptions {
    int trials = -1;  // per-suite default when negative
    std::uint64_t seed = 0;
    // Test hook: perturbs the scalable GPA output so the factorization suite must fail.
    bool inject_fault = false;
};

/// gpa_scalable vs gpa_exact on the materialized factors; n <= 64, d <= 16, K <= 10.
SuiteResult verify_factorization(const VerifyOptions& opt);
/// Row sums of softmax attention, Qhat Khat^T and their powers up to K = 10.
SuiteResult verify_row_stochastic(const VerifyOptions& opt);

struct GradientCase {
    AttentionMode mode = AttentionMode::scalable;
    GnnVariant gnn = GnnVariant::gcn2;
    bool combined = false;
};

/// Reverse-mode gradients against central differences on sampled
/// coordinates of a 12-node instance. `trials` instances per attention mode,
/// cycling through gcn2, gprgnn and the combined variant. Coordinates whose
/// +-h step changes a ReLU pattern are redrawn.
SuiteResult verify_gradients(const VerifyOptions& opt, int coords_per_instance = 50);
/// Mean-projection DC against the explicit DFT oracle.
SuiteResult verify_dc_oracle(const VerifyOptions& opt);
/// Prescribed two-term filter inequality on random 8 x 8 logits.
SuiteResult verify_theorem2(const VerifyOptions& opt);

}  // namespace paraformer
