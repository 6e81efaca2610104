#pragma once

#include "paraformer/attention.hpp"
#include "paraformer/autodiff.hpp"
#include "paraformer/graph_io.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace paraformer {

enum class GnnVariant { gcn2, gprgnn };
enum class Architecture { paraformer, vanilla_transformer, sgformer_like };
enum class GnnInput { hidden, raw };
enum class PoolMode { mean, sum, max };

GnnVariant parse_gnn_variant(const std::string& s);
Architecture parse_architecture(const std::string& s);
GnnInput parse_gnn_input(const std::string& s);
PoolMode parse_pool_mode(const std::string& s);
GammaInit parse_gamma_init(const std::string& s);
std::string to_string(GnnVariant v);
std::string to_string(Architecture a);
std::string to_string(GnnInput g);
std::string to_string(PoolMode p);
std::string to_string(GammaInit g);

struct ParaFormerConfig {
    int K = 10;
    double beta = 0.7;
    int d_hidden = 64;
    double dropout_rate = 0.5;
    GnnVariant gnn_variant = GnnVariant::gcn2;
    AttentionMode attention_mode = AttentionMode::scalable;
    ScaleMode scale_mode = ScaleMode::inv_sqrt_d;
    GammaInit gamma_init = GammaInit::ppr;
    double alpha_damp = 0.1;
    std::vector<double> gamma_values;  // used when gamma_init is explicit_values
    bool gamma_learnable = true;
    // Projects gamma onto [0, inf) after every optimizer step.
    bool gamma_nonnegative = false;
    // Sum_k (lambda_k A^k + lambda'_k Atilde^k) V in place of the separate GNN branch.
    bool combined_variant = false;
    int gpr_K = 10;
    GnnInput gnn_input = GnnInput::hidden;
    Architecture architecture = Architecture::paraformer;
    // Stacked attention layers for the two baselines.
    int num_layers = 1;
    PoolMode pool = PoolMode::mean;

    /// Throws ArgumentError on out-of-range fields.
    void validate() const;
    GammaWeights initial_gamma() const;
};

nlohmann::json to_json(const ParaFormerConfig& c);
/// Unknown keys are rejected so typos fail before any compute.
ParaFormerConfig model_config_from_json(const nlohmann::json& j);

/// Named trainable tensors, kept in creation order.
class ModelParams {
public:
    void add(const std::string& name, Matrix value, bool trainable = true, bool decay = true);

    bool has(const std::string& name) const;
    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;

    std::size_t size() const { return values_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Matrix& value(std::size_t i) { return values_[i]; }
    const Matrix& value(std::size_t i) const { return values_[i]; }
    bool trainable(std::size_t i) const { return trainable_[i]; }
    bool decay(std::size_t i) const { return decay_[i]; }
    Index num_scalars() const;

    /// Copies W_Q, W_K, W_V of attention layer `layer` (or the single GPA layer).
    AttentionParams attention(ScaleMode scale_mode, int layer = -1) const;
    GammaWeights gamma() const;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
    std::vector<bool> trainable_;
    std::vector<bool> decay_;
};

/// Parameter shapes are fixed by (config, d_in, c); values drawn from rng.
/// Weight matrices are uniform in +-1/sqrt(fan_in), biases zero.
ModelParams init_params(const ParaFormerConfig& config, Index d_in, int num_classes, Rng& rng);

/// Inputs for one graph: features (sparse when mostly zero) and the
/// self-loop normalized adjacency used by the GNN branch.
struct GraphInputs {
    Index n = 0;
    Index d_in = 0;
    std::shared_ptr<const SparseMatrix> x_sparse;
    std::shared_ptr<const Matrix> x_dense;
    std::shared_ptr<const SparseMatrix> adj_norm;

    static GraphInputs make(const FeatureMatrix& x, const Graph& g, double sparse_below = 0.1);
};

struct Prediction {
    Matrix probs;  // rows sum to one
};

struct ForwardResult {
    ad::Var logits;          // n x c, or 1 x c for the graph task
    ad::Var representation;  // fused Zhat (or the last attention layer for the baselines)
    std::vector<ad::Var> param_vars;  // aligned with ModelParams
};

/// Records the full model on `tape`. Dropout is applied only when
/// `train_mode` is set, drawing masks from `dropout_rng`.
ForwardResult build_forward(ad::Tape& tape, const GraphInputs& in, const ModelParams& params,
                            const ParaFormerConfig& config, bool train_mode, Rng* dropout_rng,
                            bool graph_task = false);

/// Inference wrapper: softmax of the logits plus the fused representation.
std::pair<Prediction, Matrix> node_forward(const GraphInputs& in, const ModelParams& params,
                                           const ParaFormerConfig& config, bool train_mode = false,
                                           Rng* dropout_rng = nullptr);
/// Pooled 1 x c prediction for one graph.
Prediction graph_forward(const GraphInputs& in, const ModelParams& params, const ParaFormerConfig& config);

/// act(A H W).
Matrix gcn_layer(const Matrix& h, const SparseMatrix& a_norm, const Matrix& w, bool relu);
/// sum_k gamma_k A^k H by running accumulation.
Matrix gpr_propagate(const Matrix& h, const SparseMatrix& a_norm, const GammaWeights& gamma);
/// (1 - beta) Z + beta G.
Matrix fuse(const Matrix& z, const Matrix& g, double beta);
/// sum_k (lambda_k A^k + lambda'_k Atilde^k) V with two running accumulators.
Matrix combined_forward(const Matrix& a_like, const SparseMatrix& a_norm, const Matrix& v, const GammaWeights& lambda,
                        const GammaWeights& lambda_gnn);
/// Scalable form: the attention term uses the factored recursion.
Matrix combined_forward(const AttentionFactors& f, const SparseMatrix& a_norm, const Matrix& v,
                        const GammaWeights& lambda, const GammaWeights& lambda_gnn);

/// Mean of -log max(P[i, y_i], 1e-12) over `rows`. Throws ArgumentError on an empty mask.
double cross_entropy_loss(const Matrix& probs, const std::vector<int>& labels, const std::vector<Index>& rows);
Matrix graph_pool(const Matrix& z, PoolMode mode);

/// Fraction of `rows` whose argmax matches the label.
double accuracy(const Matrix& scores, const std::vector<int>& labels, const std::vector<Index>& rows);

/// Writes one CSV per tensor plus params.json (shapes, config echo, gamma).
void save_checkpoint(const ModelParams& params, const ParaFormerConfig& config, const std::filesystem::path& dir);
struct Checkpoint {
    ModelParams params;
    ParaFormerConfig config;
};
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace paraformer
