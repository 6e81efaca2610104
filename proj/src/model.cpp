#include "paraformer/model.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace paraformer {

using nlohmann::json;

GnnVariant parse_gnn_variant(const std::string& s) {
    if (s == "gcn2") return GnnVariant::gcn2;
    if (s == "gprgnn") return GnnVariant::gprgnn;
    throw ArgumentError("unknown gnn_variant: " + s);
}

Architecture parse_architecture(const std::string& s) {
    if (s == "paraformer") return Architecture::paraformer;
    if (s == "vanilla_transformer" || s == "vanilla") return Architecture::vanilla_transformer;
    if (s == "sgformer_like" || s == "sgformer") return Architecture::sgformer_like;
    throw ArgumentError("unknown architecture: " + s);
}

GnnInput parse_gnn_input(const std::string& s) {
    if (s == "hidden") return GnnInput::hidden;
    if (s == "raw") return GnnInput::raw;
    throw ArgumentError("unknown gnn_input: " + s);
}

PoolMode parse_pool_mode(const std::string& s) {
    if (s == "mean") return PoolMode::mean;
    if (s == "sum") return PoolMode::sum;
    if (s == "max") return PoolMode::max;
    throw ArgumentError("unknown pool mode: " + s);
}

GammaInit parse_gamma_init(const std::string& s) {
    if (s == "ppr") return GammaInit::ppr;
    if (s == "uniform") return GammaInit::uniform;
    if (s == "explicit") return GammaInit::explicit_values;
    throw ArgumentError("unknown gamma_init: " + s);
}

std::string to_string(GnnVariant v) { return v == GnnVariant::gcn2 ? "gcn2" : "gprgnn"; }

std::string to_string(Architecture a) {
    switch (a) {
        case Architecture::paraformer: return "paraformer";
        case Architecture::vanilla_transformer: return "vanilla_transformer";
        case Architecture::sgformer_like: return "sgformer_like";
    }
    return "paraformer";
}

std::string to_string(GnnInput g) { return g == GnnInput::hidden ? "hidden" : "raw"; }

std::string to_string(PoolMode p) {
    switch (p) {
        case PoolMode::mean: return "mean";
        case PoolMode::sum: return "sum";
        case PoolMode::max: return "max";
    }
    return "mean";
}

std::string to_string(GammaInit g) {
    switch (g) {
        case GammaInit::ppr: return "ppr";
        case GammaInit::uniform: return "uniform";
        case GammaInit::explicit_values: return "explicit";
    }
    return "ppr";
}

void ParaFormerConfig::validate() const {
    if (K < 0) throw ArgumentError("config: K must be >= 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ArgumentError("config: beta must lie in [0, 1]");
    if (d_hidden < 1) throw ArgumentError("config: d_hidden must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ArgumentError("config: dropout_rate must lie in [0, 1)");
    if (gpr_K < 0) throw ArgumentError("config: gpr_K must be >= 0");
    if (num_layers < 1) throw ArgumentError("config: num_layers must be >= 1");
    if (gamma_init == GammaInit::explicit_values && gamma_values.size() != static_cast<std::size_t>(K) + 1)
        throw ArgumentError("config: gamma_values needs K+1 entries");
    if (gamma_init == GammaInit::ppr && !(alpha_damp > 0.0 && alpha_damp < 1.0))
        throw ArgumentError("config: alpha_damp must lie in (0, 1)");
}

GammaWeights ParaFormerConfig::initial_gamma() const {
    GammaWeights g;
    switch (gamma_init) {
        case GammaInit::ppr: g = GammaWeights::ppr(K, alpha_damp); break;
        case GammaInit::uniform: g = GammaWeights::uniform(K); break;
        case GammaInit::explicit_values: g = GammaWeights::from_values(gamma_values); break;
    }
    g.learnable = gamma_learnable;
    return g;
}

json to_json(const ParaFormerConfig& c) {
    json j;
    j["K"] = c.K;
    j["beta"] = c.beta;
    j["d_hidden"] = c.d_hidden;
    j["dropout_rate"] = c.dropout_rate;
    j["gnn_variant"] = to_string(c.gnn_variant);
    j["attention_mode"] = to_string(c.attention_mode);
    j["scale_mode"] = to_string(c.scale_mode);
    j["gamma_init"] = to_string(c.gamma_init);
    j["alpha_damp"] = c.alpha_damp;
    if (!c.gamma_values.empty()) j["gamma_values"] = c.gamma_values;
    j["gamma_learnable"] = c.gamma_learnable;
    j["gamma_nonnegative"] = c.gamma_nonnegative;
    j["combined_variant"] = c.combined_variant;
    j["gpr_K"] = c.gpr_K;
    j["gnn_input"] = to_string(c.gnn_input);
    j["architecture"] = to_string(c.architecture);
    j["num_layers"] = c.num_layers;
    j["pool"] = to_string(c.pool);
    return j;
}

ParaFormerConfig model_config_from_json(const json& j) {
    if (!j.is_object()) throw ArgumentError("model config must be a JSON object");
    ParaFormerConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "K") c.K = v.get<int>();
        else if (key == "beta") c.beta = v.get<double>();
        else if (key == "d_hidden") c.d_hidden = v.get<int>();
        else if (key == "dropout_rate") c.dropout_rate = v.get<double>();
        else if (key == "gnn_variant") c.gnn_variant = parse_gnn_variant(v.get<std::string>());
        else if (key == "attention_mode") c.attention_mode = parse_attention_mode(v.get<std::string>());
        else if (key == "scale_mode") c.scale_mode = parse_scale_mode(v.get<std::string>());
        else if (key == "gamma_init") c.gamma_init = parse_gamma_init(v.get<std::string>());
        else if (key == "alpha_damp") c.alpha_damp = v.get<double>();
        else if (key == "gamma_values") c.gamma_values = v.get<std::vector<double>>();
        else if (key == "gamma_learnable") c.gamma_learnable = v.get<bool>();
        else if (key == "gamma_nonnegative") c.gamma_nonnegative = v.get<bool>();
        else if (key == "combined_variant") c.combined_variant = v.get<bool>();
        else if (key == "gpr_K") c.gpr_K = v.get<int>();
        else if (key == "gnn_input") c.gnn_input = parse_gnn_input(v.get<std::string>());
        else if (key == "architecture") c.architecture = parse_architecture(v.get<std::string>());
        else if (key == "num_layers") c.num_layers = v.get<int>();
        else if (key == "pool") c.pool = parse_pool_mode(v.get<std::string>());
        else throw ArgumentError("unknown model config key: " + key);
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// ModelParams

void ModelParams::add(const std::string& name, Matrix value, bool trainable, bool decay) {
    if (has(name)) throw ArgumentError("duplicate parameter: " + name);
    names_.push_back(name);
    values_.push_back(std::move(value));
    trainable_.push_back(trainable);
    decay_.push_back(decay);
}

bool ModelParams::has(const std::string& name) const {
    for (const auto& n : names_)
        if (n == name) return true;
    return false;
}

std::size_t ModelParams::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return i;
    throw ArgumentError("no parameter named " + name);
}

Matrix& ModelParams::at(const std::string& name) { return values_[index_of(name)]; }
const Matrix& ModelParams::at(const std::string& name) const { return values_[index_of(name)]; }

Index ModelParams::num_scalars() const {
    Index total = 0;
    for (const auto& v : values_) total += v.size();
    return total;
}

namespace {

std::string attn_prefix(int layer) {
    return layer < 0 ? std::string("attn.") : "attn." + std::to_string(layer) + ".";
}

}  // namespace

AttentionParams ModelParams::attention(ScaleMode scale_mode, int layer) const {
    const std::string p = attn_prefix(layer);
    return {at(p + "wq"), at(p + "wk"), at(p + "wv"), scale_mode};
}

GammaWeights ModelParams::gamma() const {
    const Matrix& g = at("gamma");
    return GammaWeights::from_values(std::vector<double>(g.data(), g.data() + g.size()));
}

namespace {

Matrix fan_in_uniform(Index rows, Index cols, Rng& rng) {
    return uniform_matrix(rows, cols, 1.0 / std::sqrt(static_cast<double>(rows)), rng);
}

Matrix row_of(const std::vector<double>& v) {
    Matrix m(1, static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
    return m;
}

void add_linear(ModelParams& p, const std::string& prefix, Index in, Index out, Rng& rng, bool bias = true) {
    p.add(prefix + ".weight", fan_in_uniform(in, out, rng));
    if (bias) p.add(prefix + ".bias", Matrix::Zero(1, out));
}

}  // namespace

ModelParams init_params(const ParaFormerConfig& config, Index d_in, int num_classes, Rng& rng) {
    config.validate();
    if (d_in < 1 || num_classes < 1) throw ArgumentError("init_params: need d_in >= 1 and at least one class");
    const Index h = config.d_hidden;
    ModelParams p;
    add_linear(p, "input_proj", d_in, h, rng);

    if (config.architecture == Architecture::paraformer) {
        p.add("attn.wq", fan_in_uniform(h, h, rng));
        p.add("attn.wk", fan_in_uniform(h, h, rng));
        p.add("attn.wv", fan_in_uniform(h, h, rng));
        p.add("gamma", row_of(config.initial_gamma().values), config.gamma_learnable, false);
        if (config.combined_variant) {
            p.add("gamma_gnn", row_of(GammaWeights::ppr(config.K, config.alpha_damp).values), config.gamma_learnable,
                  false);
        } else {
            const Index gnn_in = config.gnn_input == GnnInput::raw ? d_in : h;
            if (config.gnn_variant == GnnVariant::gcn2) {
                add_linear(p, "gnn.0", gnn_in, h, rng);
                add_linear(p, "gnn.1", h, h, rng);
            } else {
                add_linear(p, "gnn.lin", gnn_in, h, rng);
                p.add("gnn.gamma", row_of(GammaWeights::ppr(config.gpr_K, 0.1).values), true, false);
            }
        }
    } else {
        for (int l = 0; l < config.num_layers; ++l) {
            const std::string pre = attn_prefix(l);
            p.add(pre + "wq", fan_in_uniform(h, h, rng));
            p.add(pre + "wk", fan_in_uniform(h, h, rng));
            p.add(pre + "wv", fan_in_uniform(h, h, rng));
        }
    }

    add_linear(p, "head.0", h, h, rng);
    add_linear(p, "head.1", h, num_classes, rng);
    return p;
}

// ---------------------------------------------------------------------------
// Inputs

GraphInputs GraphInputs::make(const FeatureMatrix& x, const Graph& g, double sparse_below) {
    require_shape(x.rows() == g.num_nodes(), "GraphInputs: feature rows differ from node count");
    GraphInputs in;
    in.n = x.rows();
    in.d_in = x.cols();
    const Index nnz = (x.array() != 0.0).count();
    if (x.size() > 0 && static_cast<double>(nnz) < sparse_below * static_cast<double>(x.size())) {
        in.x_sparse = std::make_shared<const SparseMatrix>(x.sparseView());
    } else {
        in.x_dense = std::make_shared<const Matrix>(x);
    }
    in.adj_norm = std::make_shared<const SparseMatrix>(normalize_adjacency(g, AdjacencyNorm::sym_selfloop));
    return in;
}

// ---------------------------------------------------------------------------
// Differentiable forward

namespace {

struct Builder {
    ad::Tape& tape;
    const GraphInputs& in;
    const ModelParams& params;
    const ParaFormerConfig& config;
    bool train_mode;
    Rng* rng;
    std::vector<ad::Var> vars;

    ad::Var p(const std::string& name) const { return vars[params.index_of(name)]; }

    ad::Var dropout(ad::Var x) {
        if (!train_mode || config.dropout_rate <= 0.0) return x;
        if (rng == nullptr) throw ArgumentError("forward: train_mode dropout needs an rng");
        auto mask = std::make_shared<Matrix>(x.rows(), x.cols());
        const double keep = 1.0 - config.dropout_rate;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (Index i = 0; i < mask->size(); ++i) mask->data()[i] = u(*rng) < keep ? 1.0 / keep : 0.0;
        return ad::mask_mul(x, mask);
    }

    ad::Var linear(ad::Var x, const std::string& prefix) {
        return ad::add_row_bias(ad::matmul(x, p(prefix + ".weight")), p(prefix + ".bias"));
    }

    // X W + b for the raw feature matrix.
    ad::Var input_linear(const std::string& prefix) {
        ad::Var xw = in.x_sparse ? ad::spmm(in.x_sparse, p(prefix + ".weight"))
                                 : ad::matmul(tape.constant(*in.x_dense), p(prefix + ".weight"));
        return ad::add_row_bias(xw, p(prefix + ".bias"));
    }

    ad::Var accumulate(ad::Var acc, ad::Var term, ad::Var gamma, Index k) {
        ad::Var t = ad::scale_by_entry(term, gamma, k);
        return acc.valid() ? ad::add(acc, t) : t;
    }

    // sum_k gamma_k A^k V with A the attention of (q, k).
    ad::Var gpa(ad::Var q, ad::Var k, ad::Var v, ad::Var gamma) {
        const Index order = gamma.cols() - 1;
        ad::Var z = ad::scale_by_entry(v, gamma, 0);
        if (order == 0) return z;
        if (config.attention_mode == AttentionMode::exact) {
            const double s = logit_scale(config.scale_mode, q.rows(), q.cols());
            ad::Var a = ad::attention_softmax(q, k, s);
            ad::Var pw = v;
            for (Index i = 1; i <= order; ++i) {
                pw = ad::matmul(a, pw);
                z = accumulate(z, pw, gamma, i);
            }
            return z;
        }
        ad::Var qh = ad::softmax_rows(q);
        ad::Var kh = ad::softmax_cols(k);
        ad::Var c = ad::matmul_tn(kh, qh);
        ad::Var m = ad::matmul_tn(kh, v);
        for (Index i = 1; i <= order; ++i) {
            z = accumulate(z, ad::matmul(qh, m), gamma, i);
            if (i < order) m = ad::matmul(c, m);
        }
        return z;
    }

    ad::Var gpr(ad::Var h, ad::Var gamma) {
        ad::Var z = ad::scale_by_entry(h, gamma, 0);
        ad::Var pw = h;
        for (Index i = 1; i < gamma.cols(); ++i) {
            pw = ad::spmm(in.adj_norm, pw);
            z = accumulate(z, pw, gamma, i);
        }
        return z;
    }

    ad::Var gnn_branch(ad::Var h) {
        const bool raw = config.gnn_input == GnnInput::raw;
        if (config.gnn_variant == GnnVariant::gcn2) {
            ad::Var xw = raw ? (in.x_sparse ? ad::spmm(in.x_sparse, p("gnn.0.weight"))
                                            : ad::matmul(tape.constant(*in.x_dense), p("gnn.0.weight")))
                             : ad::matmul(h, p("gnn.0.weight"));
            ad::Var g = ad::relu(ad::add_row_bias(ad::spmm(in.adj_norm, xw), p("gnn.0.bias")));
            g = dropout(g);
            return ad::add_row_bias(ad::spmm(in.adj_norm, ad::matmul(g, p("gnn.1.weight"))), p("gnn.1.bias"));
        }
        ad::Var lin = raw ? input_linear("gnn.lin") : linear(h, "gnn.lin");
        return gpr(lin, p("gnn.gamma"));
    }

    ad::Var paraformer_body(ad::Var h) {
        const double beta = config.beta;
        if (config.combined_variant) {
            ad::Var v = ad::matmul(h, p("attn.wv"));
            ad::Var z = gpa(ad::matmul(h, p("attn.wq")), ad::matmul(h, p("attn.wk")), v, p("gamma"));
            return ad::add(z, gpr(v, p("gamma_gnn")));
        }
        ad::Var z, g;
        if (beta < 1.0) z = gpa(ad::matmul(h, p("attn.wq")), ad::matmul(h, p("attn.wk")), ad::matmul(h, p("attn.wv")), p("gamma"));
        if (beta > 0.0) g = gnn_branch(h);
        if (!g.valid()) return z;
        if (!z.valid()) return g;
        return ad::lincomb(z, 1.0 - beta, g, beta);
    }

    ad::Var baseline_body(ad::Var h) {
        for (int l = 0; l < config.num_layers; ++l) {
            const std::string pre = attn_prefix(l);
            ad::Var q = ad::matmul(h, p(pre + "wq"));
            ad::Var k = ad::matmul(h, p(pre + "wk"));
            ad::Var v = ad::matmul(h, p(pre + "wv"));
            if (config.architecture == Architecture::vanilla_transformer) {
                const double s = logit_scale(config.scale_mode, q.rows(), q.cols());
                h = ad::matmul(ad::attention_softmax(q, k, s), v);
            } else {
                ad::Var qh = ad::softmax_rows(q);
                ad::Var kh = ad::softmax_cols(k);
                ad::Var attended = ad::matmul(qh, ad::matmul_tn(kh, v));
                h = ad::lincomb(v, 0.5, attended, 0.5);
            }
        }
        return h;
    }
};

}  // namespace

ForwardResult build_forward(ad::Tape& tape, const GraphInputs& in, const ModelParams& params,
                            const ParaFormerConfig& config, bool train_mode, Rng* dropout_rng, bool graph_task) {
    require_shape(in.n >= 1, "forward: graph has no nodes");
    require_shape(params.at("input_proj.weight").rows() == in.d_in, "forward: feature width differs from input_proj");
    Builder b{tape, in, params, config, train_mode, dropout_rng, {}};
    b.vars.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) b.vars.push_back(tape.leaf(params.value(i)));

    ad::Var h = b.dropout(ad::relu(b.input_linear("input_proj")));
    ad::Var z = config.architecture == Architecture::paraformer ? b.paraformer_body(h) : b.baseline_body(h);

    ad::Var pooled = z;
    if (graph_task) {
        switch (config.pool) {
            case PoolMode::mean: pooled = ad::mean_rows(z); break;
            case PoolMode::sum: pooled = ad::sum_rows(z); break;
            case PoolMode::max: pooled = ad::max_rows(z); break;
        }
    }
    ad::Var hidden = ad::relu(b.linear(b.dropout(pooled), "head.0"));
    ad::Var logits = b.linear(hidden, "head.1");
    return {logits, z, std::move(b.vars)};
}

std::pair<Prediction, Matrix> node_forward(const GraphInputs& in, const ModelParams& params,
                                           const ParaFormerConfig& config, bool train_mode, Rng* dropout_rng) {
    ad::Tape tape;
    ForwardResult f = build_forward(tape, in, params, config, train_mode, dropout_rng);
    return {Prediction{softmax_rows(f.logits.value())}, f.representation.value()};
}

Prediction graph_forward(const GraphInputs& in, const ModelParams& params, const ParaFormerConfig& config) {
    ad::Tape tape;
    ForwardResult f = build_forward(tape, in, params, config, false, nullptr, true);
    return Prediction{softmax_rows(f.logits.value())};
}

// ---------------------------------------------------------------------------
// Plain building blocks

Matrix gcn_layer(const Matrix& h, const SparseMatrix& a_norm, const Matrix& w, bool relu) {
    require_shape(a_norm.rows() == a_norm.cols() && a_norm.cols() == h.rows(), "gcn_layer: adjacency and H disagree on n");
    require_shape(h.cols() == w.rows(), "gcn_layer: H and W inner dimensions differ");
    Matrix out = a_norm * (h * w);
    if (relu) out = out.cwiseMax(0.0);
    return out;
}

Matrix gpr_propagate(const Matrix& h, const SparseMatrix& a_norm, const GammaWeights& gamma) {
    require_shape(a_norm.rows() == a_norm.cols() && a_norm.cols() == h.rows(), "gpr_propagate: adjacency and H disagree on n");
    if (gamma.values.empty()) throw ArgumentError("gpr_propagate: empty gamma");
    Matrix z = gamma.values[0] * h;
    Matrix pw = h;
    for (std::size_t k = 1; k < gamma.values.size(); ++k) {
        pw = a_norm * pw;
        z += gamma.values[k] * pw;
    }
    return z;
}

Matrix fuse(const Matrix& z, const Matrix& g, double beta) {
    require_shape(z.rows() == g.rows() && z.cols() == g.cols(), "fuse: Z and G differ in shape");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ArgumentError("fuse: beta must lie in [0, 1]");
    return (1.0 - beta) * z + beta * g;
}

namespace {

Matrix add_gnn_series(Matrix z, const SparseMatrix& a_norm, const Matrix& v, const GammaWeights& lambda_gnn) {
    require_shape(a_norm.rows() == v.rows() && a_norm.cols() == v.rows(), "combined_forward: adjacency and V disagree on n");
    if (lambda_gnn.values.empty()) return z;
    Matrix pw = v;
    z += lambda_gnn.values[0] * v;
    for (std::size_t k = 1; k < lambda_gnn.values.size(); ++k) {
        pw = a_norm * pw;
        z += lambda_gnn.values[k] * pw;
    }
    return z;
}

}  // namespace

Matrix combined_forward(const Matrix& a_like, const SparseMatrix& a_norm, const Matrix& v, const GammaWeights& lambda,
                        const GammaWeights& lambda_gnn) {
    require_shape(a_like.rows() == a_like.cols() && a_like.cols() == v.rows(), "combined_forward: attention and V disagree on n");
    Matrix z = Matrix::Zero(v.rows(), v.cols());
    Matrix pw = v;
    for (std::size_t k = 0; k < lambda.values.size(); ++k) {
        if (k > 0) pw = a_like * pw;
        z += lambda.values[k] * pw;
    }
    return add_gnn_series(std::move(z), a_norm, v, lambda_gnn);
}

Matrix combined_forward(const AttentionFactors& f, const SparseMatrix& a_norm, const Matrix& v,
                        const GammaWeights& lambda, const GammaWeights& lambda_gnn) {
    Matrix z = lambda.values.empty() ? Matrix::Zero(v.rows(), v.cols()) : gpa_scalable(f, v, lambda);
    return add_gnn_series(std::move(z), a_norm, v, lambda_gnn);
}

double cross_entropy_loss(const Matrix& probs, const std::vector<int>& labels, const std::vector<Index>& rows) {
    if (rows.empty()) throw ArgumentError("cross_entropy_loss: empty mask");
    double total = 0.0;
    for (Index i : rows) {
        require_shape(i >= 0 && i < probs.rows(), "cross_entropy_loss: mask index outside the prediction");
        const int y = labels.at(static_cast<std::size_t>(i));
        if (y < 0 || y >= probs.cols()) throw ArgumentError("cross_entropy_loss: masked node has no valid label");
        total -= std::log(std::max(probs(i, y), 1e-12));
    }
    return total / static_cast<double>(rows.size());
}

Matrix graph_pool(const Matrix& z, PoolMode mode) {
    if (z.rows() == 0) throw ArgumentError("graph_pool: empty matrix");
    switch (mode) {
        case PoolMode::mean: return z.colwise().mean();
        case PoolMode::sum: return z.colwise().sum();
        case PoolMode::max: return z.colwise().maxCoeff();
    }
    return z.colwise().mean();
}

double accuracy(const Matrix& scores, const std::vector<int>& labels, const std::vector<Index>& rows) {
    if (rows.empty()) return 0.0;
    Index hits = 0;
    for (Index i : rows) {
        Index best = 0;
        for (Index j = 1; j < scores.cols(); ++j)
            if (scores(i, j) > scores(i, best)) best = j;
        if (best == labels.at(static_cast<std::size_t>(i))) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(rows.size());
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const ModelParams& params, const ParaFormerConfig& config, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json meta;
    meta["config"] = to_json(config);
    meta["tensors"] = json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string file = params.name(i) + ".csv";
        write_matrix_csv(params.value(i), dir / file);
        meta["tensors"].push_back({{"name", params.name(i)},
                                   {"rows", params.value(i).rows()},
                                   {"cols", params.value(i).cols()},
                                   {"file", file},
                                   {"trainable", params.trainable(i)},
                                   {"decay", params.decay(i)}});
    }
    if (params.has("gamma")) meta["gamma"] = params.gamma().values;
    std::ofstream out(dir / "params.json");
    if (!out) throw Error("cannot write " + (dir / "params.json").string());
    out << meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto path = dir / "params.json";
    std::ifstream f(path);
    if (!f) throw DatasetError(DatasetError::Kind::missing_file, path, 0, "checkpoint metadata not found");
    json meta;
    try {
        meta = json::parse(f);
    } catch (const json::exception& e) {
        throw DatasetError(DatasetError::Kind::parse, path, 0, e.what());
    }
    Checkpoint ck;
    ck.config = model_config_from_json(meta.at("config"));
    for (const auto& t : meta.at("tensors")) {
        Matrix m = read_matrix_csv(dir / t.at("file").get<std::string>());
        if (m.rows() != t.at("rows").get<Index>() || m.cols() != t.at("cols").get<Index>())
            throw DatasetError(DatasetError::Kind::shape_mismatch, dir / t.at("file").get<std::string>(), 0,
                               "tensor shape differs from params.json");
        ck.params.add(t.at("name").get<std::string>(), std::move(m), t.at("trainable").get<bool>(),
                      t.at("decay").get<bool>());
    }
    return ck;
}

}  // namespace paraformer
