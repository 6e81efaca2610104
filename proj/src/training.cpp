#include "paraformer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include <sys/wait.h>
#include <unistd.h>

namespace paraformer {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ArgumentError("train: lr must be > 0");
    if (weight_decay < 0.0) throw ArgumentError("train: weight_decay must be >= 0");
    if (max_epochs < 0) throw ArgumentError("train: max_epochs must be >= 0");
    if (patience < 1) throw ArgumentError("train: patience must be >= 1");
    if (patience > max_epochs && max_epochs > 0) throw ArgumentError("train: patience exceeds max_epochs");
    if (eval_metric != "accuracy") throw ArgumentError("train: only eval_metric \"accuracy\" is supported");
}

json to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"seed", c.seed},
            {"eval_metric", c.eval_metric}};
}

TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw ArgumentError("train config must be a JSON object");
    TrainConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "lr") c.lr = v.get<double>();
        else if (key == "weight_decay") c.weight_decay = v.get<double>();
        else if (key == "max_epochs") c.max_epochs = v.get<int>();
        else if (key == "patience") c.patience = v.get<int>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "eval_metric") c.eval_metric = v.get<std::string>();
        else throw ArgumentError("unknown train config key: " + key);
    }
    c.validate();
    return c;
}

RunConfig read_run_config(const std::filesystem::path& file) {
    std::ifstream f(file);
    if (!f) throw ArgumentError("cannot open config file " + file.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ArgumentError("config " + file.string() + ": " + e.what());
    }
    RunConfig rc;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "model") rc.model = model_config_from_json(v);
            else if (key == "train") rc.train = train_config_from_json(v);
            else throw ArgumentError("unknown config section: " + key);
        }
    } catch (const json::exception& e) {
        throw ArgumentError("config " + file.string() + ": " + e.what());
    }
    return rc;
}

// ---------------------------------------------------------------------------
// Optimizer

OptimizerState OptimizerState::for_params(const ModelParams& params) {
    OptimizerState s;
    for (std::size_t i = 0; i < params.size(); ++i) {
        s.m.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
        s.v.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
    }
    return s;
}

void adam_step(ModelParams& params, const std::vector<Matrix>& grads, OptimizerState& state, double lr,
               double weight_decay) {
    require_shape(grads.size() == params.size() && state.m.size() == params.size(), "adam_step: tensor counts differ");
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params.trainable(i)) continue;
        Matrix& theta = params.value(i);
        const Matrix& g = grads[i];
        require_shape(g.rows() == theta.rows() && g.cols() == theta.cols(), "adam_step: gradient shape for " + params.name(i));
        if (weight_decay > 0.0 && params.decay(i)) theta *= (1.0 - lr * weight_decay);
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.cwiseProduct(g);
        theta.array() -= lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + state.eps);
    }
}

// ---------------------------------------------------------------------------
// Gradients

Gradients compute_gradients(const ModelParams& params, const GraphInputs& in, const std::vector<int>& labels,
                            const std::vector<Index>& rows, const ParaFormerConfig& config, Rng* dropout_rng) {
    ad::Tape tape;
    ForwardResult f = build_forward(tape, in, params, config, dropout_rng != nullptr, dropout_rng);
    ad::Var loss = ad::softmax_cross_entropy(f.logits, labels, rows);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
        std::string bad;
        for (std::size_t i = 0; i < params.size(); ++i)
            if (!all_finite(params.value(i))) bad += " " + params.name(i);
        if (!all_finite(f.logits.value())) bad += " logits";
        if (!all_finite(f.representation.value())) bad += " representation";
        throw NumericError("non-finite loss; non-finite tensors:" + (bad.empty() ? std::string(" none") : bad));
    }
    tape.backward(loss);
    Gradients g;
    g.loss = value;
    g.grads.reserve(params.size());
    for (const ad::Var& v : f.param_vars) g.grads.push_back(tape.grad(v));
    return g;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::vector<double> gamma_of(const ModelParams& p) {
    if (!p.has("gamma")) return {};
    return p.gamma().values;
}

void project_gamma(ModelParams& p, const ParaFormerConfig& config) {
    if (config.gamma_nonnegative && p.has("gamma")) p.at("gamma") = p.at("gamma").cwiseMax(0.0);
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

TrainResult train(const GraphInputs& in, const LabelVector& labels, const SplitMask& split,
                  const ParaFormerConfig& model, const TrainConfig& tc) {
    model.validate();
    tc.validate();
    split.validate(in.n, true);
    require_shape(labels.size() == in.n, "train: label count differs from node count");

    Rng init_rng(tc.seed);
    Rng dropout_rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
    TrainResult result{init_params(model, in.d_in, labels.num_classes, init_rng), {}};
    TrainReport& rep = result.report;
    rep.initial_gamma = gamma_of(result.params);

    auto evaluate = [&](const ModelParams& p, EpochRecord& r) {
        const Matrix probs = node_forward(in, p, model).first.probs;
        r.acc_train = accuracy(probs, labels.labels, split.train);
        r.acc_valid = accuracy(probs, labels.labels, split.valid);
        r.acc_test = accuracy(probs, labels.labels, split.test);
    };

    const auto start = Clock::now();
    if (tc.max_epochs == 0) {
        EpochRecord r;
        evaluate(result.params, r);
        rep.best_epoch = 0;
        rep.best_valid = r.acc_valid;
        rep.test_accuracy = r.acc_test;
        rep.final_gamma = rep.initial_gamma;
        return result;
    }

    OptimizerState state = OptimizerState::for_params(result.params);
    ModelParams best = result.params;
    rep.best_valid = -1.0;
    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        const auto t0 = Clock::now();
        EpochRecord r;
        r.epoch = epoch;
        Gradients g = compute_gradients(result.params, in, labels.labels, split.train, model, &dropout_rng);
        adam_step(result.params, g.grads, state, tc.lr, tc.weight_decay);
        project_gamma(result.params, model);
        r.loss = g.loss;
        evaluate(result.params, r);
        r.gamma = gamma_of(result.params);
        r.seconds = seconds_since(t0);
        rep.epochs.push_back(r);
        if (r.acc_valid > rep.best_valid) {
            rep.best_valid = r.acc_valid;
            rep.best_epoch = epoch;
            rep.test_accuracy = r.acc_test;
            best = result.params;
        } else if (epoch - rep.best_epoch >= tc.patience) {
            break;
        }
    }
    result.params = std::move(best);
    rep.final_gamma = gamma_of(result.params);
    rep.total_seconds = seconds_since(start);
    return result;
}

TrainResult train(const Dataset& ds, const ParaFormerConfig& model, const TrainConfig& tc) {
    return train(GraphInputs::make(ds.features, ds.graph), ds.labels, ds.split, model, tc);
}

std::pair<ModelParams, GraphTrainReport> train_graphs(const std::vector<GraphSample>& train_set,
                                                      const std::vector<GraphSample>& test_set, int num_classes,
                                                      const ParaFormerConfig& model, const TrainConfig& tc) {
    model.validate();
    tc.validate();
    if (train_set.empty()) throw ArgumentError("train_graphs: empty training set");
    Rng init_rng(tc.seed);
    Rng dropout_rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
    ModelParams params = init_params(model, train_set.front().inputs.d_in, num_classes, init_rng);
    OptimizerState state = OptimizerState::for_params(params);
    GraphTrainReport rep;

    auto acc = [&](const std::vector<GraphSample>& set) {
        if (set.empty()) return 0.0;
        int hits = 0;
        for (const auto& s : set) {
            const Matrix probs = graph_forward(s.inputs, params, model).probs;
            Index best = 0;
            probs.row(0).maxCoeff(&best);
            if (best == s.label) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(set.size());
    };

    const std::vector<Index> row0{0};
    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        std::vector<Matrix> total;
        double loss = 0.0;
        for (const auto& s : train_set) {
            ad::Tape tape;
            ForwardResult f = build_forward(tape, s.inputs, params, model, true, &dropout_rng, true);
            ad::Var l = ad::softmax_cross_entropy(f.logits, {s.label}, row0);
            if (!std::isfinite(l.value()(0, 0))) throw NumericError("train_graphs: non-finite loss");
            tape.backward(l);
            loss += l.value()(0, 0);
            for (std::size_t i = 0; i < f.param_vars.size(); ++i) {
                if (total.size() <= i) total.push_back(tape.grad(f.param_vars[i]));
                else total[i] += tape.grad(f.param_vars[i]);
            }
        }
        const double inv = 1.0 / static_cast<double>(train_set.size());
        for (auto& g : total) g *= inv;
        adam_step(params, total, state, tc.lr, tc.weight_decay);
        project_gamma(params, model);
        rep.loss.push_back(loss * inv);
        rep.acc_train.push_back(acc(train_set));
        rep.acc_test.push_back(acc(test_set));
    }
    return {std::move(params), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Reports

void write_train_report(const TrainReport& r, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    const std::size_t kg = r.initial_gamma.size();
    out << "epoch,loss,acc_train,acc_valid,acc_test";
    for (std::size_t k = 0; k < kg; ++k) out << ",gamma_" << k;
    out << "\n";
    for (const auto& e : r.epochs) {
        out << e.epoch << ',' << format_number(e.loss) << ',' << format_number(e.acc_train) << ','
            << format_number(e.acc_valid) << ',' << format_number(e.acc_test);
        for (double g : e.gamma) out << ',' << format_number(g);
        out << "\n";
    }
}

void write_summary(const TrainReport& r, const RunConfig& cfg, const std::filesystem::path& file, bool include_timing,
                   const std::string& dataset) {
    json s;
    if (!dataset.empty()) s["dataset"] = dataset;
    s["test_accuracy"] = r.test_accuracy;
    s["best_valid_accuracy"] = r.best_valid;
    s["best_epoch"] = r.best_epoch;
    s["epochs_run"] = r.epochs.size();
    s["initial_gamma"] = r.initial_gamma;
    s["final_gamma"] = r.final_gamma;
    s["config"] = {{"model", to_json(cfg.model)}, {"train", to_json(cfg.train)}};
    if (include_timing) {
        s["total_seconds"] = r.total_seconds;
        s["seconds_per_epoch"] = r.epochs.empty() ? 0.0 : r.total_seconds / static_cast<double>(r.epochs.size());
    }
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    out << s.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

bool is_train_key(const std::string& k) {
    return k == "lr" || k == "weight_decay" || k == "max_epochs" || k == "patience" || k == "seed" ||
           k == "eval_metric";
}

}  // namespace

std::vector<RunConfig> expand_grid(const RunConfig& base, const json& grid) {
    if (!grid.is_object() || grid.empty()) throw ArgumentError("sweep grid must be a nonempty JSON object");
    std::vector<std::string> keys;
    std::vector<json> values;
    for (const auto& [k, v] : grid.items()) {
        if (!v.is_array() || v.empty()) throw ArgumentError("sweep grid entry " + k + " must be a nonempty list");
        keys.push_back(k);
        values.push_back(v);
    }
    std::vector<RunConfig> out;
    std::vector<std::size_t> idx(keys.size(), 0);
    while (true) {
        json m = to_json(base.model);
        json t = to_json(base.train);
        for (std::size_t i = 0; i < keys.size(); ++i) (is_train_key(keys[i]) ? t : m)[keys[i]] = values[i][idx[i]];
        out.push_back({model_config_from_json(m), train_config_from_json(t)});
        std::size_t pos = keys.size();
        while (pos > 0) {
            --pos;
            if (++idx[pos] < values[pos].size()) break;
            idx[pos] = 0;
            if (pos == 0) return out;
        }
        if (keys.empty()) return out;
    }
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double mu = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

namespace {

void write_all(int fd, const void* data, std::size_t bytes) {
    const char* p = static_cast<const char*>(data);
    while (bytes > 0) {
        const ssize_t w = ::write(fd, p, bytes);
        if (w <= 0) _exit(3);
        p += w;
        bytes -= static_cast<std::size_t>(w);
    }
}

bool read_all(int fd, void* data, std::size_t bytes) {
    char* p = static_cast<char*>(data);
    while (bytes > 0) {
        const ssize_t r = ::read(fd, p, bytes);
        if (r <= 0) return false;
        p += r;
        bytes -= static_cast<std::size_t>(r);
    }
    return true;
}

}  // namespace

std::vector<std::vector<double>> run_parallel(std::size_t count, int workers,
                                              const std::function<std::vector<double>(std::size_t)>& fn) {
    std::vector<std::vector<double>> results(count);
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) results[i] = fn(i);
        return results;
    }
    const int w = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), count));
    std::vector<int> fds;
    std::vector<pid_t> pids;
    for (int k = 0; k < w; ++k) {
        int pipefd[2];
        if (::pipe(pipefd) != 0) throw Error("run_parallel: pipe failed");
        const pid_t pid = ::fork();
        if (pid < 0) throw Error("run_parallel: fork failed");
        if (pid == 0) {
            ::close(pipefd[0]);
            int status = 0;
            try {
                for (std::size_t i = static_cast<std::size_t>(k); i < count; i += static_cast<std::size_t>(w)) {
                    const std::vector<double> r = fn(i);
                    const std::uint64_t header[2] = {i, r.size()};
                    write_all(pipefd[1], header, sizeof(header));
                    write_all(pipefd[1], r.data(), r.size() * sizeof(double));
                }
            } catch (const std::exception& e) {
                std::fprintf(stderr, "worker %d: %s\n", k, e.what());
                status = 1;
            }
            ::close(pipefd[1]);
            _exit(status);
        }
        ::close(pipefd[1]);
        fds.push_back(pipefd[0]);
        pids.push_back(pid);
    }
    bool failed = false;
    for (int k = 0; k < w; ++k) {
        std::uint64_t header[2];
        while (read_all(fds[static_cast<std::size_t>(k)], header, sizeof(header))) {
            std::vector<double> r(header[1]);
            if (!read_all(fds[static_cast<std::size_t>(k)], r.data(), r.size() * sizeof(double)) || header[0] >= count) {
                failed = true;
                break;
            }
            results[header[0]] = std::move(r);
        }
        ::close(fds[static_cast<std::size_t>(k)]);
        int status = 0;
        ::waitpid(pids[static_cast<std::size_t>(k)], &status, 0);
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) failed = true;
    }
    if (failed) throw Error("run_parallel: a worker process failed");
    return results;
}

std::vector<SweepRow> sweep(const Dataset& ds, const std::vector<RunConfig>& grid, int seeds, std::uint64_t base_seed,
                            int workers) {
    if (grid.empty()) throw ArgumentError("sweep: empty grid");
    if (seeds < 1) throw ArgumentError("sweep: need at least one seed");
    const GraphInputs in = GraphInputs::make(ds.features, ds.graph);
    const std::size_t s = static_cast<std::size_t>(seeds);
    auto results = run_parallel(grid.size() * s, workers, [&](std::size_t item) {
        RunConfig rc = grid[item / s];
        rc.train.seed = base_seed + item % s;
        TrainResult r = train(in, ds.labels, ds.split, rc.model, rc.train);
        return std::vector<double>{r.report.best_valid, r.report.test_accuracy};
    });
    std::vector<SweepRow> rows;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        SweepRow row;
        row.config = grid[c];
        for (std::size_t k = 0; k < s; ++k) {
            row.valid_acc.push_back(results[c * s + k].at(0));
            row.test_acc.push_back(results[c * s + k].at(1));
        }
        row.mean_test = mean_of(row.test_acc);
        row.std_test = stddev_of(row.test_acc);
        row.mean_valid = mean_of(row.valid_acc);
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const SweepRow& a, const SweepRow& b) { return a.mean_valid > b.mean_valid; });
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const json& grid, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    std::vector<std::string> keys;
    for (const auto& [k, v] : grid.items()) keys.push_back(k);
    out << "rank";
    for (const auto& k : keys) out << ',' << k;
    out << ",mean_valid,mean_test,std_test";
    const std::size_t seeds = rows.empty() ? 0 : rows.front().test_acc.size();
    for (std::size_t s = 0; s < seeds; ++s) out << ",test_seed_" << s;
    out << "\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const json m = to_json(rows[r].config.model);
        const json t = to_json(rows[r].config.train);
        out << r + 1;
        for (const auto& k : keys) {
            const json& v = is_train_key(k) ? t.at(k) : m.at(k);
            out << ',' << (v.is_string() ? v.get<std::string>() : v.dump());
        }
        out << ',' << format_number(rows[r].mean_valid) << ',' << format_number(rows[r].mean_test) << ','
            << format_number(rows[r].std_test);
        for (double a : rows[r].test_acc) out << ',' << format_number(a);
        out << "\n";
    }
}

}  // namespace paraformer
