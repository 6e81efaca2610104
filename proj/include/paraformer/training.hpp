#pragma once

#include "paraformer/model.hpp"

#include <cstdint>
#include <functional>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace paraformer {

struct TrainConfig {
    double lr = 0.01;
    double weight_decay = 5e-4;
    int max_epochs = 1000;
    int patience = 100;
    std::uint64_t seed = 0;
    std::string eval_metric = "accuracy";

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct RunConfig {
    ParaFormerConfig model;
    TrainConfig train;
};

/// {"model": {...}, "train": {...}}; either section may be omitted.
RunConfig read_run_config(const std::filesystem::path& file);

struct OptimizerState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptimizerState for_params(const ModelParams& params);
};

/// Decoupled weight decay, then the bias-corrected Adam update. Frozen
/// parameters are left untouched; `decay` is skipped for tensors that opt out.
void adam_step(ModelParams& params, const std::vector<Matrix>& grads, OptimizerState& state, double lr,
               double weight_decay);

struct Gradients {
    double loss = 0.0;
    std::vector<Matrix> grads;  // aligned with ModelParams
};

/// Loss over `rows` and its gradient for every tensor. Dropout masks come
/// from `dropout_rng` when non-null (train mode); otherwise the forward is
/// deterministic. Throws NumericError naming non-finite tensors.
Gradients compute_gradients(const ModelParams& params, const GraphInputs& in, const std::vector<int>& labels,
                            const std::vector<Index>& rows, const ParaFormerConfig& config, Rng* dropout_rng);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double acc_train = 0.0;
    double acc_valid = 0.0;
    double acc_test = 0.0;
    double seconds = 0.0;
    std::vector<double> gamma;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_valid = 0.0;
    double test_accuracy = 0.0;  // at the best epoch (or the initial params)
    std::vector<double> initial_gamma;
    std::vector<double> final_gamma;
    double total_seconds = 0.0;
};

struct TrainResult {
    ModelParams params;
    TrainReport report;
};

/// Full-batch training with early stopping on validation accuracy; the
/// best-epoch parameters are restored before returning.
TrainResult train(const Dataset& ds, const ParaFormerConfig& model, const TrainConfig& tc);
TrainResult train(const GraphInputs& in, const LabelVector& labels, const SplitMask& split,
                  const ParaFormerConfig& model, const TrainConfig& tc);

struct GraphSample {
    GraphInputs inputs;
    int label = 0;
};

struct GraphTrainReport {
    std::vector<double> loss;
    std::vector<double> acc_train;
    std::vector<double> acc_test;
};

/// Graph classification: one pooled prediction per graph, loss averaged over
/// `train` graphs each epoch.
std::pair<ModelParams, GraphTrainReport> train_graphs(const std::vector<GraphSample>& train_set,
                                                      const std::vector<GraphSample>& test_set, int num_classes,
                                                      const ParaFormerConfig& model, const TrainConfig& tc);

/// train_report.csv columns: epoch, loss, acc_train, acc_valid, acc_test, gamma_0..gamma_K.
void write_train_report(const TrainReport& r, const std::filesystem::path& file);
/// summary.json; wall-clock entries are omitted when `include_timing` is false.
void write_summary(const TrainReport& r, const RunConfig& cfg, const std::filesystem::path& file, bool include_timing,
                   const std::string& dataset = "");

struct SweepRow {
    RunConfig config;
    std::vector<double> test_acc;
    std::vector<double> valid_acc;
    double mean_test = 0.0;
    double std_test = 0.0;
    double mean_valid = 0.0;
};

/// Cartesian product of grid values applied over `base`. Grid keys name
/// model or train fields ("beta", "lr", ...); each value is a JSON list.
std::vector<RunConfig> expand_grid(const RunConfig& base, const nlohmann::json& grid);

/// Runs every config with seeds base_seed .. base_seed + seeds - 1, rows
/// sorted by mean validation accuracy (descending, stable). `workers` > 1
/// forks that many processes.
std::vector<SweepRow> sweep(const Dataset& ds, const std::vector<RunConfig>& grid, int seeds, std::uint64_t base_seed,
                            int workers = 1);
void write_sweep_csv(const std::vector<SweepRow>& rows, const nlohmann::json& grid, const std::filesystem::path& file);

/// Runs fn(i) for i in [0, count) across `workers` forked processes and
/// returns the per-item results (a vector of doubles each). Falls back to
/// in-process execution when workers <= 1.
std::vector<std::vector<double>> run_parallel(std::size_t count, int workers,
                                              const std::function<std::vector<double>(std::size_t)>& fn);

double mean_of(const std::vector<double>& v);
/// Population standard deviation.
double stddev_of(const std::vector<double>& v);

}  // namespace paraformer
