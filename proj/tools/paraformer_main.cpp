#include "paraformer/diagnostics.hpp"
#include "paraformer/oracle.hpp"
#include "paraformer/training.hpp"
#include "paraformer/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace paraformer;
using nlohmann::json;

namespace {

// Exit 1: a suite or check reported failure.
struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Global {
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    std::string out = "runs/out";
    bool strict = false;
    int workers = 1;
};

fs::path resolve_data(const std::string& arg) {
    if (arg.empty()) {
        const char* root = std::getenv("PARAFORMER_DATA_DIR");
        if (root == nullptr) throw ArgumentError("--data is required (or set PARAFORMER_DATA_DIR)");
        return fs::path(root) / "cora";
    }
    fs::path p(arg);
    if (fs::exists(p)) return p;
    if (const char* root = std::getenv("PARAFORMER_DATA_DIR"); root != nullptr && p.is_relative()) {
        fs::path q = fs::path(root) / p;
        if (fs::exists(q)) return q;
    }
    return p;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    if (const auto dots = s.find(".."); dots != std::string::npos) {
        const int a = std::stoi(s.substr(0, dots));
        const int b = std::stoi(s.substr(dots + 2));
        if (b < a) throw ArgumentError("empty range " + s);
        for (int i = a; i <= b; ++i) out.push_back(i);
        return out;
    }
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoi(item));
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    if (!fs::exists(path)) throw ArgumentError("config file not found: " + path);
    return read_run_config(path);
}

fs::path checkpoint_dir(const fs::path& run) {
    if (fs::exists(run / "params.json")) return run;
    return run / "checkpoint";
}

std::string pct(double x) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * x;
    return s.str();
}

// ---------------------------------------------------------------------------

int cmd_train(const Global& g, const std::string& data, const std::string& config) {
    RunConfig rc = load_config_or_default(config);
    if (config.empty()) throw ArgumentError("--config is required");
    if (g.seed_opt->count() > 0) rc.train.seed = g.seed;
    const Dataset ds = load_dataset(resolve_data(data));
    const TrainResult r = train(ds, rc.model, rc.train);
    const fs::path out(g.out);
    fs::create_directories(out);
    write_train_report(r.report, out / "train_report.csv");
    write_summary(r.report, rc, out / "summary.json", !g.strict, ds.manifest.name);
    save_checkpoint(r.params, rc.model, out / "checkpoint");
    std::cout << "dataset " << ds.manifest.name << "  epochs " << r.report.epochs.size() << "  best_epoch "
              << r.report.best_epoch << "\n";
    std::cout << "valid_accuracy " << pct(r.report.best_valid) << "\n";
    std::cout << "test_accuracy " << pct(r.report.test_accuracy) << "\n";
    return 0;
}

int cmd_eval(const Global& g, const std::string& data, const std::string& run) {
    const Checkpoint ck = load_checkpoint(checkpoint_dir(run));
    const Dataset ds = load_dataset(resolve_data(data));
    const GraphInputs in = GraphInputs::make(ds.features, ds.graph);
    const auto [pred, rep] = node_forward(in, ck.params, ck.config);
    json j;
    j["train_accuracy"] = accuracy(pred.probs, ds.labels.labels, ds.split.train);
    j["valid_accuracy"] = accuracy(pred.probs, ds.labels.labels, ds.split.valid);
    j["test_accuracy"] = accuracy(pred.probs, ds.labels.labels, ds.split.test);
    j["test_loss"] = ds.split.test.empty() ? 0.0 : cross_entropy_loss(pred.probs, ds.labels.labels, ds.split.test);
    fs::create_directories(g.out);
    std::ofstream(fs::path(g.out) / "eval.json") << j.dump(2) << "\n";
    std::cout << "train_accuracy " << pct(j["train_accuracy"]) << "\nvalid_accuracy " << pct(j["valid_accuracy"])
              << "\ntest_accuracy " << pct(j["test_accuracy"]) << "\n";
    return 0;
}

int cmd_sweep(const Global& g, const std::string& data, const std::string& config, const std::string& grid_arg,
              int seeds) {
    const RunConfig base = load_config_or_default(config);
    json grid;
    try {
        grid = fs::exists(grid_arg) ? json::parse(std::ifstream(grid_arg)) : json::parse(grid_arg);
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("--grid is neither a file nor JSON: ") + e.what());
    }
    const auto configs = expand_grid(base, grid);
    const Dataset ds = load_dataset(resolve_data(data));
    const auto rows = sweep(ds, configs, seeds, g.seed_opt->count() ? g.seed : base.train.seed, g.workers);
    fs::create_directories(g.out);
    const fs::path file = fs::path(g.out) / ("sweep_" + ds.manifest.name + ".csv");
    write_sweep_csv(rows, grid, file);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::cout << i + 1 << ".";
        const json m = to_json(rows[i].config.model), t = to_json(rows[i].config.train);
        for (const auto& [k, v] : grid.items()) std::cout << " " << k << "=" << (m.contains(k) ? m[k] : t[k]).dump();
        std::cout << "  valid " << pct(rows[i].mean_valid) << "  test " << pct(rows[i].mean_test) << " +- "
                  << pct(rows[i].std_test) << "\n";
    }
    std::cout << "wrote " << file.string() << "\n";
    return 0;
}

int cmd_verify(const Global& g, const std::string& suite, int trials, bool inject_fault) {
    VerifyOptions opt;
    opt.trials = trials;
    opt.seed = g.seed;
    opt.inject_fault = inject_fault;
    std::vector<SuiteResult> results;
    const bool all = suite == "all";
    bool known = false;
    auto run = [&](const std::string& name, auto fn) {
        if (all || suite == name) {
            known = true;
            results.push_back(fn(opt));
        }
    };
    run("factorization", verify_factorization);
    run("row-stochastic", verify_row_stochastic);
    run("gradients", [](const VerifyOptions& o) { return verify_gradients(o); });
    run("dc-oracle", verify_dc_oracle);
    run("theorem2", verify_theorem2);
    if (!known) throw ArgumentError("unknown suite: " + suite);

    bool ok = true;
    json failures = json::object();
    std::cout << std::left << std::setw(16) << "suite" << std::setw(10) << "checked" << std::setw(9) << "passed"
              << std::setw(9) << "skipped" << std::setw(14) << "worst" << std::setw(10) << "tol"
              << "result\n";
    for (const auto& r : results) {
        std::cout << std::setw(16) << r.name << std::setw(10) << r.instances << std::setw(9) << r.passed << std::setw(9)
                  << r.skipped << std::setw(14) << std::setprecision(4) << r.worst << std::setw(10)
                  << (r.name == "theorem2" ? std::string("margin>0") : format_number(r.tolerance))
                  << (r.ok() ? "PASS" : "FAIL") << "\n";
        if (!r.ok()) {
            ok = false;
            failures[r.name] = r.failures;
        }
    }
    if (!ok) {
        fs::create_directories(g.out);
        const fs::path f = fs::path(g.out) / "verify_failures.json";
        std::ofstream(f) << failures.dump(2) << "\n";
        std::cout << "failing instances written to " << f.string() << "\n";
        throw CheckFailed("verification failed");
    }
    return 0;
}

int diagnose_oversmoothing(const Global& g, const std::string& data, const std::string& config,
                           const std::string& models, const std::string& depths_arg, int epochs, const std::string& tag) {
    RunConfig rc = load_config_or_default(config);
    if (g.seed_opt->count() > 0) rc.train.seed = g.seed;
    if (epochs > 0) {
        rc.train.max_epochs = epochs;
        rc.train.patience = std::min(rc.train.patience, epochs);
    }
    const auto depths = parse_int_list(depths_arg);
    if (depths.empty()) throw ArgumentError("--depths is empty");
    const Dataset ds = load_dataset(resolve_data(data));
    std::vector<DepthSweepResult> results;
    std::vector<Series> series;
    for (const auto& m : split_list(models)) {
        const DepthSweepResult r = depth_sweep(ds, parse_architecture(m), depths, rc.model, rc.train, g.workers);
        write_depth_sweep_csv({r}, fs::path(g.out) / (probe_file_stem("oversmoothing", ds.manifest.name, r.model_tag) + ".csv"));
        Series s{r.model_tag, {}, {}};
        for (const auto& p : r.points) {
            s.x.push_back(p.depth);
            s.y.push_back(p.d_l2);
            std::cout << r.model_tag << " depth " << p.depth << "  test " << pct(p.test_acc) << "  D_L2 " << p.d_l2
                      << "  S_cos " << p.s_cos << "\n";
        }
        std::cout << r.model_tag << " D_L2(last)/D_L2(first) = " << r.points.back().d_l2 / r.points.front().d_l2 << "\n";
        series.push_back(std::move(s));
        results.push_back(r);
    }
    write_svg_chart(fs::path(g.out) / (probe_file_stem("oversmoothing", ds.manifest.name, tag) + ".svg"), series,
                    {"Mean pairwise distance of final representations", "depth (layers or K)", "D_L2", false, true});
    return 0;
}

int diagnose_filter(const Global& g, double a, int n, int kmax, int trials) {
    Rng rng(g.seed);
    CsvTable t;
    t.header = {"matrix", "K", "r", "oracle"};
    std::vector<Series> series;

    const Matrix h = normal_matrix(n, 4, 1.0, rng) + Matrix::Constant(n, 4, 1.0);
    const HighpassCurve uni = highpass_probe(Matrix::Constant(n, n, 1.0 / n), a, kmax, h);
    double oracle_err = 0.0, partial = 0.0, term = 1.0;
    Series su{"uniform", {}, {}};
    for (int k = 0; k <= kmax; ++k) {
        partial += term;
        term *= -a;
        oracle_err = std::max(oracle_err, std::abs(uni.r[k] - std::abs(partial)));
        t.add_row({"uniform", std::to_string(k), format_number(uni.r[k]), format_number(std::abs(partial))});
        su.x.push_back(k);
        su.y.push_back(uni.r[k]);
    }
    series.push_back(su);

    int decreasing = 0;
    for (int i = 0; i < trials; ++i) {
        const Matrix A = random_stochastic(n, rng);
        const HighpassCurve c = highpass_probe(A, a, kmax, normal_matrix(n, 4, 1.0, rng) + Matrix::Constant(n, 4, 1.0));
        Series s{"random_" + std::to_string(i), {}, {}};
        for (int k = 0; k <= kmax; ++k) {
            t.add_row({s.name, std::to_string(k), format_number(c.r[k]), ""});
            s.x.push_back(k);
            s.y.push_back(c.r[k]);
        }
        if (kmax >= 2 && c.r[kmax] < c.r[2]) ++decreasing;
        if (i < 5) series.push_back(std::move(s));
    }
    const std::string stem = probe_file_stem("filter", "synthetic", "n" + std::to_string(n));
    t.write(fs::path(g.out) / (stem + ".csv"));
    write_svg_chart(fs::path(g.out) / (stem + ".svg"), series,
                    {"DC retention of the alternating filter", "K", "r(K)", false, false});
    std::cout << "uniform matrix: max |r(K) - |sum_k (-a)^k|| = " << oracle_err << "\n";
    if (kmax >= 2)
        std::cout << "random matrices with r(" << kmax << ") < r(2): " << decreasing << "/" << trials << "\n";
    std::cout << "uniform r(" << kmax << ") = " << uni.r[kmax] << " (limit 1/(1+a) = " << 1.0 / (1.0 + a) << ")\n";
    if (oracle_err > 1e-10 || (kmax >= 2 && decreasing != trials)) throw CheckFailed("filter probe check failed");
    return 0;
}

int diagnose_gamma(const Global& g, const std::string& run, const std::string& tag_arg) {
    const Checkpoint ck = load_checkpoint(checkpoint_dir(run));
    if (!ck.params.has("gamma")) throw ArgumentError("checkpoint has no gamma tensor");
    std::string dataset = "run";
    if (std::ifstream sf(fs::path(run) / "summary.json"); sf) {
        const json s = json::parse(sf, nullptr, false);
        if (s.is_object() && s.contains("dataset")) dataset = s["dataset"].get<std::string>();
    }
    const std::string tag = tag_arg.empty() ? fs::path(run).filename().string() : tag_arg;
    const GammaSummary sum = summarize_gamma(ck.params.gamma().values);
    const std::string stem = probe_file_stem("gamma", dataset, tag);
    write_gamma_csv(sum, fs::path(g.out) / (stem + ".csv"));
    Series s{"gamma_k", {}, {}};
    for (std::size_t k = 0; k < sum.values.size(); ++k) {
        s.x.push_back(static_cast<double>(k));
        s.y.push_back(sum.values[k]);
        std::cout << "gamma_" << k << " " << sum.values[k] << "\n";
    }
    write_svg_chart(fs::path(g.out) / (stem + ".svg"), {s}, {"Learned propagation weights", "k", "gamma_k", false, false});
    std::cout << "mean |gamma_k| k<=3: " << sum.head_mean_abs;
    if (sum.tail_mean_abs) std::cout << "  k>=10: " << *sum.tail_mean_abs;
    std::cout << "\nnegative weights: " << (sum.has_negative ? "yes" : "no") << "\n";
    return 0;
}

int diagnose_theorem2(const Global& g, int n, int trials) {
    const Theorem2Report rep = theorem2_probe(n, trials, g.seed);
    CsvTable t;
    t.header = {"trial", "c", "lhs", "half_c_plus_1", "margin", "skipped", "holds"};
    for (std::size_t i = 0; i < rep.instances.size(); ++i) {
        const auto& x = rep.instances[i];
        t.add_row({std::to_string(i), format_number(x.c), format_number(x.lhs), format_number((x.c + 1) / 2),
                   format_number(x.margin), x.skipped ? "1" : "0", x.holds ? "1" : "0"});
    }
    t.write(fs::path(g.out) / (probe_file_stem("theorem2", "synthetic", "n" + std::to_string(n)) + ".csv"));
    std::cout << "holds " << rep.passed << "/" << (rep.trials - rep.skipped) << " (skipped " << rep.skipped
              << ", min margin " << rep.min_margin << ")\n";
    if (rep.failed > 0) throw CheckFailed("inequality violated");
    return 0;
}

int cmd_bench(const Global& g, const std::string& op_arg, const std::string& sizes_arg, int d, int K, int repeats) {
    const oracle::BenchOp op = oracle::parse_bench_op(op_arg);
    std::vector<Index> sizes;
    for (int s : parse_int_list(sizes_arg)) sizes.push_back(s);
    if (sizes.empty()) throw ArgumentError("--sizes is empty");
    const oracle::BenchResult r = oracle::scaling_benchmark(op, sizes, d, K, repeats, g.seed);
    const std::string stem = probe_file_stem("bench", "synthetic", oracle::to_string(op));
    oracle::write_bench_csv(r, fs::path(g.out) / (stem + ".csv"));
    for (std::size_t i = 0; i < r.sizes.size(); ++i)
        std::cout << "n " << r.sizes[i] << "  median " << r.medians[i] << " s\n";
    std::cout << "slope " << r.slope << "\n";
    return 0;
}

int cmd_prepare(const Global& g, const std::string& data, const std::string& split_arg, int knn, const std::string& metric) {
    const fs::path dir = resolve_data(data);
    Dataset ds = load_dataset(dir, false);
    if (knn > 0) {
        ds.graph = knn_graph(ds.features, knn, parse_knn_metric(metric));
        ds.manifest.m = ds.graph.raw_edge_count();
    }
    if (!split_arg.empty()) {
        const auto parts = split_list(split_arg);
        if (parts.size() != 3) throw ArgumentError("--split needs three fractions");
        ds.split = random_split(ds.graph.num_nodes(), {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])}, g.seed);
    }
    if (knn > 0) {
        save_dataset(ds, dir);
    } else if (!split_arg.empty()) {
        write_split(ds.split, dir / ds.manifest.files.splits);
    }
    std::cout << "name " << ds.manifest.name << "\nn " << ds.graph.num_nodes() << "\nedge_lines " << ds.graph.raw_edge_count()
              << "\nunique_edges " << ds.graph.num_edges() << "\nself_loops_dropped " << ds.graph.dropped_self_loops()
              << "\nd " << ds.features.cols() << "\nc " << ds.labels.num_classes << "\n";
    if (!ds.split.train.empty())
        std::cout << "split " << ds.split.train.size() << "/" << ds.split.valid.size() << "/" << ds.split.test.size() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    configure_allocator();
    CLI::App app{"ParaFormer graph-transformer laboratory"};
    app.require_subcommand(1);
    Global g;
    g.seed_opt = app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("--strict-deterministic", g.strict, "Leave wall-clock fields out of reports");
    app.add_option("--workers", g.workers, "Worker processes for sweeps")->check(CLI::PositiveNumber);

    std::string data, config, run, grid = "{\"beta\": [0, 0.3, 0.5, 0.7, 1]}", suite = "all", models = "vanilla,paraformer",
                                   depths = "1..10", tag, op = "scalable", sizes, split, metric = "euclidean";
    int seeds = 5, trials = -1, epochs = 0, n = 16, kmax = 16, d = 64, K = 10, repeats = 5, knn = 0;
    double a = 0.02;
    bool inject = false;

    auto* train = app.add_subcommand("train", "Train a model and write reports");
    train->add_option("--data", data, "Dataset directory");
    train->add_option("--config", config, "Run config JSON");
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--data", data, "Dataset directory");
    eval->add_option("--run", run, "Run or checkpoint directory")->required();
    auto* sw = app.add_subcommand("sweep", "Grid sweep over seeds");
    sw->add_option("--data", data, "Dataset directory");
    sw->add_option("--config", config, "Base run config JSON");
    sw->add_option("--grid", grid, "Grid as a JSON file or inline JSON");
    sw->add_option("--seeds", seeds, "Seeds per config")->check(CLI::PositiveNumber);
    auto* verify = app.add_subcommand("verify", "Oracle and gradient suites");
    verify->add_option("--suite", suite, "all|factorization|row-stochastic|gradients|dc-oracle|theorem2");
    verify->add_option("--trials", trials, "Instances per suite (per attention mode for gradients)");
    verify->add_flag("--inject-fault", inject, "Perturb the scalable GPA output (negative test)");

    auto* diag = app.add_subcommand("diagnose", "Over-smoothing and spectral probes");
    diag->require_subcommand(1);
    auto* over = diag->add_subcommand("oversmoothing", "Depth sweep with D_L2 / S_cos");
    over->add_option("--data", data, "Dataset directory");
    over->add_option("--config", config, "Base run config JSON");
    over->add_option("--models", models, "Comma list of vanilla, sgformer, paraformer");
    over->add_option("--depths", depths, "Range a..b or comma list");
    over->add_option("--epochs", epochs, "Override max_epochs");
    over->add_option("--tag", tag, "Tag for the chart file name");
    auto* filt = diag->add_subcommand("filter", "Alternating-weight DC suppression curve");
    filt->add_option("--a", a, "Alternating coefficient, 0 < a < 1/n");
    filt->add_option("--n", n, "Matrix size")->check(CLI::PositiveNumber);
    filt->add_option("--kmax", kmax, "Largest K")->check(CLI::NonNegativeNumber);
    filt->add_option("--trials", trials, "Random stochastic matrices (default 20)");
    auto* gam = diag->add_subcommand("gamma", "Learned gamma distribution of a run");
    gam->add_option("--run", run, "Run or checkpoint directory")->required();
    gam->add_option("--tag", tag, "Tag for the output file name");
    auto* th2 = diag->add_subcommand("theorem2", "Prescribed-gamma l1 inequality");
    th2->add_option("--n", n, "Matrix size")->check(CLI::PositiveNumber);
    th2->add_option("--trials", trials, "Random logit matrices (default 100)");

    auto* bench = app.add_subcommand("bench", "GPA kernel scaling benchmark");
    bench->add_option("--op", op, "scalable|dense");
    bench->add_option("--sizes", sizes, "Comma list of n")->expected(0, 1);
    bench->add_option("--d", d, "Feature width")->check(CLI::PositiveNumber);
    bench->add_option("--K", K, "Propagation depth")->check(CLI::NonNegativeNumber);
    bench->add_option("--repeats", repeats, "Timed repeats per size")->check(CLI::PositiveNumber);
    auto* prep = app.add_subcommand("prepare", "Validate a dataset, write splits or a kNN graph");
    prep->add_option("--data", data, "Dataset directory");
    prep->add_option("--split", split, "Fractions train,valid,test");
    prep->add_option("--knn", knn, "Replace edges by a symmetrized kNN graph")->check(CLI::NonNegativeNumber);
    prep->add_option("--metric", metric, "euclidean|cosine");

    app.fallthrough();
    for (auto* sub : {train, eval, sw, verify, diag, bench, prep}) sub->fallthrough();
    for (auto* sub : {over, filt, gam, th2}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(g, data, config);
        if (*eval) return cmd_eval(g, data, run);
        if (*sw) return cmd_sweep(g, data, config, grid, seeds);
        if (*verify) return cmd_verify(g, suite, trials, inject);
        if (*bench) return cmd_bench(g, op, sizes, d, K, repeats);
        if (*prep) return cmd_prepare(g, data, split, knn, metric);
        if (*over) return diagnose_oversmoothing(g, data, config, models, depths, epochs, tag.empty() ? "sweep" : tag);
        if (*filt) return diagnose_filter(g, a, n, kmax, trials < 0 ? 20 : trials);
        if (*gam) return diagnose_gamma(g, run, tag);
        if (*th2) return diagnose_theorem2(g, n, trials < 0 ? 100 : trials);
    } catch (const CheckFailed& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DatasetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
