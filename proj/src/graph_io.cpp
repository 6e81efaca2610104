#include "paraformer/graph_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace paraformer {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string kind_name(DatasetError::Kind k) {
    switch (k) {
        case DatasetError::Kind::missing_file: return "missing file";
        case DatasetError::Kind::parse: return "parse error";
        case DatasetError::Kind::shape_mismatch: return "shape mismatch";
        case DatasetError::Kind::non_finite: return "non-finite value";
        case DatasetError::Kind::label_out_of_range: return "label out of range";
        case DatasetError::Kind::invalid_split: return "invalid split";
    }
    return "error";
}

std::string format_error(DatasetError::Kind kind, const fs::path& file, std::size_t line,
                         const std::string& detail) {
    std::ostringstream os;
    os << kind_name(kind) << " in " << file.string();
    if (line > 0) os << ":" << line;
    os << ": " << detail;
    return os.str();
}

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DatasetError(DatasetError::Kind::missing_file, file, 0, "cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Splits into lines, dropping a trailing '\r'.
std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

bool is_skippable(std::string_view line) {
    line = trim(line);
    return line.empty() || line.front() == '#';
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

json read_json(const fs::path& file) {
    const std::string text = read_file(file);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw DatasetError(DatasetError::Kind::parse, file, 0, e.what());
    }
}

std::vector<Edge> read_edges(const fs::path& file, Index n) {
    const std::string text = read_file(file);
    std::vector<Edge> edges;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_skippable(lines[i])) continue;
        std::string_view line = trim(lines[i]);
        const auto sep = line.find_first_of(" \t,");
        Index u = 0, v = 0;
        if (sep == std::string_view::npos || !parse_number(line.substr(0, sep), u) ||
            !parse_number(trim(line.substr(sep + 1)), v))
            throw DatasetError(DatasetError::Kind::parse, file, i + 1, "expected \"u v\"");
        if (u < 0 || v < 0 || u >= n || v >= n)
            throw DatasetError(DatasetError::Kind::shape_mismatch, file, i + 1,
                               "endpoint outside [0, " + std::to_string(n) + ")");
        edges.push_back({u, v});
    }
    return edges;
}

LabelVector read_labels(const fs::path& file, Index n, int c) {
    const std::string text = read_file(file);
    LabelVector lv;
    lv.num_classes = c;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_skippable(lines[i])) continue;
        int y = 0;
        if (!parse_number(lines[i], y))
            throw DatasetError(DatasetError::Kind::parse, file, i + 1, "expected an integer label");
        if (y < -1 || y >= c)
            throw DatasetError(DatasetError::Kind::label_out_of_range, file, i + 1,
                               "label " + std::to_string(y) + " not in [0, " + std::to_string(c) + ")");
        lv.labels.push_back(y);
    }
    if (lv.size() != n)
        throw DatasetError(DatasetError::Kind::shape_mismatch, file, 0,
                           "expected " + std::to_string(n) + " labels, found " + std::to_string(lv.size()));
    return lv;
}

SplitMask read_split(const fs::path& file, Index n) {
    const json j = read_json(file);
    SplitMask s;
    auto grab = [&](const char* key, std::vector<Index>& out) {
        if (!j.contains(key) || !j[key].is_array())
            throw DatasetError(DatasetError::Kind::parse, file, 0, std::string("missing array \"") + key + "\"");
        for (const auto& v : j[key]) out.push_back(v.get<Index>());
    };
    grab("train", s.train);
    grab("valid", s.valid);
    grab("test", s.test);
    try {
        s.validate(n);
    } catch (const ArgumentError& e) {
        throw DatasetError(DatasetError::Kind::invalid_split, file, 0, e.what());
    }
    return s;
}

FeatureMatrix read_matrix_csv_impl(const fs::path& file, std::optional<Index> rows, std::optional<Index> cols) {
    const std::string text = read_file(file);
    const auto lines = split_lines(text);
    std::vector<double> values;
    Index nrows = 0;
    Index ncols = cols.value_or(-1);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_skippable(lines[i])) continue;
        std::string_view line = lines[i];
        Index count = 0;
        std::size_t start = 0;
        while (true) {
            std::size_t end = line.find(',', start);
            std::string_view cell = line.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
            double v = 0.0;
            if (!parse_number(cell, v))
                throw DatasetError(DatasetError::Kind::parse, file, i + 1,
                                   "bad number in column " + std::to_string(count + 1));
            if (!std::isfinite(v))
                throw DatasetError(DatasetError::Kind::non_finite, file, i + 1,
                                   "column " + std::to_string(count + 1));
            values.push_back(v);
            ++count;
            if (end == std::string_view::npos) break;
            start = end + 1;
        }
        if (ncols < 0) ncols = count;
        if (count != ncols)
            throw DatasetError(DatasetError::Kind::shape_mismatch, file, i + 1,
                               "expected " + std::to_string(ncols) + " columns, found " + std::to_string(count));
        ++nrows;
    }
    if (rows && nrows != *rows)
        throw DatasetError(DatasetError::Kind::shape_mismatch, file, 0,
                           "expected " + std::to_string(*rows) + " rows, found " + std::to_string(nrows));
    if (ncols < 0) ncols = 0;
    FeatureMatrix m(nrows, ncols);
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

}  // namespace

DatasetError::DatasetError(Kind kind, const fs::path& file, std::size_t line, const std::string& detail)
    : Error(format_error(kind, file, line, detail)), kind_(kind), file_(file), line_(line) {}

Graph Graph::from_edges(Index n, std::vector<Edge> edges, bool directed) {
    if (n < 0) throw ArgumentError("graph: negative node count");
    Graph g;
    g.n_ = n;
    g.directed_ = directed;
    g.raw_edges_ = edges;
    std::vector<Edge> canon;
    canon.reserve(edges.size());
    for (const Edge& e : edges) {
        if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n)
            throw ArgumentError("graph: edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                                ") outside [0, " + std::to_string(n) + ")");
        if (e.u == e.v) {
            ++g.self_loops_;
            continue;
        }
        canon.push_back(directed ? e : Edge{std::min(e.u, e.v), std::max(e.u, e.v)});
    }
    std::sort(canon.begin(), canon.end());
    canon.erase(std::unique(canon.begin(), canon.end()), canon.end());
    g.edges_ = std::move(canon);
    return g;
}

SparseMatrix Graph::adjacency() const {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(edges_.size() * (directed_ ? 1 : 2));
    for (const Edge& e : edges_) {
        trips.emplace_back(e.u, e.v, 1.0);
        if (!directed_) trips.emplace_back(e.v, e.u, 1.0);
    }
    SparseMatrix a(n_, n_);
    a.setFromTriplets(trips.begin(), trips.end());
    return a;
}

std::vector<Index> Graph::degrees() const {
    std::vector<Index> deg(static_cast<std::size_t>(n_), 0);
    for (const Edge& e : edges_) {
        ++deg[static_cast<std::size_t>(e.u)];
        if (!directed_) ++deg[static_cast<std::size_t>(e.v)];
    }
    return deg;
}

void SplitMask::validate(Index n, bool require_nonempty) const {
    std::vector<char> seen(static_cast<std::size_t>(std::max<Index>(n, 0)), 0);
    auto check = [&](const std::vector<Index>& set, const char* name) {
        if (require_nonempty && set.empty()) throw ArgumentError(std::string("split: empty ") + name + " set");
        for (Index i : set) {
            if (i < 0 || i >= n)
                throw ArgumentError(std::string("split: ") + name + " index " + std::to_string(i) + " outside [0, " +
                                    std::to_string(n) + ")");
            auto& s = seen[static_cast<std::size_t>(i)];
            if (s) throw ArgumentError(std::string("split: index ") + std::to_string(i) + " appears twice");
            s = 1;
        }
    };
    check(train, "train");
    check(valid, "valid");
    check(test, "test");
}

DatasetManifest read_manifest(const fs::path& dir) {
    const fs::path file = dir / "manifest.json";
    const json j = read_json(file);
    DatasetManifest m;
    try {
        m.name = j.value("name", dir.filename().string());
        m.n = j.at("n").get<Index>();
        m.m = j.at("m").get<Index>();
        m.d = j.at("d").get<Index>();
        m.c = j.at("c").get<int>();
        m.directed = j.value("directed", false);
        if (j.contains("files")) {
            const auto& f = j["files"];
            m.files.edges = f.value("edges", m.files.edges);
            m.files.features = f.value("features", m.files.features);
            m.files.labels = f.value("labels", m.files.labels);
            m.files.splits = f.value("splits", m.files.splits);
        }
    } catch (const json::exception& e) {
        throw DatasetError(DatasetError::Kind::parse, file, 0, e.what());
    }
    if (m.n < 0 || m.m < 0 || m.d < 0 || m.c < 1)
        throw DatasetError(DatasetError::Kind::parse, file, 0, "n, m, d must be >= 0 and c >= 1");
    return m;
}

Dataset load_dataset(const fs::path& dir, bool require_split) {
    Dataset ds;
    ds.manifest = read_manifest(dir);
    const auto& man = ds.manifest;

    const fs::path edge_file = dir / man.files.edges;
    auto edges = read_edges(edge_file, man.n);
    if (static_cast<Index>(edges.size()) != man.m)
        throw DatasetError(DatasetError::Kind::shape_mismatch, edge_file, 0,
                           "manifest declares m=" + std::to_string(man.m) + ", file has " +
                               std::to_string(edges.size()) + " edges");
    ds.graph = Graph::from_edges(man.n, std::move(edges), man.directed);

    ds.features = read_matrix_csv_impl(dir / man.files.features, man.n, man.d);
    ds.labels = read_labels(dir / man.files.labels, man.n, man.c);

    const fs::path split_file = dir / man.files.splits;
    if (require_split || fs::exists(split_file)) ds.split = read_split(split_file, man.n);
    return ds;
}

void write_split(const SplitMask& split, const fs::path& file) {
    json j;
    j["train"] = split.train;
    j["valid"] = split.valid;
    j["test"] = split.test;
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    out << j.dump() << "\n";
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    const auto& man = ds.manifest;
    json j;
    j["name"] = man.name;
    j["n"] = ds.graph.num_nodes();
    j["m"] = ds.graph.raw_edge_count();
    j["d"] = ds.features.cols();
    j["c"] = ds.labels.num_classes;
    j["directed"] = ds.graph.directed();
    j["files"] = {{"edges", man.files.edges},
                  {"features", man.files.features},
                  {"labels", man.files.labels},
                  {"splits", man.files.splits}};
    {
        std::ofstream out(dir / "manifest.json");
        out << j.dump(2) << "\n";
    }
    {
        std::ofstream out(dir / man.files.edges);
        for (const Edge& e : ds.graph.raw_edges()) out << e.u << ' ' << e.v << '\n';
    }
    write_matrix_csv(ds.features, dir / man.files.features);
    {
        std::ofstream out(dir / man.files.labels);
        for (int y : ds.labels.labels) out << y << '\n';
    }
    write_split(ds.split, dir / man.files.splits);
}

FeatureMatrix read_matrix_csv(const fs::path& file) {
    return read_matrix_csv_impl(file, std::nullopt, std::nullopt);
}

void write_matrix_csv(const Matrix& m, const fs::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    char buf[64];
    std::string line;
    for (Index i = 0; i < m.rows(); ++i) {
        line.clear();
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) line.push_back(',');
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), m(i, j));
            line.append(buf, ptr);
        }
        line.push_back('\n');
        out << line;
    }
}

SparseMatrix normalize_adjacency(const Graph& g, AdjacencyNorm mode) {
    SparseMatrix a = g.adjacency();
    const Index n = g.num_nodes();
    if (mode == AdjacencyNorm::none) return a;

    if (mode == AdjacencyNorm::sym_selfloop) {
        SparseMatrix eye(n, n);
        eye.setIdentity();
        SparseMatrix ahat = a + eye;
        Vector dinv(n);
        for (Index i = 0; i < n; ++i) dinv(i) = 1.0 / std::sqrt(ahat.row(i).sum());
        for (Index i = 0; i < ahat.outerSize(); ++i)
            for (SparseMatrix::InnerIterator it(ahat, i); it; ++it) it.valueRef() *= dinv(it.row()) * dinv(it.col());
        return ahat;
    }

    // rw
    for (Index i = 0; i < a.outerSize(); ++i) {
        double deg = 0.0;
        for (SparseMatrix::InnerIterator it(a, i); it; ++it) deg += it.value();
        if (deg == 0.0) continue;
        for (SparseMatrix::InnerIterator it(a, i); it; ++it) it.valueRef() /= deg;
    }
    return a;
}

Graph knn_graph(const FeatureMatrix& x, int k, KnnMetric metric) {
    const Index n = x.rows();
    if (k < 1) throw ArgumentError("knn_graph: k must be positive");
    if (k >= n) throw ArgumentError("knn_graph: k=" + std::to_string(k) + " must be < n=" + std::to_string(n));

    Vector norms = x.rowwise().norm();
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(n * k));
    std::vector<std::pair<double, Index>> cand;
    for (Index i = 0; i < n; ++i) {
        cand.clear();
        for (Index j = 0; j < n; ++j) {
            if (j == i) continue;
            double dist;
            if (metric == KnnMetric::euclidean) {
                dist = (x.row(i) - x.row(j)).squaredNorm();
            } else {
                const double denom = norms(i) * norms(j);
                dist = denom > 0.0 ? 1.0 - x.row(i).dot(x.row(j)) / denom : 1.0;
            }
            cand.emplace_back(dist, j);
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (int t = 0; t < k; ++t) edges.push_back({i, cand[static_cast<std::size_t>(t)].second});
    }
    return Graph::from_edges(n, std::move(edges), false);
}

SplitMask random_split(Index n, std::array<double, 3> f, std::uint64_t seed) {
    for (double v : f)
        if (!(v > 0.0)) throw ArgumentError("random_split: fractions must be positive");
    const double total = f[0] + f[1] + f[2];
    if (total > 1.0 + 1e-12) throw ArgumentError("random_split: fractions sum above 1");

    const auto n_tr = static_cast<Index>(std::floor(f[0] * static_cast<double>(n)));
    const auto n_va = static_cast<Index>(std::floor(f[1] * static_cast<double>(n)));
    const Index n_te = std::abs(total - 1.0) <= 1e-12 ? n - n_tr - n_va
                                                      : static_cast<Index>(std::floor(f[2] * static_cast<double>(n)));
    if (n_tr < 1 || n_va < 1 || n_te < 1)
        throw ArgumentError("random_split: n=" + std::to_string(n) + " too small for a nonempty split");

    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    SplitMask s;
    auto it = perm.begin();
    s.train.assign(it, it + n_tr);
    it += n_tr;
    s.valid.assign(it, it + n_va);
    it += n_va;
    s.test.assign(it, it + n_te);
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.valid.begin(), s.valid.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

AdjacencyNorm parse_adjacency_norm(const std::string& s) {
    if (s == "sym_selfloop") return AdjacencyNorm::sym_selfloop;
    if (s == "rw") return AdjacencyNorm::rw;
    if (s == "none") return AdjacencyNorm::none;
    throw ArgumentError("unknown adjacency normalization: " + s);
}

KnnMetric parse_knn_metric(const std::string& s) {
    if (s == "euclidean") return KnnMetric::euclidean;
    if (s == "cosine") return KnnMetric::cosine;
    throw ArgumentError("unknown knn metric: " + s);
}

}  // namespace paraformer
