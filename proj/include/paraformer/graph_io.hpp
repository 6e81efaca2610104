#pragma once

#include "paraformer/core.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace paraformer {

struct Edge {
    Index u = 0;
    Index v = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Node/edge structure of a graph.
///
/// Undirected edges are stored once with u <= v; duplicates are removed and
/// input self-loops dropped (self-loops only appear through normalization).
/// The edge list as read from disk is kept so datasets round-trip exactly.
class Graph {
public:
    Graph() = default;

    /// Validates endpoints and canonicalizes. Throws ArgumentError on an
    /// endpoint outside [0, n).
    static Graph from_edges(Index n, std::vector<Edge> edges, bool directed);

    Index num_nodes() const { return n_; }
    /// Edge count after canonicalization and de-duplication.
    Index num_edges() const { return static_cast<Index>(edges_.size()); }
    /// Edge count as supplied (before de-duplication).
    Index raw_edge_count() const { return static_cast<Index>(raw_edges_.size()); }
    Index dropped_self_loops() const { return self_loops_; }
    bool directed() const { return directed_; }

    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<Edge>& raw_edges() const { return raw_edges_; }

    /// Adjacency A without self-loops; symmetric for undirected graphs.
    SparseMatrix adjacency() const;

    /// Out-degree in A (both directions for undirected graphs).
    std::vector<Index> degrees() const;

private:
    Index n_ = 0;
    bool directed_ = false;
    Index self_loops_ = 0;
    std::vector<Edge> edges_;
    std::vector<Edge> raw_edges_;
};

/// Class ids per node; -1 marks an unlabeled node.
struct LabelVector {
    std::vector<int> labels;
    int num_classes = 0;

    bool is_labeled(Index i) const { return labels[static_cast<std::size_t>(i)] >= 0; }
    Index size() const { return static_cast<Index>(labels.size()); }
};

struct SplitMask {
    std::vector<Index> train;
    std::vector<Index> valid;
    std::vector<Index> test;

    /// Throws ArgumentError when sets overlap, leave [0, n) or (if
    /// `require_nonempty`) one of them is empty.
    void validate(Index n, bool require_nonempty = true) const;
};

struct DatasetFiles {
    std::string edges = "edges.txt";
    std::string features = "features.csv";
    std::string labels = "labels.csv";
    std::string splits = "splits.json";
};

struct DatasetManifest {
    std::string name;
    Index n = 0;
    Index m = 0;  // edge lines in the edge file
    Index d = 0;
    int c = 0;
    bool directed = false;
    DatasetFiles files;
};

struct Dataset {
    DatasetManifest manifest;
    Graph graph;
    FeatureMatrix features;
    LabelVector labels;
    SplitMask split;
};

/// Loader failure with the offending file (and line, when known).
class DatasetError : public Error {
public:
    enum class Kind { missing_file, parse, shape_mismatch, non_finite, label_out_of_range, invalid_split };

    DatasetError(Kind kind, const std::filesystem::path& file, std::size_t line, const std::string& detail);

    Kind kind() const { return kind_; }
    const std::filesystem::path& file() const { return file_; }
    std::size_t line() const { return line_; }

private:
    Kind kind_;
    std::filesystem::path file_;
    std::size_t line_;
};

DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Reads manifest.json and every file it references, validating all
/// cross-shape invariants. When `require_split` is false a missing split file
/// yields an empty SplitMask.
Dataset load_dataset(const std::filesystem::path& dir, bool require_split = true);

/// Writes the dataset in the on-disk layout read by load_dataset.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

void write_split(const SplitMask& split, const std::filesystem::path& file);

FeatureMatrix read_matrix_csv(const std::filesystem::path& file);
/// Values are written with 17 significant digits so reads are exact.
void write_matrix_csv(const Matrix& m, const std::filesystem::path& file);

enum class AdjacencyNorm { sym_selfloop, rw, none };

/// sym_selfloop: D^-1/2 (A + I) D^-1/2 with D the degree of A + I.
/// rw: D^-1 A, zero-degree rows left all-zero.
/// none: A.
SparseMatrix normalize_adjacency(const Graph& g, AdjacencyNorm mode);

enum class KnnMetric { euclidean, cosine };

/// Links each node to its k nearest other nodes (ties to the lower index)
/// and symmetrizes by union. Throws ArgumentError if k >= n or k < 1.
Graph knn_graph(const FeatureMatrix& x, int k, KnnMetric metric);

/// Shuffles [0, n) with `seed`; train/valid get floor(f * n) nodes and test
/// gets the remainder when fractions sum to one (floor(f_te * n) otherwise).
SplitMask random_split(Index n, std::array<double, 3> fractions, std::uint64_t seed);

AdjacencyNorm parse_adjacency_norm(const std::string& s);
KnnMetric parse_knn_metric(const std::string& s);

}  // namespace paraformer
