#pragma once

#include "merit/sparse.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

namespace merit {

struct DataSplit {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    std::vector<std::size_t> test_idx;

    // Throws ValidationError unless the three sets are pairwise disjoint and bounded by n.
    void validate(std::size_t n) const;

    friend bool operator==(const DataSplit&, const DataSplit&) = default;
};

/// Attributed undirected graph: features X (N x D), symmetric adjacency with
/// zero diagonal, optional labels and split.
struct Graph {
    DenseMatrix features;
    SparseMatrix adjacency;
    std::optional<std::vector<int>> labels;
    std::optional<DataSplit> split;

    std::size_t num_nodes() const { return adjacency.rows(); }
    std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
    std::size_t num_edges() const { return adjacency.nnz() / 2; }  // undirected
    int num_classes() const;

    void validate() const;
};

// Builds a symmetric, loop-free adjacency from an arbitrary edge list. Self
// loops are dropped and duplicates (either direction) collapse to the first
// occurrence.
SparseMatrix adjacency_from_edges(std::size_t n, const std::vector<Triplet>& edges);

/// Text formats:
///   edges:    `src<TAB>dst[<TAB>weight]` per line, 0-based, `#` comments
///   features: `N D` header then N rows of D reals
///   labels:   one integer per line
///   split:    lines `train: ...`, `val: ...`, `test: ...`
Graph load_graph(const std::filesystem::path& edge_path,
                 const std::filesystem::path& feature_path,
                 const std::optional<std::filesystem::path>& label_path = std::nullopt);

DenseMatrix load_dense(const std::filesystem::path& path);
std::vector<int> load_labels(const std::filesystem::path& path);
DataSplit load_split(const std::filesystem::path& path);

void save_edges(const SparseMatrix& adjacency, const std::filesystem::path& path);
// Values printed with 17 significant digits so a reload is bit-exact.
void save_dense(const DenseMatrix& m, const std::filesystem::path& path);
void save_labels(const std::vector<int>& labels, const std::filesystem::path& path);
void save_split(const DataSplit& split, const std::filesystem::path& path);

// Conventional file names inside a dataset directory.
struct DatasetPaths {
    std::filesystem::path edges;
    std::filesystem::path features;
    std::filesystem::path labels;
    std::filesystem::path split;

    static DatasetPaths in(const std::filesystem::path& dir);
};

// Loads edges/features and, when present, labels and split.
Graph load_dataset(const std::filesystem::path& dir);
void save_dataset(const Graph& g, const std::filesystem::path& dir);

}  // namespace merit
