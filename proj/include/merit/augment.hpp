#pragma once

#include "merit/graph.hpp"
#include "merit/rng.hpp"
#include "merit/sparse.hpp"

#include <cstddef>
#include <utility>
#include <variant>
#include <vector>

namespace merit {

enum class PprMethod { exact_inverse, power_series };

struct AugmentationConfig {
    double edge_mod_ratio = 0.2;
    double feature_mask_ratio = 0.2;
    std::size_t subgraph_size = 2000;
    double ppr_alpha = 0.05;  // 0 disables diffusion (normalized adjacency stands in)
    PprMethod ppr_method = PprMethod::exact_inverse;
    std::size_t power_terms = 10000;
    double power_tol = 1e-12;

    void validate() const;
};

// Propagation operator of a view: sparse normalized adjacency or dense diffusion block.
using ViewOperator = std::variant<SparseMatrix, DenseMatrix>;

struct GraphView {
    DenseMatrix features;
    ViewOperator op;
    std::vector<std::size_t> node_map;  // view row -> original node id

    std::size_t size() const { return node_map.size(); }
};

/// S = alpha (I - (1 - alpha) T)^{-1} with T = D^{-1/2} A D^{-1/2}, by Cholesky
/// solve of the SPD system. Result is symmetrised.
DenseMatrix ppr_diffusion_exact(const SparseMatrix& adjacency, double alpha);

/// Truncated series sum_k alpha (1 - alpha)^k T^k. At most `max_terms` terms;
/// stops after the first term whose largest entry falls below `tol`.
DenseMatrix ppr_power_series(const SparseMatrix& adjacency, double alpha, std::size_t max_terms,
                             double tol);

// Full-graph diffusion per config; alpha == 0 yields the dense self-looped
// normalized adjacency instead.
DenseMatrix diffusion_for(const SparseMatrix& adjacency, const AugmentationConfig& cfg);

/// Drops floor(ratio/2 * E) undirected edges uniformly without replacement,
/// then adds as many node pairs that were absent from the input. Undirected
/// edge count is preserved exactly.
SparseMatrix edge_modification(const SparseMatrix& adjacency, double ratio, Rng& rng);

// Zeroes round(ratio * D) distinct feature columns for every node.
DenseMatrix feature_mask(const DenseMatrix& x, double ratio, Rng& rng);
// The column indices feature_mask would choose for the same generator state.
std::vector<std::size_t> draw_masked_columns(std::size_t dim, double ratio, Rng& rng);

// Start of a contiguous window of `size` nodes, uniform over [0, n - size].
std::size_t subsample_window(std::size_t n, std::size_t size, Rng& rng);

struct ViewPair {
    GraphView first;   // crop + edge modification + feature masking
    GraphView second;  // crop of the diffusion matrix + feature masking
};

/// Draw order: window, edge modification, mask for view 1, mask for view 2.
/// A subgraph_size larger than the graph is clamped to N.
ViewPair make_views(const Graph& g, const DenseMatrix& diffusion, const AugmentationConfig& cfg,
                    Rng& rng);

// Un-augmented views over the full graph, used at inference.
GraphView full_adjacency_view(const Graph& g);
GraphView full_diffusion_view(const Graph& g, const DenseMatrix& diffusion);

}  // namespace merit
