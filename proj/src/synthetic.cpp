#include "merit/synthetic.hpp"

#include "merit/error.hpp"

namespace merit {

Graph make_block_graph(const BlockGraphConfig& cfg, Rng& rng) {
    if (cfg.num_blocks < 1 || cfg.num_nodes < cfg.num_blocks)
        throw ValidationError("block graph: need at least one node per block");
    const std::size_t n = cfg.num_nodes;

    std::vector<int> labels(n);
    const auto order = rng.sample_without_replacement(n, n);
    for (std::size_t k = 0; k < n; ++k) labels[order[k]] = static_cast<int>(k % cfg.num_blocks);

    std::vector<Triplet> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double p = labels[i] == labels[j] ? cfg.p_in : cfg.p_out;
            if (rng.uniform_real() < p) edges.push_back({i, j, 1.0});
        }

    const auto d = static_cast<Eigen::Index>(cfg.feature_dim);
    const auto informative = cfg.informative_dims == 0 || cfg.informative_dims > cfg.feature_dim
                                 ? d
                                 : static_cast<Eigen::Index>(cfg.informative_dims);
    DenseMatrix means = DenseMatrix::Zero(static_cast<Eigen::Index>(cfg.num_blocks), d);
    for (Eigen::Index b = 0; b < means.rows(); ++b)
        for (Eigen::Index c = 0; c < informative; ++c) means(b, c) = cfg.signal * rng.normal();
    DenseMatrix x(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < d; ++c)
            x(static_cast<Eigen::Index>(i), c) =
                means(labels[i], c) + (c < informative ? cfg.noise : cfg.nuisance_noise) * rng.normal();

    Graph g;
    g.features = std::move(x);
    g.adjacency = adjacency_from_edges(n, edges);
    g.labels = std::move(labels);
    g.validate();
    return g;
}

}  // namespace merit
