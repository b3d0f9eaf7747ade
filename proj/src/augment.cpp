#include "merit/augment.hpp"

#include "merit/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace merit {
namespace {

void require_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ValidationError("ppr alpha must lie in (0, 1], got " + std::to_string(alpha));
}

std::size_t masked_count(std::size_t dim, double ratio) {
    return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(dim)));
}

}  // namespace

void AugmentationConfig::validate() const {
    if (!(edge_mod_ratio >= 0.0 && edge_mod_ratio < 1.0))
        throw ConfigError("edge_mod_ratio must lie in [0, 1)");
    if (!(feature_mask_ratio >= 0.0 && feature_mask_ratio < 1.0))
        throw ConfigError("feature_mask_ratio must lie in [0, 1)");
    if (subgraph_size < 1) throw ConfigError("subgraph_size must be >= 1");
    if (!(ppr_alpha >= 0.0 && ppr_alpha <= 1.0))
        throw ConfigError("ppr_alpha must lie in (0, 1], or be 0 to disable diffusion");
    if (power_terms < 1) throw ConfigError("power_terms must be >= 1");
    if (!(power_tol > 0.0)) throw ConfigError("power_tol must be positive");
}

DenseMatrix ppr_diffusion_exact(const SparseMatrix& adjacency, double alpha) {
    require_alpha(alpha);
    const auto n = static_cast<Eigen::Index>(adjacency.rows());
    const DenseMatrix t = symmetric_normalize(adjacency, false).to_dense();
    if (alpha == 1.0) return DenseMatrix::Identity(n, n);

    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - (1.0 - alpha) * Eigen::MatrixXd(t);
    Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() != Eigen::Success)
        throw NumericError("ppr_diffusion_exact: factorisation of I - (1 - alpha) T failed");
    Eigen::MatrixXd s = llt.solve(alpha * Eigen::MatrixXd::Identity(n, n));
    if (!s.allFinite()) throw NumericError("ppr_diffusion_exact: non-finite solution");
    DenseMatrix out = 0.5 * (s + s.transpose());
    return out;
}

DenseMatrix ppr_power_series(const SparseMatrix& adjacency, double alpha, std::size_t max_terms,
                             double tol) {
    require_alpha(alpha);
    if (max_terms < 1) throw ValidationError("ppr_power_series: need at least one term");
    const auto n = static_cast<Eigen::Index>(adjacency.rows());
    const SparseMatrix t = symmetric_normalize(adjacency, false);

    DenseMatrix term = alpha * DenseMatrix::Identity(n, n);
    DenseMatrix sum = term;
    for (std::size_t k = 1; k < max_terms; ++k) {
        term = (1.0 - alpha) * spmm(t, term);
        sum += term;
        if (term.size() == 0 || term.cwiseAbs().maxCoeff() < tol) break;
    }
    return sum;
}

DenseMatrix diffusion_for(const SparseMatrix& adjacency, const AugmentationConfig& cfg) {
    if (cfg.ppr_alpha == 0.0) return symmetric_normalize(adjacency, true).to_dense();
    if (cfg.ppr_method == PprMethod::power_series)
        return ppr_power_series(adjacency, cfg.ppr_alpha, cfg.power_terms, cfg.power_tol);
    return ppr_diffusion_exact(adjacency, cfg.ppr_alpha);
}

SparseMatrix edge_modification(const SparseMatrix& adjacency, double ratio, Rng& rng) {
    if (!(ratio >= 0.0 && ratio < 1.0))
        throw ValidationError("edge_modification: ratio must lie in [0, 1)");
    if (adjacency.rows() != adjacency.cols())
        throw DimensionError("edge_modification: adjacency not square");
    const std::size_t n = adjacency.rows();

    // Undirected edges as (i < j) pairs in row-major order.
    std::vector<Triplet> edges;
    edges.reserve(adjacency.nnz() / 2);
    for (std::size_t r = 0; r < n; ++r) {
        const auto cols = adjacency.row_cols(r);
        const auto vals = adjacency.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k)
            if (cols[k] > r) edges.push_back({r, cols[k], vals[k]});
    }
    const std::size_t e = edges.size();
    const auto k = static_cast<std::size_t>(std::floor(ratio / 2.0 * static_cast<double>(e)));
    if (k == 0) return adjacency;

    const std::size_t total_pairs = n * (n - 1) / 2;
    const std::size_t available = total_pairs - e;
    if (k > available)
        throw ValidationError("edge_modification: graph too dense to add " + std::to_string(k) +
                              " new edges (" + std::to_string(available) + " absent pairs)");

    std::vector<char> dropped(e, 0);
    for (auto idx : rng.sample_without_replacement(e, k)) dropped[idx] = 1;

    std::vector<Triplet> kept;
    kept.reserve(e);
    for (std::size_t i = 0; i < e; ++i)
        if (!dropped[i]) kept.push_back(edges[i]);

    std::set<std::pair<std::size_t, std::size_t>> added;
    if (available <= 4 * k) {
        // Near-complete graph: enumerate the complement and sample from it.
        std::vector<std::pair<std::size_t, std::size_t>> absent;
        absent.reserve(available);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (!adjacency.contains(i, j)) absent.emplace_back(i, j);
        for (auto idx : rng.sample_without_replacement(absent.size(), k)) added.insert(absent[idx]);
    } else {
        while (added.size() < k) {
            const auto u = static_cast<std::size_t>(rng.uniform_index(n));
            const auto v = static_cast<std::size_t>(rng.uniform_index(n));
            if (u == v) continue;
            const auto pair = std::minmax(u, v);
            if (adjacency.contains(pair.first, pair.second)) continue;
            added.insert(pair);
        }
    }

    std::vector<Triplet> out;
    out.reserve(2 * e);
    for (const auto& t : kept) {
        out.push_back(t);
        out.push_back({t.col, t.row, t.value});
    }
    for (const auto& [u, v] : added) {
        out.push_back({u, v, 1.0});
        out.push_back({v, u, 1.0});
    }
    return SparseMatrix::from_triplets(n, n, std::move(out));
}

std::vector<std::size_t> draw_masked_columns(std::size_t dim, double ratio, Rng& rng) {
    if (!(ratio >= 0.0 && ratio < 1.0))
        throw ValidationError("feature_mask: ratio must lie in [0, 1)");
    return rng.sample_without_replacement(dim, masked_count(dim, ratio));
}

DenseMatrix feature_mask(const DenseMatrix& x, double ratio, Rng& rng) {
    const auto cols = draw_masked_columns(static_cast<std::size_t>(x.cols()), ratio, rng);
    DenseMatrix out = x;
    for (auto c : cols) out.col(static_cast<Eigen::Index>(c)).setZero();
    return out;
}

std::size_t subsample_window(std::size_t n, std::size_t size, Rng& rng) {
    if (size < 1 || size > n)
        throw ValidationError("subsample_window: need 1 <= size <= N, got size " +
                              std::to_string(size) + " for N = " + std::to_string(n));
    return static_cast<std::size_t>(rng.uniform_index(n - size + 1));
}

ViewPair make_views(const Graph& g, const DenseMatrix& diffusion, const AugmentationConfig& cfg,
                    Rng& rng) {
    const std::size_t n = g.num_nodes();
    if (static_cast<std::size_t>(diffusion.rows()) != n ||
        static_cast<std::size_t>(diffusion.cols()) != n)
        throw DimensionError("make_views: diffusion matrix does not match graph size");
    const std::size_t s = std::min(cfg.subgraph_size, n);
    const std::size_t start = subsample_window(n, s, rng);
    const auto es = static_cast<Eigen::Index>(start);
    const auto ss = static_cast<Eigen::Index>(s);

    const SparseMatrix crop = principal_submatrix(g.adjacency, start, s);
    const SparseMatrix modified = edge_modification(crop, cfg.edge_mod_ratio, rng);
    const DenseMatrix x = g.features.middleRows(es, ss);

    std::vector<std::size_t> node_map(s);
    std::iota(node_map.begin(), node_map.end(), start);

    ViewPair views;
    views.first.op = symmetric_normalize(modified, true);
    views.first.features = feature_mask(x, cfg.feature_mask_ratio, rng);
    views.first.node_map = node_map;
    views.second.op = DenseMatrix(diffusion.block(es, es, ss, ss));
    views.second.features = feature_mask(x, cfg.feature_mask_ratio, rng);
    views.second.node_map = std::move(node_map);
    return views;
}

GraphView full_adjacency_view(const Graph& g) {
    GraphView v;
    v.features = g.features;
    v.op = symmetric_normalize(g.adjacency, true);
    v.node_map.resize(g.num_nodes());
    std::iota(v.node_map.begin(), v.node_map.end(), std::size_t{0});
    return v;
}

GraphView full_diffusion_view(const Graph& g, const DenseMatrix& diffusion) {
    GraphView v;
    v.features = g.features;
    v.op = diffusion;
    v.node_map.resize(g.num_nodes());
    std::iota(v.node_map.begin(), v.node_map.end(), std::size_t{0});
    return v;
}

}  // namespace merit
