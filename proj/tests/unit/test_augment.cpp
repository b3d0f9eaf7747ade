#include "merit/augment.hpp"
#include "merit/error.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <set>

using namespace merit;
using namespace merit::testing;

namespace {

std::set<std::pair<std::size_t, std::size_t>> edge_set(const SparseMatrix& a) {
    std::set<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (auto c : a.row_cols(r))
            if (c > r) out.emplace(r, c);
    return out;
}

Graph toy_graph(Rng& rng, std::size_t n, std::size_t d, double p) {
    Graph g;
    g.adjacency = random_graph(rng, n, p);
    g.features = random_dense(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    return g;
}

}  // namespace

TEST_CASE("ppr_diffusion_exact: alpha = 1 is the identity") {
    Rng rng(1);
    const auto a = random_graph(rng, 12, 0.3);
    CHECK(ppr_diffusion_exact(a, 1.0) == DenseMatrix::Identity(12, 12));
}

TEST_CASE("ppr_diffusion_exact: two-node graph against the closed-form 2x2 inverse") {
    const auto a = SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}});
    const double alpha = 0.05, c = 1.0 - alpha;
    // (I - cT)^{-1} with T = [[0,1],[1,0]] is [[1,c],[c,1]] / (1 - c^2).
    const double det = 1.0 - c * c;
    const DenseMatrix s = ppr_diffusion_exact(a, alpha);
    CHECK(std::abs(s(0, 0) - alpha / det) < 1e-12);
    CHECK(std::abs(s(0, 1) - alpha * c / det) < 1e-12);
    CHECK(std::abs(s(1, 0) - alpha * c / det) < 1e-12);
    CHECK(std::abs(s(1, 1) - alpha / det) < 1e-12);
}

TEST_CASE("ppr_diffusion_exact: Gauss-Jordan oracle, symmetry and fixed point") {
    Rng rng(3);
    for (double alpha : {0.05, 0.15, 0.5}) {
        const auto a = random_graph(rng, 30, 0.15);
        const DenseMatrix s = ppr_diffusion_exact(a, alpha);
        CHECK(max_abs_diff(s, ppr_oracle(a, alpha)) < 1e-12);
        CHECK(max_abs_diff(s, s.transpose()) < 1e-10);
        const DenseMatrix t = dense_normalize(a.to_dense(), false);
        const DenseMatrix fixed = alpha * DenseMatrix::Identity(30, 30) + (1.0 - alpha) * loop_matmul(t, s);
        CHECK(max_abs_diff(s, fixed) < 1e-9);
    }
}

TEST_CASE("ppr_diffusion_exact: alpha outside (0, 1] is rejected") {
    const auto a = SparseMatrix::zeros(3, 3);
    CHECK_THROWS_AS(ppr_diffusion_exact(a, 0.0), ValidationError);
    CHECK_THROWS_AS(ppr_diffusion_exact(a, 1.5), ValidationError);
}

TEST_CASE("ppr_power_series: single term and alpha = 1") {
    Rng rng(2);
    const auto a = random_graph(rng, 10, 0.4);
    CHECK(ppr_power_series(a, 0.3, 1, 1e-12) == 0.3 * DenseMatrix::Identity(10, 10));
    CHECK(ppr_power_series(a, 1.0, 50, 1e-12) == DenseMatrix::Identity(10, 10));
}

TEST_CASE("ppr_power_series matches the exact solve on N = 50") {
    Rng rng(4);
    const auto a = random_graph(rng, 50, 0.1);
    const DenseMatrix exact = ppr_diffusion_exact(a, 0.15);
    CHECK(max_abs_diff(ppr_power_series(a, 0.15, 100000, 1e-12), exact) < 1e-8);
}

TEST_CASE("diffusion_for: alpha = 0 stands in the self-loop normalized adjacency") {
    Rng rng(5);
    const auto a = random_graph(rng, 8, 0.4);
    AugmentationConfig cfg;
    cfg.ppr_alpha = 0.0;
    CHECK(diffusion_for(a, cfg) == symmetric_normalize(a, true).to_dense());
    cfg.ppr_alpha = 0.2;
    cfg.ppr_method = PprMethod::power_series;
    CHECK(max_abs_diff(diffusion_for(a, cfg), ppr_diffusion_exact(a, 0.2)) < 1e-9);
}

TEST_CASE("edge_modification: ratio 0 is the identity") {
    Rng rng(6);
    const auto a = random_graph(rng, 20, 0.2);
    CHECK(edge_modification(a, 0.0, rng) == a);
}

TEST_CASE("edge_modification: edge count, symmetry and loop-free output on random graphs") {
    Rng rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        const auto a = random_graph(rng, 25, 0.05 + 0.02 * (trial % 10));
        const double p = 0.1 * (trial % 9);
        const auto out = edge_modification(a, p, rng);
        CHECK(out.nnz() == a.nnz());
        CHECK(out.is_symmetric());
        for (std::size_t i = 0; i < out.rows(); ++i) CHECK_FALSE(out.contains(i, i));

        const auto before = edge_set(a), after = edge_set(out);
        std::size_t kept = 0;
        for (const auto& e : after) kept += before.count(e);
        const auto expected_drop = static_cast<std::size_t>(std::floor(p / 2.0 * double(before.size())));
        CHECK(before.size() - kept == expected_drop);
    }
}

TEST_CASE("edge_modification: triangle with spare nodes drops one edge and adds one absent pair") {
    // Nodes 3 and 4 are isolated, so absent pairs exist for every seed.
    const auto a = adjacency_from_edges(5, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}});
    const auto before = edge_set(a);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        const auto out = edge_modification(a, 2.0 / 3.0, rng);
        const auto after = edge_set(out);
        REQUIRE(after.size() == 3);
        std::size_t kept = 0;
        for (const auto& e : after) kept += before.count(e);
        CHECK(kept == 2);
    }
}

TEST_CASE("edge_modification: a complete graph cannot take new edges") {
    const auto k3 = adjacency_from_edges(3, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}});
    Rng rng(1);
    CHECK_THROWS_AS(edge_modification(k3, 2.0 / 3.0, rng), ValidationError);
}

TEST_CASE("edge_modification: near-complete graphs use complement sampling") {
    std::vector<Triplet> edges;
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = i + 1; j < 12; ++j)
            if ((i + j) % 7 != 0) edges.push_back({i, j, 1.0});
    const auto a = adjacency_from_edges(12, edges);
    Rng rng(2);
    // 57 edges, 9 absent pairs: 8 swaps nearly exhaust the complement.
    const auto out = edge_modification(a, 0.3, rng);
    CHECK(out.nnz() == a.nnz());
    CHECK(out.is_symmetric());
}

TEST_CASE("edge_modification: equal seeds give equal outputs") {
    Rng g(8);
    const auto a = random_graph(g, 30, 0.1);
    Rng r1(42), r2(42);
    CHECK(edge_modification(a, 0.4, r1) == edge_modification(a, 0.4, r2));
}

TEST_CASE("feature_mask: counts and untouched columns") {
    Rng rng(9);
    const DenseMatrix x = random_dense(rng, 6, 4, 1.0, 2.0);  // no natural zeros
    CHECK(feature_mask(x, 0.0, rng) == x);

    const DenseMatrix m = feature_mask(x, 0.5, rng);
    int zeroed = 0;
    for (Eigen::Index c = 0; c < 4; ++c) {
        if (m.col(c).isZero(0.0)) {
            ++zeroed;
        } else {
            CHECK(m.col(c) == x.col(c));  // bit-identical
        }
    }
    CHECK(zeroed == 2);

    for (int d : {1, 5, 10, 17, 100}) {
        for (double p : {0.1, 0.25, 0.33, 0.5, 0.9}) {
            const DenseMatrix y = random_dense(rng, 3, d, 1.0, 2.0);
            const DenseMatrix masked = feature_mask(y, p, rng);
            int z = 0;
            for (Eigen::Index c = 0; c < d; ++c) z += masked.col(c).isZero(0.0);
            CHECK(z == static_cast<int>(std::lround(p * d)));
        }
    }
}

TEST_CASE("subsample_window: bounds, degenerate sizes and uniformity") {
    Rng rng(10);
    for (int i = 0; i < 20; ++i) CHECK(subsample_window(10, 10, rng) == 0);
    CHECK_THROWS_AS(subsample_window(10, 11, rng), ValidationError);
    CHECK_THROWS_AS(subsample_window(10, 0, rng), ValidationError);
    CHECK(subsample_window(10, 1, rng) < 10);

    std::vector<int> counts(7, 0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const auto s = subsample_window(10, 4, rng);
        REQUIRE(s <= 6);
        ++counts[s];
    }
    double chi2 = 0.0;
    const double expected = draws / 7.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // Critical value of chi-square with 6 degrees of freedom at p = 0.01.
    CHECK(chi2 < 16.812);
}

TEST_CASE("make_views: degenerate augmentations reproduce the inputs") {
    Rng rng(11);
    const Graph g = toy_graph(rng, 15, 5, 0.3);
    const DenseMatrix s = ppr_diffusion_exact(g.adjacency, 0.1);
    AugmentationConfig cfg;
    cfg.edge_mod_ratio = 0.0;
    cfg.feature_mask_ratio = 0.0;
    cfg.subgraph_size = 15;
    const auto views = make_views(g, s, cfg, rng);
    CHECK(std::get<SparseMatrix>(views.first.op) == symmetric_normalize(g.adjacency, true));
    CHECK(std::get<DenseMatrix>(views.second.op) == s);
    CHECK(views.first.features == g.features);
    CHECK(views.second.features == g.features);
}

TEST_CASE("make_views: shared contiguous window for every seed") {
    Rng rng(12);
    const Graph g = toy_graph(rng, 40, 6, 0.15);
    const DenseMatrix s = ppr_diffusion_exact(g.adjacency, 0.05);
    AugmentationConfig cfg;
    cfg.subgraph_size = 17;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng r(seed);
        const auto v = make_views(g, s, cfg, r);
        REQUIRE(v.first.node_map == v.second.node_map);
        REQUIRE(v.first.size() == 17);
        for (std::size_t k = 1; k < v.first.size(); ++k) CHECK(v.first.node_map[k] == v.first.node_map[k - 1] + 1);
        CHECK(v.first.features.rows() == 17);
        CHECK(std::get<DenseMatrix>(v.second.op).rows() == 17);
    }
}

TEST_CASE("make_views: matches a step-by-step pipeline on a 12-node graph") {
    Rng rng(13);
    const Graph g = toy_graph(rng, 12, 5, 0.35);
    const DenseMatrix s = ppr_diffusion_exact(g.adjacency, 0.05);
    AugmentationConfig cfg;
    cfg.subgraph_size = 8;
    cfg.edge_mod_ratio = 0.5;
    cfg.feature_mask_ratio = 0.4;

    Rng a(77), b(77);
    const auto views = make_views(g, s, cfg, a);

    const auto start = subsample_window(12, 8, b);
    const auto crop = principal_submatrix(g.adjacency, start, 8);
    const auto em = edge_modification(crop, 0.5, b);
    const DenseMatrix xc = g.features.middleRows(static_cast<Eigen::Index>(start), 8);
    const DenseMatrix x1 = feature_mask(xc, 0.4, b);
    const DenseMatrix x2 = feature_mask(xc, 0.4, b);

    CHECK(views.first.node_map.front() == start);
    CHECK(std::get<SparseMatrix>(views.first.op) == symmetric_normalize(em, true));
    CHECK(views.first.features == x1);
    CHECK(views.second.features == x2);
    DenseMatrix sc(8, 8);
    for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < 8; ++j)
            sc(i, j) = s(static_cast<Eigen::Index>(start) + i, static_cast<Eigen::Index>(start) + j);
    CHECK(std::get<DenseMatrix>(views.second.op) == sc);
}

TEST_CASE("make_views: subgraph larger than the graph is clamped") {
    Rng rng(14);
    const Graph g = toy_graph(rng, 9, 3, 0.4);
    AugmentationConfig cfg;  // default subgraph_size 2000
    const auto v = make_views(g, ppr_diffusion_exact(g.adjacency, 0.05), cfg, rng);
    CHECK(v.first.size() == 9);
}

TEST_CASE("AugmentationConfig::validate") {
    AugmentationConfig c;
    CHECK_NOTHROW(c.validate());
    c.edge_mod_ratio = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.ppr_alpha = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.subgraph_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
