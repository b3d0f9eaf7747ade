#include "merit/grad_check.hpp"

#include "merit/augment.hpp"
#include "merit/losses.hpp"
#include "merit/model.hpp"
#include "merit/rng.hpp"

#include <algorithm>
#include <cmath>

namespace merit::ad {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Matrix>& params) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(p, false));
    return f(tape, leaves).scalar();
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform_real(lo, hi);
    return m;
}

// Reduces a matrix-valued op to a scalar through a fixed random weighting.
ScalarFn weighted(std::function<Var(Tape&, const std::vector<Var>&)> op, Matrix weights) {
    return [op = std::move(op), w = std::move(weights)](Tape& t, const std::vector<Var>& p) {
        return sum(mul(op(t, p), t.constant(w)));
    };
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult finite_diff_check(const ScalarFn& f, const std::vector<Matrix>& params,
                                  const GradCheckOptions& opts) {
    std::vector<Matrix> analytic;
    {
        Tape tape;
        std::vector<Var> leaves;
        for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
        tape.backward(f(tape, leaves));
        for (const auto& l : leaves) analytic.push_back(l.grad());
    }

    GradCheckResult result;
    Rng rng(opts.seed);
    std::vector<Matrix> work = params;
    for (std::size_t t = 0; t < params.size(); ++t) {
        const auto size = static_cast<std::size_t>(params[t].size());
        std::vector<std::size_t> coords;
        if (size <= opts.samples_per_tensor) {
            coords.resize(size);
            for (std::size_t i = 0; i < size; ++i) coords[i] = i;
        } else {
            coords = rng.sample_without_replacement(size, opts.samples_per_tensor);
        }
        for (std::size_t c : coords) {
            double& x = work[t].data()[c];
            const double orig = x;
            x = orig + opts.eps;
            const double up = evaluate(f, work);
            x = orig - opts.eps;
            const double down = evaluate(f, work);
            x = orig;
            const double numeric = (up - down) / (2.0 * opts.eps);
            result.max_rel_error = std::max(
                result.max_rel_error, relative_error(analytic[t].data()[c], numeric, opts.denom_floor));
            ++result.coords_checked;
        }
    }
    return result;
}

std::vector<GradCheckEntry> run_grad_check_suite(std::uint64_t seed, const GradCheckOptions& opts) {
    Rng rng(seed);
    std::vector<GradCheckEntry> out;
    auto check = [&](std::string name, const ScalarFn& f, const std::vector<Matrix>& params) {
        out.push_back({std::move(name), finite_diff_check(f, params, opts)});
    };
    auto rm = [&](Eigen::Index r, Eigen::Index c) { return random_matrix(rng, r, c); };

    const Eigen::Index r = 5, c = 7;
    check("matmul",
          weighted([](Tape&, const std::vector<Var>& p) { return matmul(p[0], p[1]); }, rm(r, 4)),
          {rm(r, c), rm(c, 4)});
    check("matmul_nt",
          weighted([](Tape&, const std::vector<Var>& p) { return matmul_nt(p[0], p[1]); }, rm(r, 4)),
          {rm(r, c), rm(4, c)});
    check("transpose",
          weighted([](Tape&, const std::vector<Var>& p) { return transpose(p[0]); }, rm(c, r)),
          {rm(r, c)});
    check("add", weighted([](Tape&, const std::vector<Var>& p) { return add(p[0], p[1]); }, rm(r, c)),
          {rm(r, c), rm(r, c)});
    check("sub", weighted([](Tape&, const std::vector<Var>& p) { return sub(p[0], p[1]); }, rm(r, c)),
          {rm(r, c), rm(r, c)});
    check("mul", weighted([](Tape&, const std::vector<Var>& p) { return mul(p[0], p[1]); }, rm(r, c)),
          {rm(r, c), rm(r, c)});
    check("scale", weighted([](Tape&, const std::vector<Var>& p) { return scale(p[0], -1.7); }, rm(r, c)),
          {rm(r, c)});
    check("add_row_bias",
          weighted([](Tape&, const std::vector<Var>& p) { return add_row_bias(p[0], p[1]); }, rm(r, c)),
          {rm(r, c), rm(1, c)});
    check("prelu",
          weighted([](Tape&, const std::vector<Var>& p) { return prelu(p[0], p[1]); }, rm(r, c)),
          {rm(r, c), Matrix::Constant(1, 1, 0.25)});
    {
        const Eigen::Index n = 16, ch = 4;
        check("batchnorm_rows(train)",
              weighted(
                  [ch](Tape&, const std::vector<Var>& p) {
                      auto stats = BatchNormStats::fresh(ch);
                      return batchnorm_rows(p[0], p[1], p[2], stats, true);
                  },
                  rm(n, ch)),
              {rm(n, ch), random_matrix(rng, 1, ch, 0.5, 1.5), rm(1, ch)});
        auto stats = BatchNormStats::fresh(ch);
        stats.running_mean = rm(1, ch);
        stats.running_var = random_matrix(rng, 1, ch, 0.5, 2.0);
        check("batchnorm_rows(eval)",
              weighted(
                  [stats](Tape&, const std::vector<Var>& p) {
                      auto s = stats;
                      return batchnorm_rows(p[0], p[1], p[2], s, false);
                  },
                  rm(n, ch)),
              {rm(n, ch), random_matrix(rng, 1, ch, 0.5, 1.5), rm(1, ch)});
    }
    check("l2_normalize_rows",
          weighted([](Tape&, const std::vector<Var>& p) { return l2_normalize_rows(p[0]); }, rm(r, c)),
          {rm(r, c)});
    {
        std::vector<Triplet> trips;
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                if (rng.uniform_real() < 0.5) trips.push_back({i, j, rng.uniform_real(-1.0, 1.0)});
        auto s = std::make_shared<const SparseMatrix>(SparseMatrix::from_triplets(5, 5, trips));
        check("spmm_const",
              weighted([s](Tape&, const std::vector<Var>& p) { return spmm_const(s, p[0]); }, rm(5, c)),
              {rm(5, c)});
    }
    check("exp", weighted([](Tape&, const std::vector<Var>& p) { return exp(p[0]); }, rm(r, c)), {rm(r, c)});
    check("log", weighted([](Tape&, const std::vector<Var>& p) { return log(p[0]); }, rm(r, c)),
          {random_matrix(rng, r, c, 0.5, 2.0)});
    check("neg", weighted([](Tape&, const std::vector<Var>& p) { return neg(p[0]); }, rm(r, c)), {rm(r, c)});
    check("sum", [](Tape&, const std::vector<Var>& p) { return sum(mul(p[0], p[0])); }, {rm(r, c)});
    check("mean", [](Tape&, const std::vector<Var>& p) { return mean(mul(p[0], p[0])); }, {rm(r, c)});
    check("diag", weighted([](Tape&, const std::vector<Var>& p) { return diag(p[0]); }, rm(6, 1)),
          {rm(6, 6)});
    check("set_diagonal",
          weighted([](Tape&, const std::vector<Var>& p) { return set_diagonal(p[0], p[1]); }, rm(6, 6)),
          {rm(6, 6), rm(6, 1)});
    check("row_logsumexp",
          weighted([](Tape&, const std::vector<Var>& p) { return row_logsumexp(p[0]); }, rm(r, 1)),
          {random_matrix(rng, r, c, -3.0, 3.0)});

    // Composed losses at s = 16, D' = 8.
    const Eigen::Index s = 16, d = 8;
    check("cosine_sim_matrix",
          weighted([](Tape&, const std::vector<Var>& p) { return cosine_sim_matrix(p[0], p[1]); }, rm(s, s)),
          {rm(s, d), rm(s, d)});
    check("cross_network_loss",
          [](Tape&, const std::vector<Var>& p) { return cross_network_loss(p[0], p[1], p[2], p[3]); },
          {rm(s, d), rm(s, d), rm(s, d), rm(s, d)});
    check("inter_view_loss",
          [](Tape&, const std::vector<Var>& p) {
              auto t = inter_view_loss(p[0], p[1]);
              return sum(t.view1) + sum(t.view2);
          },
          {rm(s, d), rm(s, d)});
    check("intra_view_loss",
          [](Tape&, const std::vector<Var>& p) {
              auto t = intra_view_loss(p[0], p[1]);
              return sum(t.view1) + sum(t.view2);
          },
          {rm(s, d), rm(s, d)});
    check("cross_view_loss",
          [](Tape&, const std::vector<Var>& p) { return cross_view_loss(p[0], p[1]); },
          {rm(s, d), rm(s, d)});
    check("combine_losses",
          [](Tape&, const std::vector<Var>& p) {
              return combine_losses(cross_network_loss(p[0], p[1], p[2], p[3]), cross_view_loss(p[0], p[1]),
                                    0.6);
          },
          {rm(s, d), rm(s, d), rm(s, d), rm(s, d)});
    check("merit_objective",
          [](Tape&, const std::vector<Var>& p) { return merit_objective(p[0], p[1], p[2], p[3], 0.6).loss; },
          {rm(s, d), rm(s, d), rm(s, d), rm(s, d)});

    // End to end: GCN encoder -> projector -> predictor -> objective on N = 6.
    {
        const std::size_t n = 6, in = 5, lat = 4;
        std::vector<Triplet> edges;
        for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, 1.0});
        edges.push_back({0, 3, 1.0});
        const auto adj = adjacency_from_edges(n, edges);
        GraphView v1{rm(n, in), symmetric_normalize(adj, true), {}};
        GraphView v2{rm(n, in), ppr_diffusion_exact(adj, 0.15), {}};
        for (std::size_t i = 0; i < n; ++i) {
            v1.node_map.push_back(i);
            v2.node_map.push_back(i);
        }
        Rng init(seed + 17);
        const auto model = init_model(in, lat, init);
        std::vector<Matrix> params;
        std::vector<std::string> names;
        auto& o = model.online;
        for (const Matrix* m : {&o.encoder.weight, &o.encoder.prelu_slope, &o.projector.w1, &o.projector.b1,
                                &o.projector.bn_scale, &o.projector.bn_shift, &o.projector.act_slope,
                                &o.projector.w2, &o.projector.b2, &o.predictor.w1, &o.predictor.b1,
                                &o.predictor.bn_scale, &o.predictor.bn_shift, &o.predictor.act_slope,
                                &o.predictor.w2, &o.predictor.b2})
            params.push_back(*m);
        // Perturb biases and shifts away from their zero init so every path is exercised.
        for (std::size_t i : {3u, 5u, 8u, 10u, 12u, 15u}) params[i] = 0.1 * rm(1, params[i].cols());
        const Matrix zhat1 = rm(n, lat), zhat2 = rm(n, lat);
        check(
            "gcn_mlp_objective",
            [&, v1, v2, zhat1, zhat2](Tape& t, const std::vector<Var>& p) {
                EncoderVars enc{p[0], p[1]};
                HeadVars proj{p[2], p[3], p[4], p[5], p[6], p[7], p[8]};
                HeadVars pred{p[9], p[10], p[11], p[12], p[13], p[14], p[15]};
                auto s1 = BatchNormStats::fresh(lat), s2 = BatchNormStats::fresh(lat);
                auto h = [&](const GraphView& v) {
                    auto z = apply_head(proj, s1, encode(t, enc, v), true);
                    return apply_head(pred, s2, z, true);
                };
                return merit_objective(h(v1), h(v2), t.constant(zhat1), t.constant(zhat2), 0.6).loss;
            },
            params);
    }
    return out;
}

}  // namespace merit::ad
