#include "merit/losses.hpp"

#include "merit/error.hpp"

#include <string>

namespace merit {
namespace {

using ad::Var;

void require_rows(Var a, Var b, const char* op) {
    if (a.rows() == 0) throw DimensionError(std::string(op) + ": empty view (s = 0)");
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": inputs must share shape");
}

Var similarity(Var nu, Var nv, double temperature) {
    Var s = ad::matmul_nt(nu, nv);
    return temperature == 1.0 ? s : ad::scale(s, 1.0 / temperature);
}

// -log(exp(s_ii) / sum_j exp(s_ij)) per row.
Var info_nce_rows(Var sim) { return ad::row_logsumexp(sim) - ad::diag(sim); }

// -log(exp(p_i) / (exp(p_i) + sum_{j != i} exp(s_ij))) per row.
Var intra_rows(Var same_view_sim, Var positives) {
    return ad::row_logsumexp(ad::set_diagonal(same_view_sim, positives)) - positives;
}

double scale_of(Eigen::Index s) { return 1.0 / (2.0 * static_cast<double>(s)); }

}  // namespace

Var cosine_sim_matrix(Var u, Var v, double temperature) {
    if (u.cols() != v.cols()) throw DimensionError("cosine_sim_matrix: feature widths differ");
    if (!(temperature > 0.0)) throw ValidationError("cosine_sim_matrix: temperature must be > 0");
    return similarity(ad::l2_normalize_rows(u), ad::l2_normalize_rows(v), temperature);
}

Var cross_network_loss(Var h1, Var h2, Var z1_hat, Var z2_hat, double temperature) {
    require_rows(h1, h2, "cross_network_loss");
    require_rows(h1, z1_hat, "cross_network_loss");
    require_rows(h1, z2_hat, "cross_network_loss");
    const Var l1 = info_nce_rows(cosine_sim_matrix(h1, z2_hat, temperature));
    const Var l2 = info_nce_rows(cosine_sim_matrix(h2, z1_hat, temperature));
    return ad::scale(ad::sum(l1) + ad::sum(l2), scale_of(h1.rows()));
}

DirectionalTerms inter_view_loss(Var h1, Var h2, double temperature) {
    require_rows(h1, h2, "inter_view_loss");
    const Var n1 = ad::l2_normalize_rows(h1);
    const Var n2 = ad::l2_normalize_rows(h2);
    return {info_nce_rows(similarity(n1, n2, temperature)),
            info_nce_rows(similarity(n2, n1, temperature))};
}

DirectionalTerms intra_view_loss(Var h1, Var h2, double temperature) {
    require_rows(h1, h2, "intra_view_loss");
    const Var n1 = ad::l2_normalize_rows(h1);
    const Var n2 = ad::l2_normalize_rows(h2);
    const Var pos = ad::diag(similarity(n1, n2, temperature));
    return {intra_rows(similarity(n1, n1, temperature), pos),
            intra_rows(similarity(n2, n2, temperature), pos)};
}

Var cross_view_loss(Var h1, Var h2, double temperature) {
    const auto inter = inter_view_loss(h1, h2, temperature);
    const auto intra = intra_view_loss(h1, h2, temperature);
    const Var total = ad::sum(inter.view1) + ad::sum(intra.view1) + ad::sum(inter.view2) +
                      ad::sum(intra.view2);
    return ad::scale(total, scale_of(h1.rows()));
}

Var combine_losses(Var l_cn, Var l_cv, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
    return ad::scale(l_cv, beta) + ad::scale(l_cn, 1.0 - beta);
}

LossBreakdown total_loss(double l_cn, double l_cv, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
    LossBreakdown b;
    b.l_cn = l_cn;
    b.l_cv = l_cv;
    b.l_total = beta * l_cv + (1.0 - beta) * l_cn;
    return b;
}

Objective merit_objective(Var h1, Var h2, Var z1_hat, Var z2_hat, double beta, double temperature) {
    require_rows(h1, h2, "merit_objective");
    require_rows(h1, z1_hat, "merit_objective");
    require_rows(h1, z2_hat, "merit_objective");
    if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
    const Eigen::Index s = h1.rows();

    const Var n1 = ad::l2_normalize_rows(h1);
    const Var n2 = ad::l2_normalize_rows(h2);
    const Var nz1 = ad::l2_normalize_rows(z1_hat);
    const Var nz2 = ad::l2_normalize_rows(z2_hat);

    // Cross-network.
    const Var c12 = similarity(n1, nz2, temperature);
    const Var c21 = similarity(n2, nz1, temperature);
    const Var l_cn = ad::scale(ad::sum(info_nce_rows(c12)) + ad::sum(info_nce_rows(c21)), scale_of(s));

    // Cross-view: S21 = S12ᵀ, positives shared by all four terms.
    const Var s12 = similarity(n1, n2, temperature);
    const Var s21 = ad::transpose(s12);
    const Var pos = ad::diag(s12);
    const Var cv_sum = ad::sum(info_nce_rows(s12)) +
                       ad::sum(intra_rows(similarity(n1, n1, temperature), pos)) +
                       ad::sum(info_nce_rows(s21)) +
                       ad::sum(intra_rows(similarity(n2, n2, temperature), pos));
    const Var l_cv = ad::scale(cv_sum, scale_of(s));

    Objective out;
    out.loss = combine_losses(l_cn, l_cv, beta);
    out.breakdown = total_loss(l_cn.scalar(), l_cv.scalar(), beta);
    out.breakdown.l_total = out.loss.scalar();

    const ad::Matrix& a = c12.value();
    const ad::Matrix& b = c21.value();
    const double diag_sum = a.diagonal().sum() + b.diagonal().sum();
    out.breakdown.pos_sim = temperature * diag_sum / (2.0 * static_cast<double>(s));
    if (s > 1) {
        const double off = a.sum() + b.sum() - diag_sum;
        out.breakdown.neg_sim =
            temperature * off / (2.0 * static_cast<double>(s) * static_cast<double>(s - 1));
    }
    return out;
}

}  // namespace merit
