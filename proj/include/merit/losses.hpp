#pragma once

#include "merit/autodiff.hpp"

namespace merit {

/// Loss values reported per training step.
struct LossBreakdown {
    double l_cn = 0.0;
    double l_cv = 0.0;
    double l_total = 0.0;
    double pos_sim = 0.0;  // mean cosine of cross-network positive pairs
    double neg_sim = 0.0;  // mean cosine of cross-network negative pairs
};

// Entry (i, j) = cos(u_i, v_j) / temperature. Zero rows give similarity 0.
ad::Var cosine_sim_matrix(ad::Var u, ad::Var v, double temperature = 1.0);

/// Symmetric online-vs-target contrast:
///   l1_i = -log softmax_j(sim(h1_i, z2hat_j))[i],  l2_i likewise with views swapped,
///   result = (sum l1 + sum l2) / 2s.
/// The denominator ranges over every j, the positive included.
ad::Var cross_network_loss(ad::Var h1, ad::Var h2, ad::Var z1_hat, ad::Var z2_hat,
                           double temperature = 1.0);

// Per-node terms in both directions, each s x 1.
struct DirectionalTerms {
    ad::Var view1;
    ad::Var view2;
};

// -log softmax over the other view's rows, positive = same node.
DirectionalTerms inter_view_loss(ad::Var h1, ad::Var h2, double temperature = 1.0);

// Same positive pair as inter_view_loss; negatives are the other nodes of the
// anchor's own view (j != i).
DirectionalTerms intra_view_loss(ad::Var h1, ad::Var h2, double temperature = 1.0);

// (1/2s) sum_i [inter1 + intra1 + inter2 + intra2].
ad::Var cross_view_loss(ad::Var h1, ad::Var h2, double temperature = 1.0);

// beta * l_cv + (1 - beta) * l_cn on the tape.
ad::Var combine_losses(ad::Var l_cn, ad::Var l_cv, double beta);
LossBreakdown total_loss(double l_cn, double l_cv, double beta);

struct Objective {
    ad::Var loss;
    LossBreakdown breakdown;
};

/// The full training objective. Normalises each input once and shares the
/// similarity matrices between the cross-network and cross-view terms.
Objective merit_objective(ad::Var h1, ad::Var h2, ad::Var z1_hat, ad::Var z2_hat, double beta,
                          double temperature = 1.0);

}  // namespace merit
