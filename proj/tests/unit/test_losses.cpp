#include "merit/error.hpp"
#include "merit/losses.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace merit;
using namespace merit::ad;
using namespace merit::testing;

namespace {

double eval_cn(const Matrix& h1, const Matrix& h2, const Matrix& z1, const Matrix& z2) {
    Tape t;
    return cross_network_loss(t.leaf(h1), t.leaf(h2), t.constant(z1), t.constant(z2)).scalar();
}

double eval_cv(const Matrix& h1, const Matrix& h2) {
    Tape t;
    return cross_view_loss(t.leaf(h1), t.leaf(h2)).scalar();
}

// Rows of a random orthogonal matrix.
Matrix orthonormal_rows(Rng& rng, Eigen::Index s, Eigen::Index d) {
    const Matrix m = random_dense(rng, d, d);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    const Eigen::MatrixXd q = qr.householderQ();
    return q.topRows(s);
}

}  // namespace

TEST_CASE("cosine_sim_matrix") {
    Rng rng(1);
    const Matrix u = orthonormal_rows(rng, 4, 6);
    Tape t;
    const Matrix id = cosine_sim_matrix(t.leaf(u), t.leaf(u)).value();
    CHECK(max_abs_diff(id, Matrix::Identity(4, 4)) < 1e-12);

    const Matrix x = random_dense(rng, 1, 5);
    CHECK(cosine_sim_matrix(t.leaf(x), t.leaf(-x)).value()(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));

    const Matrix a = random_dense(rng, 6, 4), b = random_dense(rng, 6, 4);
    const Matrix c = cosine_sim_matrix(t.leaf(a), t.leaf(b)).value();
    for (Eigen::Index i = 0; i < 6; ++i)
        for (Eigen::Index j = 0; j < 6; ++j) CHECK(std::abs(c(i, j) - cos_rows(a, i, b, j)) < 1e-12);

    Matrix z = random_dense(rng, 3, 4);
    z.row(1).setZero();
    const Matrix cz = cosine_sim_matrix(t.leaf(z), t.leaf(b.topRows(3))).value();
    CHECK(cz.row(1).isZero(0.0));
    CHECK_THROWS_AS(cosine_sim_matrix(t.leaf(a), t.leaf(random_dense(rng, 6, 3))), DimensionError);
}

TEST_CASE("cross_network_loss: s = 1 is zero, s >= 2 positive, and matches the oracle") {
    Rng rng(2);
    const Matrix one = random_dense(rng, 1, 3);
    CHECK(eval_cn(one, random_dense(rng, 1, 3), random_dense(rng, 1, 3), random_dense(rng, 1, 3)) ==
          doctest::Approx(0.0));
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index s = 2 + trial % 6;
        const Matrix h1 = random_dense(rng, s, 5), h2 = random_dense(rng, s, 5);
        const Matrix z1 = random_dense(rng, s, 5), z2 = random_dense(rng, s, 5);
        const double v = eval_cn(h1, h2, z1, z2);
        CHECK(v > 0.0);
        CHECK(std::abs(v - oracle_cross_network(h1, h2, z1, z2)) < 1e-12);
    }
}

TEST_CASE("cross_network_loss is symmetric under swapping the views") {
    Rng rng(3);
    const Matrix h1 = random_dense(rng, 7, 4), h2 = random_dense(rng, 7, 4);
    const Matrix z1 = random_dense(rng, 7, 4), z2 = random_dense(rng, 7, 4);
    CHECK(std::abs(eval_cn(h1, h2, z1, z2) - eval_cn(h2, h1, z2, z1)) < 1e-12);
}

TEST_CASE("inter and intra view terms: closed form with orthonormal rows") {
    Rng rng(4);
    const Eigen::Index s = 5;
    const Matrix h = orthonormal_rows(rng, s, 8);
    const double expected = std::log(1.0 + (s - 1) / std::exp(1.0));
    Tape t;
    const auto inter = inter_view_loss(t.leaf(h), t.leaf(h));
    const auto intra = intra_view_loss(t.leaf(h), t.leaf(h));
    for (Eigen::Index i = 0; i < s; ++i) {
        CHECK(std::abs(inter.view1.value()(i, 0) - expected) < 1e-12);
        CHECK(std::abs(inter.view2.value()(i, 0) - expected) < 1e-12);
        CHECK(std::abs(intra.view1.value()(i, 0) - expected) < 1e-12);
        CHECK(std::abs(intra.view2.value()(i, 0) - expected) < 1e-12);
    }
}

TEST_CASE("inter and intra view terms match per-node oracles") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index s = 5;
        const Matrix h1 = random_dense(rng, s, 4), h2 = random_dense(rng, s, 4);
        Tape t;
        const auto inter = inter_view_loss(t.leaf(h1), t.leaf(h2));
        const auto intra = intra_view_loss(t.leaf(h1), t.leaf(h2));
        for (Eigen::Index i = 0; i < s; ++i) {
            CHECK(std::abs(inter.view1.value()(i, 0) - oracle_inter(h1, h2, i)) < 1e-12);
            CHECK(std::abs(inter.view2.value()(i, 0) - oracle_inter(h2, h1, i)) < 1e-12);
            CHECK(std::abs(intra.view1.value()(i, 0) - oracle_intra(h1, h2, i)) < 1e-12);
            CHECK(std::abs(intra.view2.value()(i, 0) - oracle_intra(h2, h1, i)) < 1e-12);
        }
    }
}

TEST_CASE("single-node views give zero view losses") {
    Rng rng(6);
    const Matrix a = random_dense(rng, 1, 3), b = random_dense(rng, 1, 3);
    Tape t;
    CHECK(inter_view_loss(t.leaf(a), t.leaf(b)).view1.value()(0, 0) == doctest::Approx(0.0));
    CHECK(intra_view_loss(t.leaf(a), t.leaf(b)).view1.value()(0, 0) == doctest::Approx(0.0));
    CHECK(eval_cv(a, b) == doctest::Approx(0.0));
}

TEST_CASE("cross_view_loss recomposes from the four per-node terms and matches the oracle") {
    Rng rng(7);
    const Eigen::Index s = 6;
    const Matrix h1 = random_dense(rng, s, 4), h2 = random_dense(rng, s, 4);
    Tape t;
    const Var a = t.leaf(h1), b = t.leaf(h2);
    const auto inter = inter_view_loss(a, b);
    const auto intra = intra_view_loss(a, b);
    const double recomposed = (inter.view1.value().sum() + intra.view1.value().sum() +
                               inter.view2.value().sum() + intra.view2.value().sum()) /
                              (2.0 * s);
    const double v = cross_view_loss(a, b).scalar();
    CHECK(std::abs(v - recomposed) < 1e-12);
    CHECK(std::abs(v - oracle_cross_view(h1, h2)) < 1e-12);
    CHECK(std::abs(v - eval_cv(h2, h1)) < 1e-12);
}

TEST_CASE("total_loss endpoints and arithmetic") {
    CHECK(total_loss(2.0, 4.0, 0.0).l_total == 2.0);
    CHECK(total_loss(2.0, 4.0, 1.0).l_total == 4.0);
    CHECK(total_loss(2.0, 4.0, 0.5).l_total == 3.0);
    for (double beta : {0.2, 0.4, 0.6, 0.8}) {
        const auto b = total_loss(1.7, 3.1, beta);
        CHECK(std::abs(b.l_total - (beta * 3.1 + (1 - beta) * 1.7)) < 1e-12);
    }
    CHECK_THROWS_AS(total_loss(1.0, 1.0, 1.5), ValidationError);
    CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), ValidationError);
}

TEST_CASE("merit_objective matches the oracle and its own breakdown") {
    Rng rng(8);
    for (double beta : {0.0, 0.3, 0.6, 1.0}) {
        const Matrix h1 = random_dense(rng, 9, 5), h2 = random_dense(rng, 9, 5);
        const Matrix z1 = random_dense(rng, 9, 5), z2 = random_dense(rng, 9, 5);
        Tape t;
        const auto obj = merit_objective(t.leaf(h1), t.leaf(h2), t.constant(z1), t.constant(z2), beta);
        CHECK(std::abs(obj.loss.scalar() - oracle_total(h1, h2, z1, z2, beta)) < 1e-12);
        const auto& b = obj.breakdown;
        CHECK(std::abs(b.l_cn - oracle_cross_network(h1, h2, z1, z2)) < 1e-12);
        CHECK(std::abs(b.l_cv - oracle_cross_view(h1, h2)) < 1e-12);
        CHECK(std::abs(b.l_total - (beta * b.l_cv + (1 - beta) * b.l_cn)) < 1e-12);
        // Diagnostics: mean positive and negative cross-network cosines.
        double pos = 0.0, neg = 0.0;
        for (Eigen::Index i = 0; i < 9; ++i)
            for (Eigen::Index j = 0; j < 9; ++j) {
                const double c = cos_rows(h1, i, z2, j) + cos_rows(h2, i, z1, j);
                (i == j ? pos : neg) += c;
            }
        CHECK(std::abs(b.pos_sim - pos / 18.0) < 1e-12);
        CHECK(std::abs(b.neg_sim - neg / (18.0 * 8.0)) < 1e-12);
    }
}

TEST_CASE("losses are invariant to positive row rescaling") {
    Rng rng(9);
    const Matrix h1 = random_dense(rng, 6, 4), h2 = random_dense(rng, 6, 4);
    const Matrix z1 = random_dense(rng, 6, 4), z2 = random_dense(rng, 6, 4);
    const Eigen::VectorXd scale = (random_dense(rng, 6, 1, 0.1, 10.0)).col(0);
    const Matrix h1s = scale.asDiagonal() * h1;
    CHECK(std::abs(eval_cn(h1, h2, z1, z2) - eval_cn(h1s, h2, z1, z2)) < 1e-10);
    CHECK(std::abs(eval_cv(h1, h2) - eval_cv(h1s, h2)) < 1e-10);
}

TEST_CASE("losses are non-negative on random inputs") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix h1 = random_dense(rng, 8, 3), h2 = random_dense(rng, 8, 3);
        CHECK(eval_cv(h1, h2) >= 0.0);
        CHECK(eval_cn(h1, h2, h2, h1) >= 0.0);
    }
}

TEST_CASE("beta = 0 gradients equal those of the cross-network loss alone") {
    Rng rng(11);
    const Matrix h1 = random_dense(rng, 8, 4), h2 = random_dense(rng, 8, 4);
    const Matrix z1 = random_dense(rng, 8, 4), z2 = random_dense(rng, 8, 4);
    Tape a;
    const Var a1 = a.leaf(h1), a2 = a.leaf(h2);
    a.backward(merit_objective(a1, a2, a.constant(z1), a.constant(z2), 0.0).loss);
    Tape b;
    const Var b1 = b.leaf(h1), b2 = b.leaf(h2);
    b.backward(cross_network_loss(b1, b2, b.constant(z1), b.constant(z2)));
    CHECK(max_abs_diff(a1.grad(), b1.grad()) < 1e-10);
    CHECK(max_abs_diff(a2.grad(), b2.grad()) < 1e-10);
}
