#include "merit/autodiff.hpp"

#include "merit/error.hpp"

#include <cmath>
#include <string>

namespace merit::ad {
namespace {

Tape& same_tape(Var a, Var b) {
    if (!a.valid() || !b.valid()) throw Error("autodiff: use of an empty Var");
    if (a.tape() != b.tape()) throw Error("autodiff: operands live on different tapes");
    return *a.tape();
}

Tape& tape_of(Var a) {
    if (!a.valid()) throw Error("autodiff: use of an empty Var");
    return *a.tape();
}

std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shapes " + shape(a) + " and " + shape(b));
}

}  // namespace

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::detach: return "detach";
        case OpKind::matmul: return "matmul";
        case OpKind::matmul_nt: return "matmul_nt";
        case OpKind::transpose: return "transpose";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::add_row_bias: return "add_row_bias";
        case OpKind::prelu: return "prelu";
        case OpKind::batchnorm_rows: return "batchnorm_rows";
        case OpKind::l2_normalize_rows: return "l2_normalize_rows";
        case OpKind::spmm_const: return "spmm_const";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::neg: return "neg";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::diag: return "diag";
        case OpKind::set_diagonal: return "set_diagonal";
        case OpKind::row_logsumexp: return "row_logsumexp";
    }
    return "unknown";
}

const Matrix& Var::value() const { return tape_of(*this).value(id_); }
Matrix Var::grad() const { return tape_of(*this).grad(id_); }
bool Var::requires_grad() const { return tape_of(*this).requires_grad(id_); }

double Var::scalar() const {
    const Matrix& v = value();
    if (v.rows() != 1 || v.cols() != 1) throw DimensionError("scalar(): node is " + shape(v));
    return v(0, 0);
}

BatchNormStats BatchNormStats::fresh(Eigen::Index channels) {
    BatchNormStats s;
    s.running_mean = Matrix::Zero(1, channels);
    s.running_var = Matrix::Ones(1, channels);
    return s;
}

Var Tape::leaf(Matrix value, bool requires_grad) {
    Node n;
    n.kind = OpKind::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(OpKind kind, Matrix value, std::vector<int> inputs, BackwardFn backward) {
#ifndef NDEBUG
    if (!value.allFinite())
        throw NumericError("autodiff: non-finite output from " + std::string(op_name(kind)));
#endif
    Node n;
    n.kind = kind;
    n.value = std::move(value);
    for (int i : inputs) n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(i)].requires_grad;
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push_detached(Matrix value, int source) {
    Node n;
    n.kind = OpKind::detach;
    n.value = std::move(value);
    n.inputs = {source};
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(int id, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
        n.grad = g;
    else
        n.grad += g;
}

Matrix Tape::grad(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw Error("backward: loss belongs to another tape");
    const Matrix& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1)
        throw DimensionError("backward: loss must be 1x1, got " + shape(lv));
    if (backward_done_) throw Error("backward: gradients already computed; call zero_grad() first");
    backward_done_ = true;
    if (!requires_grad(loss.id())) return;

    accumulate(loss.id(), Matrix::Ones(1, 1));
    for (int id = loss.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.size() == 0 || !n.backward) continue;
        n.backward(*this, id);
        // Interior gradients are not needed once propagated.
        if (id != loss.id()) n.grad = Matrix();
    }
}

void Tape::zero_grad() {
    for (auto& n : nodes_) n.grad = Matrix();
    backward_done_ = false;
}

std::vector<OpRecord> Tape::records() const {
    std::vector<OpRecord> out;
    out.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        out.push_back({nodes_[i].kind, nodes_[i].inputs, static_cast<int>(i)});
    return out;
}

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.cols() != bv.rows()) throw DimensionError("matmul: " + shape(av) + " * " + shape(bv));
    Matrix out(av.rows(), bv.cols());
    out.noalias() = av * bv;
    const int ia = a.id(), ib = b.id();
    return t.push(OpKind::matmul, std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        if (t.requires_grad(ia)) {
            Matrix ga(g.rows(), t.value(ib).rows());
            ga.noalias() = g * t.value(ib).transpose();
            t.accumulate(ia, ga);
        }
        if (t.requires_grad(ib)) {
            Matrix gb(t.value(ia).cols(), g.cols());
            gb.noalias() = t.value(ia).transpose() * g;
            t.accumulate(ib, gb);
        }
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.cols() != bv.cols()) throw DimensionError("matmul_nt: " + shape(av) + " * (" + shape(bv) + ")ᵀ");
    Matrix out(av.rows(), bv.rows());
    out.noalias() = av * bv.transpose();
    const int ia = a.id(), ib = b.id();
    return t.push(OpKind::matmul_nt, std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        if (t.requires_grad(ia)) {
            Matrix ga(g.rows(), t.value(ib).cols());
            ga.noalias() = g * t.value(ib);
            t.accumulate(ia, ga);
        }
        if (t.requires_grad(ib)) {
            Matrix gb(g.cols(), t.value(ia).cols());
            gb.noalias() = g.transpose() * t.value(ia);
            t.accumulate(ib, gb);
        }
    });
}

Var transpose(Var a) {
    Tape& t = tape_of(a);
    Matrix out = a.value().transpose();
    const int ia = a.id();
    return t.push(OpKind::transpose, std::move(out), {ia}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self).transpose());
    });
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape("add", a.value(), b.value());
    const int ia = a.id(), ib = b.id();
    return t.push(OpKind::add, a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self));
        t.accumulate(ib, t.upstream(self));
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape("sub", a.value(), b.value());
    const int ia = a.id(), ib = b.id();
    return t.push(OpKind::sub, a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self));
        t.accumulate(ib, -t.upstream(self));
    });
}

Var mul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape("mul", a.value(), b.value());
    const int ia = a.id(), ib = b.id();
    return t.push(OpKind::mul, a.value().cwiseProduct(b.value()), {ia, ib},
                  [ia, ib](Tape& t, int self) {
                      const Matrix& g = t.upstream(self);
                      if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                      if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                  });
}

Var scale(Var a, double c) {
    Tape& t = tape_of(a);
    const int ia = a.id();
    return t.push(OpKind::scale, c * a.value(), {ia}, [ia, c](Tape& t, int self) {
        t.accumulate(ia, c * t.upstream(self));
    });
}

Var add_row_bias(Var x, Var bias) {
    Tape& t = same_tape(x, bias);
    const Matrix& xv = x.value();
    const Matrix& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != xv.cols())
        throw DimensionError("add_row_bias: bias " + shape(bv) + " for input " + shape(xv));
    Matrix out = xv.rowwise() + bv.row(0);
    const int ix = x.id(), ib = bias.id();
    return t.push(OpKind::add_row_bias, std::move(out), {ix, ib}, [ix, ib](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        t.accumulate(ix, g);
        if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
    });
}

Var spmm_const(std::shared_ptr<const SparseMatrix> s, Var x) {
    Tape& t = tape_of(x);
    if (!s) throw Error("spmm_const: null operator");
    Matrix out = spmm(*s, x.value());
    const int ix = x.id();
    return t.push(OpKind::spmm_const, std::move(out), {ix}, [ix, s](Tape& t, int self) {
        t.accumulate(ix, spmm_transposed(*s, t.upstream(self)));
    });
}

Var prelu(Var x, Var slope) {
    Tape& t = same_tape(x, slope);
    const Matrix& sv = slope.value();
    if (sv.rows() != 1 || sv.cols() != 1) throw DimensionError("prelu: slope must be 1x1");
    const double a = sv(0, 0);
    Matrix out = x.value().unaryExpr([a](double v) { return v > 0.0 ? v : a * v; });
    const int ix = x.id(), is = slope.id();
    return t.push(OpKind::prelu, std::move(out), {ix, is}, [ix, is](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        const Matrix& xv = t.value(ix);
        const double a = t.value(is)(0, 0);
        if (t.requires_grad(ix))
            t.accumulate(ix, g.binaryExpr(xv, [a](double gi, double v) { return v > 0.0 ? gi : a * gi; }));
        if (t.requires_grad(is)) {
            const double ga =
                g.binaryExpr(xv, [](double gi, double v) { return v > 0.0 ? 0.0 : gi * v; }).sum();
            t.accumulate(is, Matrix::Constant(1, 1, ga));
        }
    });
}

Var batchnorm_rows(Var x, Var scale_var, Var shift, BatchNormStats& stats, bool training) {
    Tape& t = same_tape(x, scale_var);
    same_tape(x, shift);
    const Matrix& xv = x.value();
    const Eigen::Index n = xv.rows();
    const Eigen::Index c = xv.cols();
    if (scale_var.value().rows() != 1 || scale_var.value().cols() != c ||
        shift.value().rows() != 1 || shift.value().cols() != c)
        throw DimensionError("batchnorm_rows: scale/shift must be 1x" + std::to_string(c));
    if (stats.running_mean.cols() != c || stats.running_var.cols() != c)
        throw DimensionError("batchnorm_rows: running statistics have wrong width");

    const Eigen::RowVectorXd gamma = scale_var.value().row(0);
    const Eigen::RowVectorXd beta = shift.value().row(0);
    const int ix = x.id(), ig = scale_var.id(), ib = shift.id();

    if (!training) {
        const Eigen::RowVectorXd mu = stats.running_mean.row(0);
        const Eigen::RowVectorXd inv_std =
            (stats.running_var.row(0).array() + stats.eps).rsqrt().matrix();
        Matrix xhat = (xv.rowwise() - mu).array().rowwise() * inv_std.array();
        Matrix out = (xhat.array().rowwise() * gamma.array()).rowwise() + beta.array();
        return t.push(OpKind::batchnorm_rows, std::move(out), {ix, ig, ib},
                      [ix, ig, ib, xhat = std::move(xhat), inv_std](Tape& t, int self) {
                          const Matrix& g = t.upstream(self);
                          const Eigen::RowVectorXd gam = t.value(ig).row(0);
                          if (t.requires_grad(ix))
                              t.accumulate(ix, g.array().rowwise() * (gam.array() * inv_std.array()));
                          if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                          if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                      });
    }

    if (n < 2) throw DimensionError("batchnorm_rows: training mode needs at least 2 rows");
    const Eigen::RowVectorXd mu = xv.colwise().mean();
    const Matrix centered = xv.rowwise() - mu;
    const Eigen::RowVectorXd var = centered.array().square().colwise().sum() / static_cast<double>(n);
    const Eigen::RowVectorXd inv_std = (var.array() + stats.eps).rsqrt().matrix();
    Matrix xhat = centered.array().rowwise() * inv_std.array();
    Matrix out = (xhat.array().rowwise() * gamma.array()).rowwise() + beta.array();

    const double m = stats.momentum;
    stats.running_mean = m * stats.running_mean + (1.0 - m) * Matrix(mu);
    const Eigen::RowVectorXd unbiased = var * (static_cast<double>(n) / static_cast<double>(n - 1));
    stats.running_var = m * stats.running_var + (1.0 - m) * Matrix(unbiased);

    return t.push(OpKind::batchnorm_rows, std::move(out), {ix, ig, ib},
                  [ix, ig, ib, xhat = std::move(xhat), inv_std](Tape& t, int self) {
                      const Matrix& g = t.upstream(self);
                      const Eigen::RowVectorXd gam = t.value(ig).row(0);
                      if (t.requires_grad(ix)) {
                          const auto rows = static_cast<double>(g.rows());
                          const Matrix dxhat = g.array().rowwise() * gam.array();
                          const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
                          const Eigen::RowVectorXd sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
                          Matrix dx = (rows * dxhat).rowwise() - sum_d;
                          dx -= xhat.array().rowwise().operator*(sum_dx.array()).matrix();
                          dx = dx.array().rowwise() * (inv_std.array() / rows);
                          t.accumulate(ix, dx);
                      }
                      if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                      if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                  });
}

Var l2_normalize_rows(Var x) {
    Tape& t = tape_of(x);
    const Matrix& xv = x.value();
    Eigen::VectorXd norms = xv.rowwise().norm();
    Matrix out = Matrix::Zero(xv.rows(), xv.cols());
    for (Eigen::Index i = 0; i < xv.rows(); ++i)
        if (norms(i) > 0.0) out.row(i) = xv.row(i) / norms(i);
    const int ix = x.id();
    Matrix y = out;
    return t.push(OpKind::l2_normalize_rows, std::move(out), {ix},
                  [ix, y = std::move(y), norms = std::move(norms)](Tape& t, int self) {
                      const Matrix& g = t.upstream(self);
                      Matrix dx = Matrix::Zero(g.rows(), g.cols());
                      for (Eigen::Index i = 0; i < g.rows(); ++i) {
                          if (norms(i) == 0.0) continue;
                          const double proj = g.row(i).dot(y.row(i));
                          dx.row(i) = (g.row(i) - proj * y.row(i)) / norms(i);
                      }
                      t.accumulate(ix, dx);
                  });
}

Var exp(Var a) {
    Tape& t = tape_of(a);
    Matrix out = a.value().array().exp();
    const int ia = a.id();
    return t.push(OpKind::exp, std::move(out), {ia}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self).cwiseProduct(t.value(self)));
    });
}

Var log(Var a) {
    Tape& t = tape_of(a);
    if ((a.value().array() <= 0.0).any()) throw NumericError("log: non-positive input");
    Matrix out = a.value().array().log();
    const int ia = a.id();
    return t.push(OpKind::log, std::move(out), {ia}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self).cwiseQuotient(t.value(ia)));
    });
}

Var neg(Var a) {
    Tape& t = tape_of(a);
    const int ia = a.id();
    return t.push(OpKind::neg, -a.value(), {ia}, [ia](Tape& t, int self) {
        t.accumulate(ia, -t.upstream(self));
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    const int ia = a.id();
    const Eigen::Index r = a.rows(), c = a.cols();
    return t.push(OpKind::sum, Matrix::Constant(1, 1, a.value().sum()), {ia},
                  [ia, r, c](Tape& t, int self) {
                      t.accumulate(ia, Matrix::Constant(r, c, t.upstream(self)(0, 0)));
                  });
}

Var mean(Var a) {
    Tape& t = tape_of(a);
    const int ia = a.id();
    const Eigen::Index r = a.rows(), c = a.cols();
    if (r * c == 0) throw DimensionError("mean: empty input");
    const double inv = 1.0 / static_cast<double>(r * c);
    return t.push(OpKind::mean, Matrix::Constant(1, 1, a.value().sum() * inv), {ia},
                  [ia, r, c, inv](Tape& t, int self) {
                      t.accumulate(ia, Matrix::Constant(r, c, t.upstream(self)(0, 0) * inv));
                  });
}

Var diag(Var a) {
    Tape& t = tape_of(a);
    const Matrix& av = a.value();
    if (av.rows() != av.cols()) throw DimensionError("diag: input " + shape(av) + " not square");
    Matrix out = av.diagonal();
    const int ia = a.id();
    const Eigen::Index n = av.rows();
    return t.push(OpKind::diag, std::move(out), {ia}, [ia, n](Tape& t, int self) {
        Matrix g = Matrix::Zero(n, n);
        g.diagonal() = t.upstream(self).col(0);
        t.accumulate(ia, g);
    });
}

Var set_diagonal(Var a, Var d) {
    Tape& t = same_tape(a, d);
    const Matrix& av = a.value();
    if (av.rows() != av.cols()) throw DimensionError("set_diagonal: input " + shape(av) + " not square");
    if (d.rows() != av.rows() || d.cols() != 1)
        throw DimensionError("set_diagonal: diagonal " + shape(d.value()) + " for " + shape(av));
    Matrix out = av;
    out.diagonal() = d.value().col(0);
    const int ia = a.id(), id = d.id();
    return t.push(OpKind::set_diagonal, std::move(out), {ia, id}, [ia, id](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        if (t.requires_grad(ia)) {
            Matrix ga = g;
            ga.diagonal().setZero();
            t.accumulate(ia, ga);
        }
        if (t.requires_grad(id)) t.accumulate(id, Matrix(g.diagonal()));
    });
}

Var row_logsumexp(Var a) {
    Tape& t = tape_of(a);
    const Matrix& av = a.value();
    if (av.cols() == 0) throw DimensionError("row_logsumexp: no columns");
    const Eigen::VectorXd mx = av.rowwise().maxCoeff();
    Matrix shifted = av.colwise() - mx;
    Matrix e = shifted.array().exp();
    const Eigen::VectorXd s = e.rowwise().sum();
    Matrix out = (s.array().log() + mx.array()).matrix();
    Matrix softmax = e.array().colwise() / s.array();
    const int ia = a.id();
    return t.push(OpKind::row_logsumexp, std::move(out), {ia},
                  [ia, softmax = std::move(softmax)](Tape& t, int self) {
                      const Matrix& g = t.upstream(self);
                      t.accumulate(ia, softmax.array().colwise() * g.col(0).array());
                  });
}

Var detach(Var x) {
    Tape& t = tape_of(x);
    return t.push_detached(x.value(), x.id());
}

}  // namespace merit::ad
