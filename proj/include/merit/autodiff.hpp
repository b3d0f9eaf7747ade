#pragma once

#include "merit/sparse.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <string_view>
#include <vector>

namespace merit::ad {

using Matrix = DenseMatrix;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    // Accumulated gradient; a zero matrix of matching shape if none reached this node.
    Matrix grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    // Value of a 1x1 node.
    double scalar() const;
    bool requires_grad() const;

    Tape* tape() const noexcept { return tape_; }
    int id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

enum class OpKind {
    leaf,
    detach,
    matmul,
    matmul_nt,
    transpose,
    add,
    sub,
    mul,
    scale,
    add_row_bias,
    prelu,
    batchnorm_rows,
    l2_normalize_rows,
    spmm_const,
    exp,
    log,
    neg,
    sum,
    mean,
    diag,
    set_diagonal,
    row_logsumexp,
};

std::string_view op_name(OpKind kind);

struct OpRecord {
    OpKind kind;
    std::vector<int> inputs;
    int output;
};

/// Ordered record of differentiable operations. Nodes are appended in
/// evaluation order, so the record list is topologically sorted and backward
/// is a single reverse sweep. Single-threaded; one tape per computation.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Matrix value, bool requires_grad = true);
    Var constant(Matrix value) { return leaf(std::move(value), false); }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once. A second call
    // without zero_grad() throws.
    void backward(Var loss);
    void zero_grad();
    bool backward_done() const noexcept { return backward_done_; }

    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Matrix grad(int id) const;
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    OpKind kind(int id) const { return nodes_[static_cast<std::size_t>(id)].kind; }

    std::vector<OpRecord> records() const;
    std::size_t size() const noexcept { return nodes_.size(); }

    // Used by the primitive implementations.
    Var push(OpKind kind, Matrix value, std::vector<int> inputs, BackwardFn backward);
    // Records `source` as an input for inspection but never propagates to it.
    Var push_detached(Matrix value, int source);
    void accumulate(int id, const Matrix& g);
    const Matrix& upstream(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

private:
    struct Node {
        OpKind kind;
        Matrix value;
        Matrix grad;  // empty until something accumulates into it
        bool requires_grad = false;
        std::vector<int> inputs;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

/// Running statistics for batchnorm_rows. Exponential average with
/// `momentum` weight on the old value; variance uses the unbiased batch estimate.
struct BatchNormStats {
    Matrix running_mean;  // 1 x C
    Matrix running_var;   // 1 x C
    double momentum = 0.99;
    double eps = 1e-5;

    static BatchNormStats fresh(Eigen::Index channels);
};

// Dense algebra
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * bᵀ
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double c);
Var add_row_bias(Var x, Var bias);  // bias is 1 x C, broadcast over rows
Var spmm_const(std::shared_ptr<const SparseMatrix> s, Var x);  // no gradient to s

// Network layers
Var prelu(Var x, Var slope);  // slope is 1 x 1
Var batchnorm_rows(Var x, Var scale, Var shift, BatchNormStats& stats, bool training);
// Zero rows map to zero rows with zero gradient.
Var l2_normalize_rows(Var x);

// Elementwise / reductions
Var exp(Var a);
Var log(Var a);
Var neg(Var a);
Var sum(Var a);   // 1 x 1
Var mean(Var a);  // 1 x 1
Var diag(Var a);  // n x n -> n x 1
Var set_diagonal(Var a, Var d);  // copy of a with diagonal replaced by d (n x 1)
Var row_logsumexp(Var a);        // n x m -> n x 1, max-shifted

// Stop-gradient: same value, no backward edge.
Var detach(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }

}  // namespace merit::ad
