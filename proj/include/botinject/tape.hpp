#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every primitive as it is evaluated. Nodes are appended in
// evaluation order, so the reverse of that order is a valid topological order
// for the backward sweep. All values are row-oriented: a batch of n vectors of
// width d is an n x d matrix.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace botinject {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Vector = VectorX<double>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

/// A named trainable matrix and its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad();
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the gradient flowing into a node and pushes contributions to its
  /// inputs through Tape::accumulate.
  using Backprop = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Registers a parameter as a leaf. Registering the same parameter twice
  /// returns the same node.
  Var param(Parameter& p);

  /// Appends an op node. `inputs` decide whether the node needs a gradient;
  /// when none of them do, `backprop` is dropped.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backprop backprop);
  Var record(Matrix value, std::span<const Var> inputs, Backprop backprop);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const;
  void accumulate(Var v, const Matrix& g);

  /// Zeroes the grad of every registered parameter, then writes d loss / d p.
  /// Throws std::logic_error when called a second time on the same recording.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  std::vector<Parameter*> parameters() const;

  /// Folds the branch taken by every element of a piecewise op into a running
  /// hash, so two recordings can be compared for kink crossings.
  void note_branches(const Matrix& x);
  std::uint64_t branch_signature() const { return branch_signature_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backprop backprop;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void check_owned(Var v) const;

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool consumed_ = false;
  std::uint64_t branch_signature_ = 0xcbf29ce484222325ULL;
};

// ---------------------------------------------------------------------------
// Primitives. Every function throws std::invalid_argument on shape mismatch.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var add_constant(Var a, double c);
/// x (n x d) plus bias (1 x d) on every row.
Var add_row(Var x, Var bias);
/// x W + b.
Var affine(Var x, Var weight, Var bias);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

Var leaky_relu(Var x, double slope);
Var tanh(Var x);
Var abs(Var x);
Var reciprocal(Var x);

Var sum(Var x);
Var mean(Var x);
Var squared_norm(Var x);

Var softmax_rows(Var logits);
/// Mean over rows of -log p(label). Probabilities are clamped to
/// [1e-12, 1 - 1e-12] before the log. Throws on non-finite logits.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

Var transpose(Var x);
/// Column-major flattening into a single row.
Var flatten_cols(Var x);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var x, Index start, Index count);
Var slice_rows(Var x, Index start, Index count);
Var gather_rows(Var x, std::span<const Index> rows);

/// Adds row i of x into row rows[i] of a total_rows x cols zero matrix.
Var scatter_rows(Var x, std::span<const Index> rows, Index total_rows);
/// Constant sparse operator applied on the left: A X.
Var spmm(std::shared_ptr<const SparseMatrix> a, Var x);
/// Places the entries of a vector-shaped node into a rows x cols zero matrix.
/// Repeated positions accumulate.
Var scatter(Var values, std::vector<std::pair<Index, Index>> positions,
            Index rows, Index cols);
/// Multiplies row i of x by s(i); s is rows x 1.
Var row_scale(Var x, Var s);

}  // namespace botinject
