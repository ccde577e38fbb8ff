#include "botinject/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace botinject {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_of(a.value()) + " vs " + shape_of(b.value()));
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw std::invalid_argument("operands live on different tapes");
  return t;
}

}  // namespace

Parameter::Parameter(std::string n, Matrix v)
    : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

void Parameter::zero_grad() { grad.setZero(value.rows(), value.cols()); }

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw std::invalid_argument("scalar() on a " + shape_of(v) + " node");
  }
  return v(0, 0);
}

// ---------------------------------------------------------------------------

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backprop backprop) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backprop));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backprop backprop) {
  bool needs = false;
  for (const Var& in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backprop) : Backprop{},
                        nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id()].value;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id()].requires_grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  check_owned(v);
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    throw std::logic_error("gradient shape " + shape_of(g) + " does not match node " +
                           shape_of(n.value));
  }
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (consumed_) {
    throw std::logic_error("backward called twice on the same recording");
  }
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward needs a 1x1 loss, got " + shape_of(loss.value()));
  }
  consumed_ = true;
  for (Node& n : nodes_) {
    if (n.param != nullptr) n.param->zero_grad();
  }

  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backprop) {
      // The callback may append to other nodes' grads but never to its own.
      n.backprop(*this, n.grad);
    }
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

void Tape::note_branches(const Matrix& x) {
  std::uint64_t h = branch_signature_;
  for (Index i = 0; i < x.size(); ++i) {
    h ^= x.data()[i] >= 0.0 ? 1u : 2u;
    h *= 0x100000001b3ULL;
  }
  branch_signature_ = h;
}

std::vector<Parameter*> Tape::parameters() const {
  std::vector<Parameter*> out;
  out.reserve(param_nodes_.size());
  for (const Node& n : nodes_) {
    if (n.param != nullptr) out.push_back(n.param);
  }
  return out;
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw std::invalid_argument("Var does not belong to this tape");
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_of(a.value()) + " * " +
                                shape_of(b.value()));
  }
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", a, b);
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("sub", a, b);
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("hadamard", a, b);
  return t.record(a.value().cwiseProduct(b.value()), {a, b},
                  [a, b](Tape& tp, const Matrix& g) {
                    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
                    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
                  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  return t.record(a.value() * factor, {a},
                  [a, factor](Tape& tp, const Matrix& g) { tp.accumulate(a, g * factor); });
}

Var add_constant(Var a, double c) {
  Tape& t = tape_of(a);
  return t.record(a.value().array() + c, {a},
                  [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var add_row(Var x, Var bias) {
  Tape& t = tape_of(x, bias);
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw std::invalid_argument("add_row: bias " + shape_of(bias.value()) +
                                " does not fit rows of " + shape_of(x.value()));
  }
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return t.record(std::move(out), {x, bias}, [x, bias](Tape& tp, const Matrix& g) {
    tp.accumulate(x, g);
    if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
  });
}

Var affine(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Var leaky_relu(Var x, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) {
    throw std::invalid_argument("leaky_relu: slope must lie in [0, 1)");
  }
  Tape& t = tape_of(x);
  t.note_branches(x.value());
  Matrix out = x.value().unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
  return t.record(std::move(out), {x}, [x, slope](Tape& tp, const Matrix& g) {
    Matrix d = x.value().unaryExpr([slope](double v) { return v >= 0.0 ? 1.0 : slope; });
    tp.accumulate(x, g.cwiseProduct(d));
  });
}

Var tanh(Var x) {
  Tape& t = tape_of(x);
  Matrix out = x.value().array().tanh().matrix();
  Matrix saved = out;
  return t.record(std::move(out), {x}, [x, saved](Tape& tp, const Matrix& g) {
    Matrix d = (1.0 - saved.array().square()).matrix();
    tp.accumulate(x, g.cwiseProduct(d));
  });
}

Var abs(Var x) {
  Tape& t = tape_of(x);
  t.note_branches(x.value());
  return t.record(x.value().cwiseAbs(), {x}, [x](Tape& tp, const Matrix& g) {
    Matrix d = x.value().unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    tp.accumulate(x, g.cwiseProduct(d));
  });
}

Var reciprocal(Var x) {
  Tape& t = tape_of(x);
  return t.record(x.value().cwiseInverse(), {x}, [x](Tape& tp, const Matrix& g) {
    Matrix d = -x.value().array().square().inverse();
    tp.accumulate(x, g.cwiseProduct(d));
  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return t.record(std::move(out), {x}, [x](Tape& tp, const Matrix& g) {
    tp.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(Var x) {
  if (x.value().size() == 0) throw std::invalid_argument("mean of an empty node");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var squared_norm(Var x) {
  Tape& t = tape_of(x);
  Matrix out(1, 1);
  out(0, 0) = x.value().squaredNorm();
  return t.record(std::move(out), {x}, [x](Tape& tp, const Matrix& g) {
    tp.accumulate(x, 2.0 * g(0, 0) * x.value());
  });
}

namespace {

Matrix stable_softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

Var softmax_rows(Var logits) {
  Tape& t = tape_of(logits);
  Matrix p = stable_softmax(logits.value());
  Matrix saved = p;
  return t.record(std::move(p), {logits}, [logits, saved](Tape& tp, const Matrix& g) {
    Vector dot = g.cwiseProduct(saved).rowwise().sum();
    Matrix d = saved.cwiseProduct(g.colwise() - dot);
    tp.accumulate(logits, d);
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = tape_of(logits);
  const Matrix& z = logits.value();
  if (z.rows() == 0) throw std::invalid_argument("softmax_cross_entropy: empty batch");
  if (static_cast<Index>(labels.size()) != z.rows()) {
    throw std::invalid_argument("softmax_cross_entropy: label count does not match rows");
  }
  if (!z.allFinite()) throw std::invalid_argument("softmax_cross_entropy: non-finite logits");

  constexpr double kLo = 1e-12;
  constexpr double kHi = 1.0 - 1e-12;
  Matrix p = stable_softmax(z);
  const double n = static_cast<double>(z.rows());
  double loss = 0.0;
  std::vector<bool> clamped(labels.size(), false);
  for (Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= z.cols()) throw std::invalid_argument("softmax_cross_entropy: bad label");
    const double py = p(i, y);
    clamped[static_cast<std::size_t>(i)] = py < kLo || py > kHi;
    loss -= std::log(std::clamp(py, kLo, kHi));
  }
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  std::vector<int> ys(labels.begin(), labels.end());
  return t.record(std::move(out), {logits},
                  [logits, p, ys, clamped, n](Tape& tp, const Matrix& g) {
                    Matrix d = p;
                    for (Index i = 0; i < d.rows(); ++i) {
                      if (clamped[static_cast<std::size_t>(i)]) {
                        d.row(i).setZero();
                      } else {
                        d(i, ys[static_cast<std::size_t>(i)]) -= 1.0;
                      }
                    }
                    tp.accumulate(logits, d * (g(0, 0) / n));
                  });
}

Var transpose(Var x) {
  Tape& t = tape_of(x);
  return t.record(x.value().transpose(), {x},
                  [x](Tape& tp, const Matrix& g) { tp.accumulate(x, g.transpose()); });
}

Var flatten_cols(Var x) {
  Tape& t = tape_of(x);
  const Index r = x.rows();
  const Index c = x.cols();
  Matrix out = Eigen::Map<const Matrix>(x.value().data(), 1, r * c);
  return t.record(std::move(out), {x}, [x, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate(x, Eigen::Map<const Matrix>(g.data(), r, c));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: nothing to concatenate");
  Tape& t = tape_of(parts[0]);
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat_cols: mixed tapes");
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [saved](Tape& tp, const Matrix& g) {
    Index off = 0;
    for (const Var& p : saved) {
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: nothing to concatenate");
  Tape& t = tape_of(parts[0]);
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat_rows: mixed tapes");
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [saved](Tape& tp, const Matrix& g) {
    Index off = 0;
    for (const Var& p : saved) {
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

Var slice_cols(Var x, Index start, Index count) {
  Tape& t = tape_of(x);
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  return t.record(x.value().middleCols(start, count), {x},
                  [x, start, count](Tape& tp, const Matrix& g) {
                    Matrix d = Matrix::Zero(x.rows(), x.cols());
                    d.middleCols(start, count) = g;
                    tp.accumulate(x, d);
                  });
}

Var slice_rows(Var x, Index start, Index count) {
  Tape& t = tape_of(x);
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw std::invalid_argument("slice_rows: range out of bounds");
  }
  return t.record(x.value().middleRows(start, count), {x},
                  [x, start, count](Tape& tp, const Matrix& g) {
                    Matrix d = Matrix::Zero(x.rows(), x.cols());
                    d.middleRows(start, count) = g;
                    tp.accumulate(x, d);
                  });
}

Var gather_rows(Var x, std::span<const Index> rows) {
  Tape& t = tape_of(x);
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) {
      throw std::invalid_argument("gather_rows: row index out of bounds");
    }
    out.row(static_cast<Index>(i)) = x.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {x}, [x, idx](Tape& tp, const Matrix& g) {
    Matrix d = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Index>(i));
    tp.accumulate(x, d);
  });
}

Var scatter_rows(Var x, std::span<const Index> rows, Index total_rows) {
  Tape& t = tape_of(x);
  if (static_cast<Index>(rows.size()) != x.rows()) {
    throw std::invalid_argument("scatter_rows: one target row per input row expected");
  }
  Matrix out = Matrix::Zero(total_rows, x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= total_rows) {
      throw std::invalid_argument("scatter_rows: row index out of bounds");
    }
    out.row(rows[i]) += x.value().row(static_cast<Index>(i));
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {x}, [x, idx](Tape& tp, const Matrix& g) {
    Matrix d(static_cast<Index>(idx.size()), g.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) d.row(static_cast<Index>(i)) = g.row(idx[i]);
    tp.accumulate(x, d);
  });
}

Var spmm(std::shared_ptr<const SparseMatrix> a, Var x) {
  Tape& t = tape_of(x);
  if (!a || a->cols() != x.rows()) {
    throw std::invalid_argument("spmm: operator does not fit " + shape_of(x.value()));
  }
  Matrix out = (*a) * x.value();
  return t.record(std::move(out), {x}, [a, x](Tape& tp, const Matrix& g) {
    tp.accumulate(x, a->transpose() * g);
  });
}

Var scatter(Var values, std::vector<std::pair<Index, Index>> positions, Index rows,
            Index cols) {
  Tape& t = tape_of(values);
  const Matrix& v = values.value();
  if (v.size() != static_cast<Index>(positions.size()) || (v.rows() != 1 && v.cols() != 1)) {
    throw std::invalid_argument("scatter: need one position per vector entry");
  }
  Matrix out = Matrix::Zero(rows, cols);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto [r, c] = positions[i];
    if (r < 0 || r >= rows || c < 0 || c >= cols) {
      throw std::invalid_argument("scatter: position out of bounds");
    }
    out(r, c) += v(static_cast<Index>(i));
  }
  const Index vr = v.rows();
  const Index vc = v.cols();
  return t.record(std::move(out), {values},
                  [values, positions = std::move(positions), vr, vc](Tape& tp, const Matrix& g) {
                    Matrix d(vr, vc);
                    for (std::size_t i = 0; i < positions.size(); ++i) {
                      d(static_cast<Index>(i)) = g(positions[i].first, positions[i].second);
                    }
                    tp.accumulate(values, d);
                  });
}

Var row_scale(Var x, Var s) {
  Tape& t = tape_of(x, s);
  if (s.cols() != 1 || s.rows() != x.rows()) {
    throw std::invalid_argument("row_scale: scale must be a rows x 1 column");
  }
  Matrix out = s.value().col(0).asDiagonal() * x.value();
  return t.record(std::move(out), {x, s}, [x, s](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(x)) tp.accumulate(x, s.value().col(0).asDiagonal() * g);
    if (tp.requires_grad(s)) tp.accumulate(s, g.cwiseProduct(x.value()).rowwise().sum());
  });
}

}  // namespace botinject
