#pragma once

#include "botinject/checkpoint.hpp"
#include "botinject/optim.hpp"
#include "botinject/random.hpp"
#include "botinject/tape.hpp"

#include <string>
#include <vector>

namespace botinject {

/// Slope of the leaky-ReLU used wherever a network applies an activation.
inline constexpr double kLeakySlope = 0.01;

/// Binds a parameter either as a trainable leaf or as a frozen constant.
inline Var bind(Tape& tape, Parameter& p, bool trainable) {
  return trainable ? tape.param(p) : tape.constant(p.value);
}

/// y = x W + b with W: in x out.
struct Linear {
  Linear() = default;
  Linear(const std::string& name, Index in, Index out, Rng& rng);

  Parameter weight;
  Parameter bias;

  Index in_features() const { return weight.value.rows(); }
  Index out_features() const { return weight.value.cols(); }

  Var operator()(Tape& tape, Var x, bool trainable = true);
  Matrix apply(const Matrix& x) const;

  void collect(std::vector<Parameter*>& out);
  void save(Checkpoint& ckpt) const;
  /// Reads `<name>.weight` and `<name>.bias`.
  static Linear load(const Checkpoint& ckpt, const std::string& name);
};

/// Fully connected stack with leaky-ReLU between layers and a linear output.
struct Mlp {
  Mlp() = default;
  Mlp(const std::string& name, std::vector<Index> widths, Rng& rng);

  std::vector<Linear> layers;

  Var operator()(Tape& tape, Var x, bool trainable = true);
  Matrix apply(const Matrix& x) const;

  void collect(std::vector<Parameter*>& out);
  void save(Checkpoint& ckpt) const;
  /// Reads `<name>.0`, `<name>.1`, ... until a layer is missing.
  static Mlp load(const Checkpoint& ckpt, const std::string& name);
};

inline Matrix leaky_relu(const Matrix& x) {
  return x.unaryExpr([](double v) { return v >= 0.0 ? v : kLeakySlope * v; });
}

}  // namespace botinject
