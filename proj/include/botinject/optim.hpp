#pragma once

#include "botinject/random.hpp"
#include "botinject/tape.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>

namespace botinject {

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Parameter uniform_parameter(std::string name, Index rows, Index cols, Index fan_in, Rng& rng);
Parameter zero_parameter(std::string name, Index rows, Index cols);

/// p <- p - lr * grad, then every grad is zeroed. A non-finite gradient
/// anywhere aborts the whole step before any value is touched and the
/// exception message names the parameter.
void sgd_step(std::span<Parameter* const> params, double lr);

/// Gradient descent with optional heavy-ball momentum (off when momentum == 0).
class GradientDescent {
 public:
  explicit GradientDescent(double lr, double momentum = 0.0) : lr_(lr), momentum_(momentum) {}

  void step(std::span<Parameter* const> params);
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

 private:
  double lr_;
  double momentum_;
  std::unordered_map<const Parameter*, Matrix> velocity_;
};

struct GradCheckOptions {
  double eps = 1e-3;
  /// Coordinates sampled per parameter; parameters at or below this size are
  /// checked exhaustively.
  Index max_coords_per_param = 48;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_error = 0.0;
  std::string worst_param;
  Index coords_checked = 0;
  Index coords_skipped = 0;  ///< probes that crossed a kink of a piecewise op
};

/// Compares tape gradients with central differences. The error of one
/// coordinate is |analytic - numeric| / max(1, |numeric|). A coordinate whose
/// +-eps probe changes the branch signature of the tape is skipped.
GradCheckResult grad_check(const std::function<Var(Tape&)>& loss_fn,
                           std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace botinject
