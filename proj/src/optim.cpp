#include "botinject/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace botinject {

Parameter uniform_parameter(std::string name, Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  Matrix v(rows, cols);
  // Row-major fill so the draw order matches the checkpoint layout.
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) v(i, j) = rng.uniform(-bound, bound);
  }
  return Parameter(std::move(name), std::move(v));
}

Parameter zero_parameter(std::string name, Index rows, Index cols) {
  return Parameter(std::move(name), Matrix::Zero(rows, cols));
}

namespace {

void check_finite(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (p->grad.size() != p->value.size()) {
      throw std::logic_error("parameter " + p->name + " has no gradient of matching shape");
    }
    if (!p->grad.allFinite()) {
      throw std::runtime_error("non-finite gradient in parameter " + p->name);
    }
  }
}

}  // namespace

void sgd_step(std::span<Parameter* const> params, double lr) {
  check_finite(params);
  for (Parameter* p : params) {
    p->value -= lr * p->grad;
    p->zero_grad();
  }
}

void GradientDescent::step(std::span<Parameter* const> params) {
  if (momentum_ == 0.0) {
    sgd_step(params, lr_);
    return;
  }
  check_finite(params);
  for (Parameter* p : params) {
    auto [it, inserted] = velocity_.try_emplace(p, Matrix::Zero(p->value.rows(), p->value.cols()));
    Matrix& vel = it->second;
    vel = momentum_ * vel + p->grad;
    p->value -= lr_ * vel;
    p->zero_grad();
  }
}

GradCheckResult grad_check(const std::function<Var(Tape&)>& loss_fn,
                           std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  GradCheckResult result;
  if (params.empty()) return result;

  std::uint64_t base_signature = 0;
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
    base_signature = tape.branch_signature();
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) {
    analytic.push_back(p->grad.size() == p->value.size()
                           ? p->grad
                           : Matrix::Zero(p->value.rows(), p->value.cols()));
  }

  auto eval = [&]() {
    Tape tape;
    const double value = loss_fn(tape).scalar();
    return std::pair{value, tape.branch_signature()};
  };

  Rng rng(options.seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const Index n = p.value.size();
    std::vector<Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (n > options.max_coords_per_param) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(static_cast<std::size_t>(options.max_coords_per_param));
    }
    for (Index c : coords) {
      double& slot = p.value.data()[c];
      const double saved = slot;
      slot = saved + options.eps;
      const auto [up, up_signature] = eval();
      slot = saved - options.eps;
      const auto [down, down_signature] = eval();
      slot = saved;
      if (up_signature != base_signature || down_signature != base_signature) {
        ++result.coords_skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * options.eps);
      const double err =
          std::abs(analytic[k].data()[c] - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coords_checked;
      if (result.worst_param.empty() || err > result.max_error) {
        result.max_error = err;
        result.worst_param = p.name;
      }
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return result;
}

}  // namespace botinject
