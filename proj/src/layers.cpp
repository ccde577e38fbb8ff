#include "botinject/layers.hpp"

#include <stdexcept>

namespace botinject {

Linear::Linear(const std::string& name, Index in, Index out, Rng& rng)
    : weight(uniform_parameter(name + ".weight", in, out, in, rng)),
      bias(uniform_parameter(name + ".bias", 1, out, in, rng)) {}

Var Linear::operator()(Tape& tape, Var x, bool trainable) {
  return affine(x, bind(tape, weight, trainable), bind(tape, bias, trainable));
}

Matrix Linear::apply(const Matrix& x) const {
  Matrix y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

void Linear::save(Checkpoint& ckpt) const {
  ckpt.add(weight);
  ckpt.add(bias);
}

Linear Linear::load(const Checkpoint& ckpt, const std::string& name) {
  Linear l;
  l.weight = Parameter(name + ".weight", ckpt.require(name + ".weight"));
  l.bias = Parameter(name + ".bias", ckpt.require(name + ".bias"));
  if (l.bias.value.rows() != 1 || l.bias.value.cols() != l.weight.value.cols()) {
    throw std::runtime_error("checkpoint: bias shape does not match " + name + ".weight");
  }
  return l;
}

Mlp::Mlp(const std::string& name, std::vector<Index> widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
  }
}

Var Mlp::operator()(Tape& tape, Var x, bool trainable) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](tape, x, trainable);
    if (i + 1 < layers.size()) x = leaky_relu(x, kLeakySlope);
  }
  return x;
}

Matrix Mlp::apply(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].apply(h);
    if (i + 1 < layers.size()) h = leaky_relu(h);
  }
  return h;
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (Linear& l : layers) l.collect(out);
}

void Mlp::save(Checkpoint& ckpt) const {
  for (const Linear& l : layers) l.save(ckpt);
}

Mlp Mlp::load(const Checkpoint& ckpt, const std::string& name) {
  Mlp m;
  for (std::size_t i = 0; ckpt.find(name + "." + std::to_string(i) + ".weight") != nullptr; ++i) {
    m.layers.push_back(Linear::load(ckpt, name + "." + std::to_string(i)));
  }
  if (m.layers.empty()) throw std::runtime_error("checkpoint: no layers for " + name);
  return m;
}

}  // namespace botinject
