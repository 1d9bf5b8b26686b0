#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fcm/autodiff.hpp"
#include "fcm/tensor.hpp"

namespace fcm {

using Rng = std::mt19937_64;

struct Parameter {
  std::string name;
  Tensor value;
  // Frozen parameters are excluded from regularization and updates.
  bool trainable = true;
};

// Named trainable tensors in declaration order. The order is the canonical
// order for checkpoints, optimizer state and gradient reductions.
class ParamStore {
 public:
  Tensor& add(std::string name, Tensor init, bool trainable = true);
  // Sets the flag on every parameter whose name starts with prefix.
  void set_trainable(std::string_view prefix, bool trainable);
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;
  std::size_t trainable_scalar_count() const noexcept;
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameters registered as leaves on one tape.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ParamStore& store);

  ad::Var operator[](std::string_view name) const;
  ad::Var at(std::size_t i) const { return vars_[i]; }
  std::size_t size() const noexcept { return vars_.size(); }
  const ParamStore& store() const noexcept { return *store_; }

  // Gradient per parameter, in store order.
  std::vector<Tensor> gradients(const ad::GradientMap& grads) const;

 private:
  const ParamStore* store_;
  std::vector<ad::Var> vars_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);
Tensor normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace fcm
