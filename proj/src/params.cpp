#include "fcm/params.hpp"

#include <cmath>
#include <stdexcept>

namespace fcm {

Tensor& ParamStore::add(std::string name, Tensor init, bool trainable) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(init), trainable});
  return params_.back().value;
}

void ParamStore::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& p : params_) {
    if (std::string_view(p.name).starts_with(prefix)) p.trainable = trainable;
  }
}

bool ParamStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Tensor& ParamStore::at(std::string_view name) { return params_[index_of(name)].value; }
const Tensor& ParamStore::at(std::string_view name) const { return params_[index_of(name)].value; }

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t ParamStore::trainable_scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.trainable ? p.value.size() : 0;
  return n;
}

BoundParams::BoundParams(ad::Tape& tape, const ParamStore& store) : store_(&store) {
  vars_.reserve(store.size());
  for (const auto& p : store) vars_.push_back(tape.leaf(p.value));
}

ad::Var BoundParams::operator[](std::string_view name) const { return vars_[store_->index_of(name)]; }

std::vector<Tensor> BoundParams::gradients(const ad::GradientMap& grads) const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (const auto& v : vars_) out.push_back(grads.at(v.id));
  return out;
}

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(Shape{rows, cols});
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(Shape{rows, cols});
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace fcm
