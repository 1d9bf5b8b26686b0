#include "fcm/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "fcm/errors.hpp"

namespace fcm {

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (numel(shape_) != values_.size()) {
    throw DimensionError("tensor shape " + to_string(shape_) + " does not hold " + std::to_string(values_.size()) +
                         " values");
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(v));
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{1, n}, std::move(values));
}

std::size_t Tensor::rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const noexcept {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  return 1;
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

Mask::Mask(std::size_t rows, std::size_t cols, bool fill) : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

Mask::Mask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits)
    : rows_(rows), cols_(cols), bits_(std::move(bits)) {
  if (bits_.size() != rows_ * cols_) throw DimensionError("mask size does not match its shape");
}

Mask Mask::broadcast_keys(std::size_t rows, std::span<const std::uint8_t> key_mask) {
  Mask m(rows, key_mask.size(), false);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(key_mask.begin(), key_mask.end(), m.bits_.begin() + static_cast<std::ptrdiff_t>(r * key_mask.size()));
  }
  return m;
}

std::size_t Mask::count_row(std::size_t r) const {
  return static_cast<std::size_t>(
      std::count_if(bits_.begin() + static_cast<std::ptrdiff_t>(r * cols_),
                    bits_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols_), [](std::uint8_t b) { return b != 0; }));
}

}  // namespace fcm
