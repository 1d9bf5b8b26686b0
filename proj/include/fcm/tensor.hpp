#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fcm {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

// Dense row-major f64 array. Rank 0..2 is what the engine uses; a rank-1
// tensor of length n behaves as a 1 x n row wherever a matrix is expected.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{1, 1}, std::vector<double>{v}); }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  void fill(double v);
  bool same_shape(const Tensor& other) const noexcept { return rows() == other.rows() && cols() == other.cols(); }
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

// Boolean matrix used for attention keys and pooling rows.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool fill = true);
  Mask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits);

  // Every row equals key_mask; the usual key-padding mask for attention.
  static Mask broadcast_keys(std::size_t rows, std::span<const std::uint8_t> key_mask);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits_[r * cols_ + c] = v ? 1 : 0; }
  std::size_t count_row(std::size_t r) const;
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace fcm
