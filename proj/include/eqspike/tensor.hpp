#pragma once

#include <Eigen/Core>

#include <atomic>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace eqspike {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/** Dense n-dimensional array of doubles in row-major order.
 *
 * The universal value carrier for potentials, rates, weights and images.
 * Instances are counted globally (live_count) so tests can assert that the
 * training path retains no per-time-step buffers. */
class Tensor {
 public:
  Tensor() { ++live_; }
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Vec::Zero(numel(shape_))) { ++live_; }
  Tensor(Shape shape, Vec data);
  Tensor(const Tensor& o) : shape_(o.shape_), data_(o.data_) { ++live_; }
  Tensor(Tensor&& o) noexcept : shape_(std::move(o.shape_)), data_(std::move(o.data_)) { ++live_; }
  Tensor& operator=(const Tensor&) = default;
  Tensor& operator=(Tensor&&) = default;
  ~Tensor() { --live_; }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor constant(Shape shape, double value);
  static Tensor from(std::initializer_list<double> values, Shape shape = {});
  static Tensor from_vec(Vec v) { return Tensor({v.size()}, std::move(v)); }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  Index rank() const { return static_cast<Index>(shape_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  Eigen::Map<Vec> flat() { return {data_.data(), data_.size()}; }
  Eigen::Map<const Vec> flat() const { return {data_.data(), data_.size()}; }

  /** Row-major 2-D view with the leading dimension as rows (rank >= 1). */
  Eigen::Map<RowMat> matrix();
  Eigen::Map<const RowMat> matrix() const;

  double& operator[](Index i) { return data_[i]; }
  double operator[](Index i) const { return data_[i]; }
  double& at(std::initializer_list<Index> idx);

  Tensor reshaped(Shape shape) const;
  bool all_finite() const { return data_.allFinite(); }

  static long live_count() { return live_.load(); }

 private:
  Shape shape_;
  Vec data_;
  static std::atomic<long> live_;
};

bool same_shape(const Shape& a, const Shape& b);

}  // namespace eqspike
