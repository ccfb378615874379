#include "eqspike/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace eqspike {

std::atomic<long> Tensor::live_{0};

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor::Tensor(Shape shape, Vec data) : shape_(std::move(shape)), data_(std::move(data)) {
  ++live_;
  if (numel(shape_) != data_.size()) {
    std::ostringstream what;
    what << "Tensor: shape " << shape_str(shape_) << " does not match data length " << data_.size();
    throw std::invalid_argument(what.str());
  }
}

Tensor Tensor::constant(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.data_.setConstant(value);
  return t;
}

Tensor Tensor::from(std::initializer_list<double> values, Shape shape) {
  Vec v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v[i++] = x;
  if (shape.empty()) shape = {v.size()};
  return Tensor(std::move(shape), std::move(v));
}

Eigen::Map<RowMat> Tensor::matrix() {
  Index rows = shape_.empty() ? 1 : shape_[0];
  Index cols = rows == 0 ? 0 : data_.size() / rows;
  return {data_.data(), rows, cols};
}

Eigen::Map<const RowMat> Tensor::matrix() const {
  Index rows = shape_.empty() ? 1 : shape_[0];
  Index cols = rows == 0 ? 0 : data_.size() / rows;
  return {data_.data(), rows, cols};
}

double& Tensor::at(std::initializer_list<Index> idx) {
  if (static_cast<Index>(idx.size()) != rank()) throw std::invalid_argument("Tensor::at: rank mismatch");
  Index off = 0, k = 0;
  for (Index i : idx) {
    off = off * shape_[k] + i;
    ++k;
  }
  return data_[off];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != size()) {
    std::ostringstream what;
    what << "Tensor::reshaped: " << shape_str(shape_) << " -> " << shape_str(shape) << " changes element count";
    throw std::invalid_argument(what.str());
  }
  return Tensor(std::move(shape), data_);
}

}  // namespace eqspike
