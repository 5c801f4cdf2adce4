#include "dlperf/tensor.hpp"

#include <sstream>

namespace dlperf {

int64_t shape_product(const std::vector<int64_t>& shape) {
  int64_t p = 1;
  for (int64_t d : shape) p *= d;
  return p;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  for (int64_t d : shape_) {
    if (d < 1) throw ShapeError("tensor dimension must be >= 1, got " + shape_to_string(shape_));
  }
  data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (int64_t d : shape_) {
    if (d < 1) throw ShapeError("tensor dimension must be >= 1, got " + shape_to_string(shape_));
  }
  if (shape_product(shape_) != static_cast<int64_t>(data_.size())) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = value;
  return t;
}

size_t Tensor::offset(std::initializer_list<int64_t> idx) const {
  if (idx.size() != shape_.size()) {
    throw ShapeError("index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                     std::to_string(shape_.size()));
  }
  size_t off = 0;
  size_t i = 0;
  for (int64_t v : idx) {
    off = off * static_cast<size_t>(shape_[i]) + static_cast<size_t>(v);
    ++i;
  }
  return off;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

}  // namespace dlperf
