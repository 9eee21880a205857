#include "dagan/tensor.hpp"

#include <algorithm>

#include "dagan/error.hpp"

namespace dagan {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw ArgumentError("tensor data size " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
  }
}

float Tensor::item() const {
  if (data_.size() != 1) throw ArgumentError("item() on tensor of shape " + shape_.str());
  return data_[0];
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace dagan
