#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dagan {

// NCHW extent. Every tensor in the engine is 4-D; scalars are {1,1,1,1}.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

// Dense float32 NCHW tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float v) { return Tensor(Shape{}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float* plane(int n, int c) { return data_.data() + offset(n, c); }
  const float* plane(int n, int c) const { return data_.data() + offset(n, c); }
  float* sample(int n) { return plane(n, 0); }
  const float* sample(int n) const { return plane(n, 0); }

  float& at(int n, int c, int y, int x) {
    return data_[offset(n, c) + static_cast<std::size_t>(y) * shape_.w + x];
  }
  float at(int n, int c, int y, int x) const {
    return data_[offset(n, c) + static_cast<std::size_t>(y) * shape_.w + x];
  }

  float item() const;
  void fill(float v);

 private:
  std::size_t offset(int n, int c) const {
    return (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }

  Shape shape_{0, 0, 0, 0};
  std::vector<float> data_;
};

}  // namespace dagan
