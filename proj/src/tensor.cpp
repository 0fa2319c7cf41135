#include "glean/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "glean/errors.hpp"

namespace glean {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
  }
}

int Tensor::dim(int i) const {
  if (i < 0 || i >= rank()) throw ShapeError("dimension index " + std::to_string(i) + " out of range for " + shape_str(shape_));
  return shape_[i];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor Tensor::item(int index) const {
  if (rank() != 4 || index < 0 || index >= shape_[0]) throw ShapeError("bad batch item index");
  const std::size_t per = numel() / shape_[0];
  Tensor out({1, shape_[1], shape_[2], shape_[3]});
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(per * index), per, out.data_.begin());
  return out;
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) throw InvalidArgument("cannot stack an empty list");
  Shape s = items[0].shape();
  if (s.size() != 4) throw ShapeError("stack expects rank-4 tensors");
  int total = 0;
  for (const auto& t : items) {
    if (t.rank() != 4 || t.c() != s[1] || t.h() != s[2] || t.w() != s[3]) {
      throw ShapeError("stack shape mismatch: " + shape_str(t.shape()) + " vs " + shape_str(s));
    }
    total += t.n();
  }
  s[0] = total;
  Tensor out(s);
  auto it = out.data_.begin();
  for (const auto& t : items) it = std::copy(t.data_.begin(), t.data_.end(), it);
  return out;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff shape mismatch");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("mean_abs_diff shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return a.numel() ? s / static_cast<double>(a.numel()) : 0.0;
}

}  // namespace glean
