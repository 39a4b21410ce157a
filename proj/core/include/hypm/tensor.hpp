#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace hypm {

/// Dense row-major tensor of doubles. The single value carrier for images,
/// activations, parameters and gradients. All numeric work in the library is
/// done in 64-bit floats.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);
  Tensor(std::vector<std::size_t> s, double fill);
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& t);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  /// Scalar access; requires numel() == 1.
  double item() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

}  // namespace hypm
