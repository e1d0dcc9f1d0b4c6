#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikedet {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};
struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape of a 4D activation tensor. The leading axis is time-major: for a
/// batch of B samples with T time steps each it holds n = T*B slices, sample
/// b occupying slices [b*T, (b+1)*T).
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  std::int64_t slice_numel() const {
    return static_cast<std::int64_t>(c) * h * w;
  }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const;
};

/// Dense row-major tensor of 64-bit reals.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(static_cast<size_t>(s.numel()), 0.0) {}
  Tensor(Shape s, double fill)
      : shape(s), data(static_cast<size_t>(s.numel()), fill) {}

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, double v) { return Tensor(s, v); }

  double& at(int n, int c, int y, int x) {
    return data[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape.c + c) * shape.h + y) * shape.w + x)];
  }
  double at(int n, int c, int y, int x) const {
    return data[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape.c + c) * shape.h + y) * shape.w + x)];
  }

  std::int64_t numel() const { return shape.numel(); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
  void require_finite(const char* what) const;

  Shape shape;
  std::vector<double> data;
};

/// Integer-valued spike tensor; every entry lies in [0, d_max].
struct SpikeTensor {
  Shape shape;
  std::vector<std::int32_t> data;
  int d_max = 1;

  SpikeTensor() = default;
  SpikeTensor(Shape s, int d)
      : shape(s), data(static_cast<size_t>(s.numel()), 0), d_max(d) {}

  std::int32_t& at(int n, int c, int y, int x) {
    return data[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape.c + c) * shape.h + y) * shape.w + x)];
  }
  std::int32_t at(int n, int c, int y, int x) const {
    return data[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape.c + c) * shape.h + y) * shape.w + x)];
  }

  void validate() const;
  Tensor to_real() const;
  std::int64_t spike_sum() const;
};

double tensor_mean(const Tensor& t);
double tensor_variance(const Tensor& t);  // population variance
double max_abs(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace spikedet
