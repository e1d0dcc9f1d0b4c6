#include "spikedet/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace spikedet {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

void Tensor::require_finite(const char* what) const {
  if (!all_finite()) throw NumericError(std::string(what) + ": non-finite values");
}

void SpikeTensor::validate() const {
  if (d_max < 1) throw ShapeError("SpikeTensor: d_max must be >= 1");
  if (static_cast<std::int64_t>(data.size()) != shape.numel())
    throw ShapeError("SpikeTensor: data length does not match shape " + shape.str());
  for (std::int32_t v : data)
    if (v < 0 || v > d_max)
      throw ShapeError("SpikeTensor: entry " + std::to_string(v) + " outside [0," +
                       std::to_string(d_max) + "]");
}

Tensor SpikeTensor::to_real() const {
  Tensor out(shape);
  for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<double>(data[i]);
  return out;
}

std::int64_t SpikeTensor::spike_sum() const {
  std::int64_t s = 0;
  for (std::int32_t v : data) s += v;
  return s;
}

double tensor_mean(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v;
  return t.data.empty() ? 0.0 : s / static_cast<double>(t.data.size());
}

double tensor_variance(const Tensor& t) {
  if (t.data.empty()) return 0.0;
  double m = tensor_mean(t);
  double s = 0.0;
  for (double v : t.data) s += (v - m) * (v - m);
  return s / static_cast<double>(t.data.size());
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    throw ShapeError("max_abs_diff: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace spikedet
