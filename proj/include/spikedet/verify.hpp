#pragma once

#include "spikedet/blocks.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace spikedet {

/// Run fn(i) for i in [0, n) on up to SPIKEDET_THREADS workers (default:
/// hardware concurrency). Work items must be independent.
void parallel_for(int n, const std::function<void(int)>& fn);
int thread_budget();

/// Input/output decorrelation at zero-mean init.
struct CovCheckResult {
  int positions = 0;
  int violations = 0;       // |r| > 3/sqrt(trials)
  double bound = 0.0;
  double max_abs_corr = 0.0;
  bool pass = false;        // >= 99% of positions within the bound
};

CovCheckResult decorrelation_check(int depth, int trials, std::uint64_t seed,
                               int kernel = 3, bool negative_control = false);

/// Monte Carlo estimate of Var[u]/Var[x] for u = x_t + tau * x_{t-1}.
double membrane_variance_ratio(double tau, int trials, std::uint64_t seed,
                               double input_stddev = 1.0);

/// Output variance after each block of a k-deep chain at init.
struct VarianceCurve {
  std::vector<double> ms;   // membrane-shortcut chain, one entry per depth
  std::vector<double> mds;  // deformed-shortcut chain
};

VarianceCurve variance_accumulation(int k, int trials, std::uint64_t seed);

struct IsometryEstimate {
  double phi = 0.0;     // tr(J J^T) / dim
  double alpha2 = 0.0;  // tr((J J^T)^2) / dim
  int samples = 0;
  int dim = 0;
};

/// Exact Jacobian (via per-basis-vector backward) of an arbitrary taped map.
IsometryEstimate isometry_phi(const std::function<Var(Tape&, Var)>& f,
                              const Shape& in_shape, int samples, Rng& rng);

/// Scale both path-terminal normalizers so each path carries variance 1/2,
/// matching the unit-output-variance premise of the isometry claim.
void calibrate_unit_variance(MDSBlock1& blk);

IsometryEstimate isometry_phi_mds1(int channels, int hw, int samples,
                                   std::uint64_t seed);

/// Empirical P(spike == d_max) for x ~ N(0, sigma^2), single step.
std::vector<double> saturation_curve(const std::vector<double>& sigmas, int d_max,
                                     int trials, std::uint64_t seed);

/// Gaussian-tail oracle: P(x >= d_max - 0.5) for x ~ N(0, sigma^2).
double saturation_tail_prob(double sigma, int d_max);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerificationReport {
  std::vector<CheckResult> checks;
  bool all_pass() const;
  std::string to_json() const;
};

/// The default proposition suite. `negative_control` flips the weight init
/// of the decorrelation check so it must fail.
VerificationReport run_verification(std::uint64_t seed, bool negative_control = false);

}  // namespace spikedet
