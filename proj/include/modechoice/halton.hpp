#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "modechoice/common.hpp"

namespace modechoice {

inline constexpr int kHaltonPrimes[10] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};

/// Radical inverse of index i in the given base, computed as an exact integer
/// ratio so that e.g. index 3 in base 3 is the double 1.0/9.0 bit-for-bit.
inline double radical_inverse(std::uint64_t i, std::uint64_t base) {
  std::uint64_t reversed = 0;
  std::uint64_t denom = 1;
  while (i > 0) {
    reversed = reversed * base + i % base;
    denom *= base;
    i /= base;
  }
  return static_cast<double>(reversed) / static_cast<double>(denom);
}

/// Halton points of `base` at indices skip+1 ... skip+n; all values strictly
/// inside (0, 1).
inline std::vector<double> halton(int base, int n, int skip = 0) {
  if (base < 2) throw validation_error("halton base must be >= 2");
  if (n < 1) throw validation_error("halton needs n >= 1");
  std::vector<double> out(n);
  for (int j = 0; j < n; ++j)
    out[j] = radical_inverse(static_cast<std::uint64_t>(skip) + 1 + j, static_cast<std::uint64_t>(base));
  return out;
}

/// Inverse standard-normal CDF: Acklam's rational approximation (absolute
/// error below 1.5e-9) polished with one Halley step of erfc.
inline double inv_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw validation_error("inv_normal_cdf requires p in (0,1)");
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // One Halley step against the exact CDF.
  double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

/// Standard-normal quasi-random draws for simulated maximum likelihood:
/// dimension d uses the d-th prime, individual i owns the contiguous block
/// i*n_draws ... (i+1)*n_draws-1 of the skipped sequence.
struct HaltonDraws {
  int n_individuals = 0;
  int n_draws = 0;
  int dims = 0;
  int skip = 0;
  std::vector<int> bases;
  std::vector<double> values;  // [individual][draw][dim]

  double z(int individual, int draw, int dim) const {
    return values[(static_cast<std::size_t>(individual) * n_draws + draw) * dims + dim];
  }
};

inline HaltonDraws normal_draws(int n_individuals, int n_draws, int dims, int skip = 10) {
  if (dims < 1 || dims > 10)
    throw validation_error("normal_draws supports 1..10 dimensions (first 10 primes)");
  if (n_individuals < 1 || n_draws < 1)
    throw validation_error("normal_draws needs positive individuals and draws");
  HaltonDraws hd;
  hd.n_individuals = n_individuals;
  hd.n_draws = n_draws;
  hd.dims = dims;
  hd.skip = skip;
  hd.values.resize(static_cast<std::size_t>(n_individuals) * n_draws * dims);
  const int total = n_individuals * n_draws;
  for (int d = 0; d < dims; ++d) {
    hd.bases.push_back(kHaltonPrimes[d]);
    std::vector<double> seq = halton(kHaltonPrimes[d], total, skip);
    for (int t = 0; t < total; ++t)
      hd.values[static_cast<std::size_t>(t) * dims + d] = inv_normal_cdf(seq[t]);
  }
  return hd;
}

}  // namespace modechoice
