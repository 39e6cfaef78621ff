#pragma once

#include "offgrid/core.hpp"
#include "offgrid/io.hpp"
#include "offgrid/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace offgrid {

/// eta(xhat, x) = 1/2 sum |xhat_n - x_n|^2
inline double eta(const ComplexImage& xhat, const ComplexImage& x)
{
  if (!(xhat.grid() == x.grid())) {
    throw std::invalid_argument("eta: grid mismatch");
  }
  const CVector diff = kernels::axpby(1.0, xhat.data(), -1.0, x.data());
  return 0.5 * kernels::dot_re(diff, diff);
}

inline double max_magnitude(const ComplexImage& x) { return kernels::max_abs(x.data()); }

/// 10 log10(peak^2 / MSE) with MSE = ||xhat - x||^2 / N over complex
/// magnitudes. peak defaults to max |x_n|. Identical images give +infinity.
inline double psnr(const ComplexImage& xhat, const ComplexImage& x, std::optional<double> peak = std::nullopt)
{
  const double pk = peak.value_or(max_magnitude(x));
  if (!(pk > 0.0)) {
    throw std::invalid_argument("psnr: peak must be positive");
  }
  const double mse = 2.0 * eta(xhat, x) / static_cast<double>(x.size());
  if (mse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 10.0 * std::log10(pk * pk / mse);
}

/// 8-bit binary PGM of |x|, mapping [0, peak] linearly onto [0, 255].
inline std::string pgm_bytes(const ComplexImage& x, std::optional<double> peak = std::nullopt)
{
  const double pk = peak.value_or(max_magnitude(x));
  const int w = x.grid().cols();
  const int h = x.grid().rows();
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (Eigen::Index n = 0; n < x.size(); ++n) {
    const double v = pk > 0.0 ? std::abs(x[n]) / pk : 0.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)))));
  }
  return out;
}

inline void save_pgm(const std::filesystem::path& path, const ComplexImage& x, std::optional<double> peak = std::nullopt)
{
  detail::write_all(path, pgm_bytes(x, peak));
}

}  // namespace offgrid
