#include "idmask/projection.hpp"

#include <algorithm>
#include <cmath>

#include "idmask/error.hpp"
#include "idmask/kernels.hpp"

namespace idmask {

std::string_view norm_name(NormType n) noexcept { return n == NormType::kLinf ? "linf" : "l2"; }

NormType parse_norm(std::string_view s) {
  if (s == "linf" || s == "Linf" || s == "inf") return NormType::kLinf;
  if (s == "l2" || s == "L2") return NormType::kL2;
  throw InvalidArgument("unknown norm type '" + std::string(s) + "' (expected linf or l2)");
}

double norm_of(std::span<const double> values, NormType norm) {
  if (norm == NormType::kLinf) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
  return std::sqrt(kernels::dot(values, values));
}

double perturbation_norm(const Image& x, const Image& reference, NormType norm) {
  return norm_of(difference(x, reference).values(), norm);
}

Image project(const PixelArray& x, const Image& xr, NormType norm, double epsilon) {
  require_same_shape(x.shape(), xr.shape(), "project");
  if (!std::isfinite(epsilon) || epsilon < 0.0) {
    throw InvalidArgument("project: epsilon must be finite and nonnegative");
  }
  const std::size_t n = x.size();
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double v : out) {
    if (!std::isfinite(v)) throw InvalidArgument("project: non-finite input");
  }

  if (norm == NormType::kLinf) {
    for (std::size_t i = 0; i < n; ++i) {
      const double d = out[i] - xr[i];
      if (d > epsilon) {
        out[i] = xr[i] + epsilon;
      } else if (d < -epsilon) {
        out[i] = xr[i] - epsilon;
      }
    }
  } else {
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = out[i] - xr[i];
    const double len = std::sqrt(kernels::dot(d, d));
    // Relative slack keeps an already-rescaled point from being rescaled
    // again by rounding noise.
    if (len > epsilon * (1.0 + 1e-12)) {
      const double s = epsilon / len;
      for (std::size_t i = 0; i < n; ++i) out[i] = xr[i] + d[i] * s;
    }
  }
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return Image(x.shape(), std::move(out));
}

Image project(const Image& x, const Image& xr, NormType norm, double epsilon) {
  return project(PixelArray(x.shape(), std::vector<double>(x.pixels().begin(), x.pixels().end())),
                 xr, norm, epsilon);
}

PixelArray normalize_direction(const PixelArray& g, NormType norm) {
  for (double v : g.values()) {
    if (!std::isfinite(v)) throw InvalidArgument("normalize_direction: non-finite gradient");
  }
  std::vector<double> out(g.size());
  if (norm == NormType::kLinf) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    }
  } else {
    const double len = std::sqrt(kernels::dot(g.values(), g.values()));
    if (len > 0.0) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = g[i] / len;
    }
  }
  return PixelArray(g.shape(), std::move(out));
}

Image descend_and_project(const Image& x, const PixelArray& grad, const Image& xr, NormType norm,
                          double alpha, double epsilon) {
  require_same_shape(x.shape(), grad.shape(), "descend_and_project");
  const PixelArray dir = normalize_direction(grad, norm);
  std::vector<double> moved(x.size());
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = x[i] - alpha * dir[i];
  return project(PixelArray(x.shape(), std::move(moved)), xr, norm, epsilon);
}

}  // namespace idmask
