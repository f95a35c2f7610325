#pragma once

#include <string_view>

#include "idmask/image.hpp"

namespace idmask {

enum class NormType { kLinf, kL2 };

std::string_view norm_name(NormType n) noexcept;
NormType parse_norm(std::string_view s);

/// |values|_p for p = inf or 2.
double norm_of(std::span<const double> values, NormType norm);
double perturbation_norm(const Image& x, const Image& reference, NormType norm);

/// Projects onto {x : |x - xr|_norm <= epsilon} and then onto [0, 1]^n.
/// Linf clips each pixel of x - xr to [-eps, eps]; L2 rescales x - xr
/// radially. Points already feasible come back bit-identical, which makes
/// the projection idempotent.
Image project(const PixelArray& x, const Image& xr, NormType norm, double epsilon);
Image project(const Image& x, const Image& xr, NormType norm, double epsilon);

/// sign(g) elementwise for Linf (sign(0) = 0), g / |g|_2 for L2. The zero
/// array maps to itself. Throws InvalidArgument on non-finite input.
PixelArray normalize_direction(const PixelArray& g, NormType norm);

/// project(x - alpha * normalize_direction(grad)).
Image descend_and_project(const Image& x, const PixelArray& grad, const Image& xr, NormType norm,
                          double alpha, double epsilon);

}  // namespace idmask
