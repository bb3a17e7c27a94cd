#pragma once

// Plain serial versions of the parallel kernels. They follow the same
// arithmetic as the optimized code, without threading, sparsity or spatial
// indexing, and are used by tests and benchmarks as ground truth.

#include <span>
#include <vector>

#include "kprefine/detect.hpp"
#include "kprefine/gmm.hpp"
#include "kprefine/kde.hpp"
#include "kprefine/warp.hpp"

namespace kprefine::reference {

ImageBuffer warp_image_serial(const ImageBuffer& img, const AffineTransform& t);

ResponseMap compute_response_serial(const ImageBuffer& img, const DetectorConfig& cfg);

/// Every point against every pixel, with the same 5h truncation.
DensityGrid evaluate_grid_dense(std::span<const Point2> points, const KdeConfig& cfg, ImageSize dims);

/// Dense row-major K x N responsibilities (k * N + i).
std::vector<double> e_step_dense(std::span<const Point2> points, std::span<const MixtureComponent> components,
                                 Weighting weighting);

/// M-step from a dense K x N matrix. Components with no mass are dropped.
std::vector<MixtureComponent> m_step_dense(std::span<const Point2> points, std::span<const double> gamma,
                                           std::size_t components, const GmmConfig& cfg);

}  // namespace kprefine::reference
