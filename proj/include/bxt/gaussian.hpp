#ifndef BXT_GAUSSIAN_HPP
#define BXT_GAUSSIAN_HPP

#include "bxt/volume.hpp"

namespace bxt {

/// Separable Gaussian smoothing, sigma in mm (converted per axis by the
/// voxel spacing). FIR kernel truncated at 3 sigma with unit sum; borders use
/// zero padding, so pair this with smooth_normalizer() where window weights
/// must sum to one near the edges.
Volume3 smooth_gaussian(const Volume3& v, double sigma_mm);

/// Smoothing of the all-ones volume: per-voxel kernel mass inside the grid.
Volume3 smooth_normalizer(const Grid3& g, double sigma_mm);

/// Downsample by 2 along each axis (Gaussian pre-smooth + subsample),
/// keeping the world-space positions of the kept voxels.
Volume3 downsample2(const Volume3& v);

} // namespace bxt

#endif
