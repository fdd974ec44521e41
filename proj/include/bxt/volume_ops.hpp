#ifndef BXT_VOLUME_OPS_HPP
#define BXT_VOLUME_OPS_HPP

#include <functional>
#include <optional>

#include "bxt/volume.hpp"

namespace bxt {

/// Forward-difference spatial gradient, scaled by 1/spacing per axis.
/// The last slice along each axis gets a zero component (replicate boundary),
/// which makes divergence() below its exact negative adjoint.
VectorField3 gradient(const Volume3& v);

/// Negative adjoint of gradient(): <gradient(u), p> == -<u, divergence(p)>
/// holds to rounding for all u, p on a shared grid.
Volume3 divergence(const VectorField3& f);

enum class Interpolation { Linear, Nearest };

/// Sample a volume at a world-space (mm) point. Points outside the voxel
/// lattice return `padding`.
double sample(const Volume3& v, const std::array<double, 3>& world_mm,
              Interpolation interp, double padding);

/// Resample a volume onto a target grid. `map_target_to_source` maps target
/// world coordinates (mm) into source world coordinates (mm).
Volume3 resample(const Volume3& v, const Grid3& onto,
                 const std::function<std::array<double, 3>(const std::array<double, 3>&)>&
                     map_target_to_source,
                 double padding = 0.0, Interpolation interp = Interpolation::Linear);

BinaryMask3 resample_mask(const BinaryMask3& m, const Grid3& onto,
                          const std::function<std::array<double, 3>(const std::array<double, 3>&)>&
                              map_target_to_source);

/// Linear-interpolated order statistic, p in [0,100]. With a mask the
/// statistic is taken over the selected voxels only.
/// Throws Error("empty percentile domain") when nothing is selected.
double percentile(const Volume3& v, double p,
                  const BinaryMask3* within = nullptr);

/// Same convention applied to a plain sample vector (sorted internally).
double percentile_of(std::vector<double> values, double p);

} // namespace bxt

#endif
