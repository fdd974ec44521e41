#ifndef BXT_DISTANCE_HPP
#define BXT_DISTANCE_HPP

#include "bxt/volume.hpp"

namespace bxt {

/// Exact Euclidean distance (mm) from each voxel center to the nearest true
/// voxel center, honoring anisotropic spacing. Separable lower-envelope
/// algorithm on squared distances.
/// Throws Error("empty reference set") when the mask has no true voxel.
Volume3 distance_transform(const BinaryMask3& m);

} // namespace bxt

#endif
