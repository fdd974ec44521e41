#ifndef BXT_MORPHOLOGY_HPP
#define BXT_MORPHOLOGY_HPP

#include <vector>

#include "bxt/volume.hpp"

namespace bxt {

/// Morphology uses the 18-neighborhood structuring element (a voxel plus the
/// 18 neighbors sharing a face or an edge), applied `radius` times.
/// Voxels outside the grid are treated as false.
BinaryMask3 dilate(const BinaryMask3& m, int radius);
BinaryMask3 erode(const BinaryMask3& m, int radius);

/// Dilate then erode, radius 1 each.
BinaryMask3 close(const BinaryMask3& m);

struct ConnectedComponents {
    std::vector<int> labels;           // 0 = background, components from 1
    std::vector<std::size_t> sizes;    // sizes[k-1] = voxel count of label k
};

/// Label the true voxels of a mask. Labels are assigned in first-encounter
/// order of a row-major scan, so the result is deterministic.
ConnectedComponents connected_components(const BinaryMask3& m, int connectivity);

/// Gap/hole repair for a brain mask: close the mask, flood the false voxels
/// (18-connectivity) and keep only the components touching the volume
/// boundary as background; everything else becomes brain.
BinaryMask3 refine_brain_mask(const BinaryMask3& m);

BinaryMask3 complement(const BinaryMask3& m);

} // namespace bxt

#endif
