#ifndef BXT_METRICS_HPP
#define BXT_METRICS_HPP

#include "bxt/volume.hpp"

namespace bxt {

struct SegmentationPair {
    const BinaryMask3* automatic;
    const BinaryMask3* truth;
};

/// 2|X n Y| / (|X| + |Y|). Error when both masks are empty.
double dice(const SegmentationPair& pair);

struct SurfaceDistanceReport {
    double average_mm = 0.0;
    double max_mm = 0.0;
    double p95_mm = 0.0;
    std::size_t surface_a = 0; // boundary voxel counts
    std::size_t surface_b = 0;
};

/// Symmetric surface distances between boundary voxel centers (a true voxel
/// with a false 6-neighbor or on the grid border). The average weights the
/// two directed sums by 1/(|S_A|+|S_B|); max and the 95th percentile are
/// taken over the pooled directed distances.
SurfaceDistanceReport surface_distances(const SegmentationPair& pair);

/// (|X n Y| / |Y|, (|V| - |X u Y|) / (|V| - |Y|)).
std::pair<double, double> sensitivity_specificity(const SegmentationPair& pair);

/// Boundary voxels under the 6-connectivity complement test.
BinaryMask3 surface_voxels(const BinaryMask3& m);

} // namespace bxt

#endif
