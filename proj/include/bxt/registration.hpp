#ifndef BXT_REGISTRATION_HPP
#define BXT_REGISTRATION_HPP

#include <optional>

#include "bxt/transform.hpp"
#include "bxt/volume.hpp"

namespace bxt {

/// Local normalized cross-correlation: mean over (masked) voxels of the
/// squared local correlation coefficient, computed from Gaussian-weighted
/// local means and variances. Range [0,1]; invariant to per-volume global
/// affine intensity maps. Voxels whose local variance falls below a
/// scale-relative epsilon are excluded.
double lncc(const Volume3& a, const Volume3& b, double window_sigma_mm,
            const BinaryMask3* mask = nullptr);

struct AffineRegOptions {
    bool cog_init = true;
    const BinaryMask3* mask = nullptr; // fixed-space cost-function mask
    int pyramid_levels = 3;
    double window_sigma_mm = 40.0;
    int iterations = 60; // per pyramid level
    double padding = 0.0;
    std::optional<AffineTransform> init; // overrides cog_init when set
};

struct AffineRegResult {
    AffineTransform transform; // maps fixed-space mm points to moving-space mm
    double initial_score = 0.0;
    double final_score = 0.0;
    bool warning_no_improvement = false;
};

/// Maximize masked LNCC over the 12 affine parameters by multi-resolution
/// gradient ascent with a backtracking line search. The returned transform
/// never scores below its initialization; when no improvement is found the
/// initialization is returned with the warning flag set.
AffineRegResult register_affine(const Volume3& moving, const Volume3& fixed,
                                const AffineRegOptions& opts);

struct BsplineRegOptions {
    double grid_spacing_mm = 10.0;
    double window_sigma_mm = 40.0;
    const BinaryMask3* mask = nullptr;
    double padding = 0.0;
    double bending_weight = 1e-3;
    int pyramid_levels = 3;
    int iterations = 40; // per pyramid level
    const BsplineTransform* init = nullptr;
};

struct BsplineRegResult {
    BsplineTransform transform;
    double initial_score = 0.0;
    double final_score = 0.0;
    bool warning_no_improvement = false;
};

/// Free-form deformation maximizing masked LNCC minus a bending-energy
/// penalty on the control lattice. Requires grid spacing > 2x voxel spacing.
BsplineRegResult register_bspline(const Volume3& moving, const Volume3& fixed,
                                  const BsplineRegOptions& opts);

inline AffineTransform invert_affine(const AffineTransform& t) { return t.inverse(); }

/// Numerical inverse of a B-spline map on a sampling domain. Checks the
/// Jacobian determinant on the domain lattice first ("non-invertible
/// deformation" on folding), then runs fixed-point iteration until the
/// round-trip error is below `tolerance_voxels` at every lattice point.
DenseDisplacementField invert_bspline(const BsplineTransform& t, const Grid3& domain,
                                      double tolerance_voxels = 0.05, int max_iterations = 200);

} // namespace bxt

#endif
