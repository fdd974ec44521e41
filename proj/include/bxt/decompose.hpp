#ifndef BXT_DECOMPOSE_HPP
#define BXT_DECOMPOSE_HPP

#include <utility>
#include <vector>

#include "bxt/config.hpp"
#include "bxt/pca.hpp"
#include "bxt/volume.hpp"

namespace bxt {

/// Spatially varying L1 weight with the three-level structure: infinity on
/// the eroded brain mask (forces S = 0 there), lambda on the boundary band
/// (dilated minus eroded), zero outside the dilated mask. The provenance
/// masks are retained for audit.
struct WeightMap {
    Volume3 values; // per voxel: inf | lambda | 0
    double lambda = 0.0;
    BinaryMask3 eroded;
    BinaryMask3 dilated;
};

/// eroded = erode(mask, 2), dilated = dilate(mask, 1) by default.
/// Throws Error("atlas mask too thin") when the eroded mask is empty.
WeightMap build_weight_map(const BinaryMask3& atlas_mask, double lambda,
                           int erosion_radius = 2, int dilation_radius = 1);

struct DecompositionInput {
    Volume3 image;          // pre-processed, atlas-space
    const PcaBasis* basis = nullptr;
    const WeightMap* weights = nullptr;
    double gamma = 0.5;
};

struct DecompositionResult {
    Volume3 l_hat; // quasi-normal minus mean
    Volume3 sparse;
    Volume3 tv;
    std::vector<double> alpha;
    std::vector<std::pair<int, double>> energy_trace; // (iteration, best energy so far)
    bool converged = false;
    int iterations_used = 0;
};

/// Objective of the three-part model:
///   1/2 ||L_hat - B a||^2 + gamma ||grad T||_{2,1} + ||Lambda . S||_1.
/// Preconditions: I - M = L_hat + S + T to 1e-8 and S identically zero on
/// infinite-weight voxels; violations are errors. Infinite-weight voxels
/// contribute nothing to the sparse term.
double energy(const DecompositionInput& input, const Volume3& l_hat, const Volume3& sparse,
              const Volume3& tv, const std::vector<double>& alpha);

/// Per-voxel projection of a vector field onto the radius-`gamma` L2 ball.
VectorField3 shrink_vector(const VectorField3& p, double gamma);

/// Per-voxel soft threshold by tau * Lambda; infinite thresholds map to
/// exactly zero. `thresholds` uses inf as the hard-constraint sentinel.
Volume3 soft_threshold(const Volume3& v, const Volume3& thresholds);

/// Minimize the model by a primal-dual hybrid gradient scheme after exact
/// variable elimination: alpha = B^T L_hat in closed form and
/// L_hat = (I - M) - S - T by substitution, leaving a convex problem in
/// (S, T). The additive split therefore holds to rounding in every result,
/// and S is exactly zero wherever the weight is infinite.
DecompositionResult decompose(const DecompositionInput& input, const SolverConfig& cfg);

/// M + L_hat.
Volume3 quasi_normal(const DecompositionResult& result, const PcaBasis& basis);

} // namespace bxt

#endif
