#ifndef BXT_PIPELINE_HPP
#define BXT_PIPELINE_HPP

#include <string>
#include <vector>

#include "bxt/config.hpp"
#include "bxt/decompose.hpp"
#include "bxt/pca.hpp"
#include "bxt/preprocess.hpp"
#include "bxt/transform.hpp"
#include "bxt/volume.hpp"

namespace bxt {

struct IterationDiagnostics {
    int k = 0;
    std::string registration; // "", "affine", "bspline"
    double registration_score = 0.0;
    bool registration_warning = false;
    double energy = 0.0;
    int solver_iterations = 0;
    bool solver_converged = false;
};

struct ExtractionResult {
    BinaryMask3 mask_native;     // I_M
    Volume3 brain_native;        // I_B = input masked by I_M, voxel-exact
    Volume3 quasi_normal_atlas;  // M + L_hat from the final iteration
    Volume3 sparse_atlas;        // S
    Volume3 tv_atlas;            // T
    TransformChain chain;        // pre-processing affines, iteration affines,
                                 // and the single accumulated B-spline
    PreprocessResult preprocessing;
    std::vector<IterationDiagnostics> iterations;
};

/// Alternate decomposition and registration for cfg.iterations rounds
/// (affine for k in {2,3}, B-spline from k = 4 on). The affine rounds move
/// the pathology-reduced image R = I - T with dilated-mask cost masking; the
/// later B-spline rounds move the quasi-normal image deformed back to the
/// post-affine space, re-estimating one full B-spline each time instead of
/// stacking warped image data.
ExtractionResult run_extraction(const Volume3& input, const Atlas& atlas, const PcaBasis& model,
                                const PipelineConfig& cfg);

/// Warp the atlas mask back to native space through the inverse chain
/// (affine inverses exact, the B-spline inverted numerically); the 0/1 mask
/// is interpolated linearly and binarized at 0.5.
BinaryMask3 postprocess(const BinaryMask3& atlas_mask, const TransformChain& chain,
                        const Grid3& native_grid);

} // namespace bxt

#endif
