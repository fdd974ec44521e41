#ifndef BXT_PREPROCESS_HPP
#define BXT_PREPROCESS_HPP

#include <vector>

#include "bxt/config.hpp"
#include "bxt/transform.hpp"
#include "bxt/volume.hpp"

namespace bxt {

/// Reference head: full volume, brain-extracted volume, brain mask, and the
/// derived eroded/dilated masks used for cost masking and the weight map.
struct Atlas {
    Volume3 full_head;
    Volume3 brain; // full_head masked by `mask`
    BinaryMask3 mask;
    BinaryMask3 eroded;  // erode(mask, erosion_radius)
    BinaryMask3 dilated; // dilate(mask, dilation_radius)

    static Atlas from_volume_and_mask(const Volume3& full_head, const BinaryMask3& mask,
                                      int erosion_radius = 2, int dilation_radius = 1);
};

/// Monotone piecewise-linear intensity map recorded by histogram matching,
/// kept so downstream analyses can replay the exact intensity chain.
struct IntensityLut {
    std::vector<double> input_levels;  // ascending
    std::vector<double> output_levels; // same length, non-decreasing
    double apply(double v) const;
};

struct PreprocessResult {
    Volume3 output;       // atlas-space, bias-corrected, histogram-matched
    TransformChain chain; // the two affine alignment transforms
    Volume3 bias;         // unit-mean multiplicative field (atlas space)
    double anchor_p1 = 0.0, anchor_p99 = 0.0; // percentiles of the raw input
    IntensityLut histogram_lut;
    double stage1_score = 0.0, stage2_score = 0.0;
};

/// Anchor the 1st percentile at 100 and the 99th at 900, clamp to [0,1000].
Volume3 normalize_intensity_1000(const Volume3& v);

/// Two-stage affine alignment: CoG-initialized registration to the full-head
/// atlas, then mask-restricted registration to the brain-extracted atlas.
/// Returns the atlas-space volume (one interpolation through the composed
/// map) and the chain of both transforms.
struct AlignResult {
    Volume3 aligned;
    TransformChain chain;
    double stage1_score = 0.0, stage2_score = 0.0;
};
AlignResult align_to_atlas(const Volume3& v, const Atlas& atlas, const RegistrationConfig& reg);

/// Multiplicative bias model v = true * bias. The bias is a degree-3
/// trivariate polynomial fitted to log-intensity inside the mask (values
/// below 1 are raised to 1 before the log), normalized to unit mean within
/// the mask. Returns (corrected, bias).
std::pair<Volume3, Volume3> correct_bias(const Volume3& v, const BinaryMask3& mask);

/// Monotone CDF matching (256 bins, piecewise-linear inverse) fitted within
/// the mask and applied to the whole volume.
Volume3 histogram_match(const Volume3& v, const Volume3& reference, const BinaryMask3& mask);
std::pair<Volume3, IntensityLut> histogram_match_with_lut(const Volume3& v,
                                                          const Volume3& reference,
                                                          const BinaryMask3& mask);

/// The full chain: intensity standardization, alignment, bias correction
/// within the eroded atlas mask, histogram matching to the model mean within
/// the eroded atlas mask.
PreprocessResult preprocess(const Volume3& input, const Atlas& atlas, const Volume3& model_mean,
                            const PipelineConfig& cfg);

} // namespace bxt

#endif
