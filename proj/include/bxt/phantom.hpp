#ifndef BXT_PHANTOM_HPP
#define BXT_PHANTOM_HPP

#include <cstdint>
#include <optional>

#include "bxt/pca.hpp"
#include "bxt/volume.hpp"

namespace bxt {

/// Synthetic head description. Everything is generated analytically from
/// implicit surfaces evaluated at (optionally warped) coordinates, so the
/// ground-truth masks are exact and the whole output is a deterministic
/// function of the spec.
struct PhantomSpec {
    std::array<int, 3> dims{64, 64, 64};
    std::array<double, 3> spacing{2.5, 2.5, 2.5};

    // Brain ellipsoid, mm semi-axes and center offset from volume center.
    std::array<double, 3> brain_semi_axes{42.0, 52.0, 45.0};
    std::array<double, 3> brain_center_offset{0.0, 0.0, 6.0};
    std::array<double, 3> rotation_deg{0.0, 0.0, 0.0}; // head pose (z,y,x order)
    std::array<double, 3> translation_mm{0.0, 0.0, 0.0};

    double skull_thickness_mm = 5.0;
    double scalp_thickness_mm = 7.0;

    double brain_intensity = 0.65;
    double skull_intensity = 0.12;
    double scalp_intensity = 0.50;
    double background_intensity = 0.02;

    std::uint64_t texture_seed = 1;
    double texture_amplitude = 0.06; // inside the brain
    double texture_sigma_mm = 8.0;

    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 2;

    // Optional pathology: bright sphere inside the brain.
    struct Pathology {
        std::array<double, 3> center_offset_mm{10.0, 0.0, 0.0}; // from brain center
        double radius_mm = 0.0;
        double intensity_delta = 0.4;
        double mass_effect_mm = 0.0; // radial push of surrounding tissue
    };
    std::optional<Pathology> pathology;

    // Optional smooth random coordinate warp (low-frequency trigonometric
    // displacement), amplitude in mm.
    double warp_amplitude_mm = 0.0;
    std::uint64_t warp_seed = 3;
};

struct PhantomOutput {
    Volume3 volume;
    BinaryMask3 truth_mask;      // brain, excludes skull/scalp by construction
    BinaryMask3 truth_pathology; // empty when no pathology requested
};

PhantomOutput generate(const PhantomSpec& spec);

/// The smooth random coordinate warp a spec induces, evaluated at a world
/// point (mm). Exposed so forward-synthesis tests can compare recovered
/// deformations against the exact ground truth.
std::array<double, 3> warp_displacement(const PhantomSpec& spec,
                                        const std::array<double, 3>& p);

struct CohortOutput {
    TrainingSet training;              // raw volumes (not yet normalized)
    std::vector<BinaryMask3> masks;    // per-phantom truth masks
    std::vector<PhantomSpec> specs;    // the per-member resolved specs
};

/// n phantoms with smooth random shape/intensity variation around `base`,
/// derived deterministically from base.texture_seed and the member index.
CohortOutput generate_cohort(const PhantomSpec& base, int n, double variation);

} // namespace bxt

#endif
