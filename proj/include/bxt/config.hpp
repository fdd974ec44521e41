#ifndef BXT_CONFIG_HPP
#define BXT_CONFIG_HPP

#include <cstdint>
#include <string>

namespace bxt {

struct SolverConfig {
    int max_iterations = 2000;
    double tolerance = 1e-6;     // relative best-energy change over a 10-iter window
    bool adaptive_steps = true;  // residual-balancing primal/dual step adaptation
    std::string init = "zero";   // "zero" or "random"
    std::uint64_t init_seed = 0;
};

struct RegistrationConfig {
    double bspline_spacing_mm = 10.0;
    double lncc_sigma_mm = 40.0;
    double padding = 0.0;
    int pyramid_levels = 3;
    double bending_weight = 1e-3;
    int affine_iterations = 60;   // per pyramid level
    int bspline_iterations = 40;  // per pyramid level
};

struct PipelineConfig {
    double lambda = 0.1;
    double gamma = 0.5;
    int iterations = 6;
    int erosion_radius = 2;
    int dilation_radius = 1;
    int pca_modes = 50;
    std::string bias_correction = "poly3"; // or "none"
    std::uint64_t seed = 0;
    SolverConfig solver;
    RegistrationConfig registration;
};

/// Load a JSON config. Every field is optional and defaults to the values
/// above; unknown keys and out-of-range values are errors.
PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config_text(const std::string& json_text);
void validate_config(const PipelineConfig& c);

} // namespace bxt

#endif
