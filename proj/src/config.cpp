#include "bxt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bxt/errors.hpp"

namespace bxt {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown config key: " + scope + it.key());
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

void validate_config(const PipelineConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
    if (c.lambda < 0.0) fail("lambda must be >= 0");
    if (c.gamma < 0.0) fail("gamma must be >= 0");
    if (c.iterations < 1 || c.iterations > 64) fail("iterations must be in [1, 64]");
    if (c.erosion_radius < 0) fail("erosion_radius must be >= 0");
    if (c.dilation_radius < 0) fail("dilation_radius must be >= 0");
    if (c.pca_modes < 1) fail("pca_modes must be >= 1");
    if (c.bias_correction != "poly3" && c.bias_correction != "none")
        fail("bias_correction must be 'poly3' or 'none'");
    if (c.solver.max_iterations < 1) fail("solver.max_iterations must be >= 1");
    if (!(c.solver.tolerance > 0.0)) fail("solver.tolerance must be > 0");
    if (c.solver.init != "zero" && c.solver.init != "random")
        fail("solver.init must be 'zero' or 'random'");
    if (!(c.registration.bspline_spacing_mm > 0.0)) fail("registration.bspline_spacing_mm must be > 0");
    if (!(c.registration.lncc_sigma_mm > 0.0)) fail("registration.lncc_sigma_mm must be > 0");
    if (c.registration.pyramid_levels < 1 || c.registration.pyramid_levels > 6)
        fail("registration.pyramid_levels must be in [1, 6]");
    if (c.registration.bending_weight < 0.0) fail("registration.bending_weight must be >= 0");
    if (c.registration.affine_iterations < 1) fail("registration.affine_iterations must be >= 1");
    if (c.registration.bspline_iterations < 1) fail("registration.bspline_iterations must be >= 1");
}

PipelineConfig parse_config_text(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");

    PipelineConfig c;
    try {
        reject_unknown(j, {"lambda", "gamma", "iterations", "erosion_radius", "dilation_radius",
                           "pca_modes", "bias_correction", "seed", "solver", "registration"},
                       "");
        get_if(j, "lambda", c.lambda);
        get_if(j, "gamma", c.gamma);
        get_if(j, "iterations", c.iterations);
        get_if(j, "erosion_radius", c.erosion_radius);
        get_if(j, "dilation_radius", c.dilation_radius);
        get_if(j, "pca_modes", c.pca_modes);
        get_if(j, "bias_correction", c.bias_correction);
        get_if(j, "seed", c.seed);
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            reject_unknown(s, {"max_iterations", "tolerance", "adaptive_steps", "init", "init_seed"},
                           "solver.");
            get_if(s, "max_iterations", c.solver.max_iterations);
            get_if(s, "tolerance", c.solver.tolerance);
            get_if(s, "adaptive_steps", c.solver.adaptive_steps);
            get_if(s, "init", c.solver.init);
            get_if(s, "init_seed", c.solver.init_seed);
        }
        if (j.contains("registration")) {
            const auto& r = j.at("registration");
            reject_unknown(r,
                           {"bspline_spacing_mm", "lncc_sigma_mm", "padding", "pyramid_levels",
                            "bending_weight", "affine_iterations", "bspline_iterations"},
                           "registration.");
            get_if(r, "bspline_spacing_mm", c.registration.bspline_spacing_mm);
            get_if(r, "lncc_sigma_mm", c.registration.lncc_sigma_mm);
            get_if(r, "padding", c.registration.padding);
            get_if(r, "pyramid_levels", c.registration.pyramid_levels);
            get_if(r, "bending_weight", c.registration.bending_weight);
            get_if(r, "affine_iterations", c.registration.affine_iterations);
            get_if(r, "bspline_iterations", c.registration.bspline_iterations);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    validate_config(c);
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config not found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace bxt
