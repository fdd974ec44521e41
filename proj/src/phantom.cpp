#include "bxt/phantom.hpp"

#include <cmath>
#include <random>

#include "bxt/errors.hpp"
#include "bxt/gaussian.hpp"
#include "bxt/volume_ops.hpp"

namespace bxt {

namespace {

// Explicit samplers keep the generated values a pinned function of the seed.
struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    double uniform() { // [0,1)
        return static_cast<double>(gen() >> 11) * (1.0 / 9007199254740992.0);
    }
    double uniform_pm() { return 2.0 * uniform() - 1.0; }
    double normal() {
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
};

struct TrigWarp {
    double amplitude = 0.0;
    std::array<std::array<double, 3>, 3> wave_vec{};  // per mode, 1/mm
    std::array<double, 3> phase{};
    std::array<std::array<double, 3>, 3> dir{};       // displacement direction per mode

    static TrigWarp make(double amplitude_mm, std::uint64_t seed) {
        TrigWarp w;
        w.amplitude = amplitude_mm;
        Rng rng(seed);
        for (int m = 0; m < 3; ++m) {
            const double wavelength = 70.0 + 50.0 * rng.uniform(); // mm
            double k[3] = {rng.uniform_pm(), rng.uniform_pm(), rng.uniform_pm()};
            double kn = std::sqrt(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) + 1e-12;
            for (int a = 0; a < 3; ++a)
                w.wave_vec[m][a] = k[a] / kn * (2.0 * 3.14159265358979323846 / wavelength);
            w.phase[m] = 2.0 * 3.14159265358979323846 * rng.uniform();
            double d[3] = {rng.uniform_pm(), rng.uniform_pm(), rng.uniform_pm()};
            double dn = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) + 1e-12;
            for (int a = 0; a < 3; ++a) w.dir[m][a] = d[a] / dn;
        }
        return w;
    }

    std::array<double, 3> displacement(const std::array<double, 3>& p) const {
        std::array<double, 3> u{0, 0, 0};
        if (amplitude == 0.0) return u;
        for (int m = 0; m < 3; ++m) {
            const double arg = wave_vec[m][0] * p[0] + wave_vec[m][1] * p[1] +
                               wave_vec[m][2] * p[2] + phase[m];
            const double s = std::sin(arg) * amplitude / 3.0;
            for (int a = 0; a < 3; ++a) u[a] += s * dir[m][a];
        }
        return u;
    }
};

double ellipsoid_value(const std::array<double, 3>& p, const std::array<double, 3>& center,
                       const std::array<double, 3>& axes) {
    double s = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double d = (p[a] - center[a]) / axes[a];
        s += d * d;
    }
    return s;
}

std::array<double, 3> rotate_inv(const std::array<double, 3>& p,
                                 const std::array<double, 3>& center,
                                 const std::array<double, 3>& angles_deg) {
    // Inverse of Rz(az) Ry(ay) Rx(ax) applied about `center`.
    const double d2r = 3.14159265358979323846 / 180.0;
    const double ax = angles_deg[2] * d2r, ay = angles_deg[1] * d2r, az = angles_deg[0] * d2r;
    double v[3] = {p[0] - center[0], p[1] - center[1], p[2] - center[2]};
    // inverse order: Rx(-ax) Ry(-ay) Rz(-az)
    {
        const double c = std::cos(-az), s = std::sin(-az);
        const double x = c * v[0] - s * v[1], y = s * v[0] + c * v[1];
        v[0] = x;
        v[1] = y;
    }
    {
        const double c = std::cos(-ay), s = std::sin(-ay);
        const double x = c * v[0] + s * v[2], z = -s * v[0] + c * v[2];
        v[0] = x;
        v[2] = z;
    }
    {
        const double c = std::cos(-ax), s = std::sin(-ax);
        const double y = c * v[1] - s * v[2], z = s * v[1] + c * v[2];
        v[1] = y;
        v[2] = z;
    }
    return {v[0] + center[0], v[1] + center[1], v[2] + center[2]};
}

} // namespace

PhantomOutput generate(const PhantomSpec& spec) {
    Grid3 g;
    g.dims = spec.dims;
    g.spacing = spec.spacing;
    g.origin = {0, 0, 0};
    g.validate();

    const std::array<double, 3> vol_center = {(g.dims[0] - 1) * g.spacing[0] / 2.0,
                                              (g.dims[1] - 1) * g.spacing[1] / 2.0,
                                              (g.dims[2] - 1) * g.spacing[2] / 2.0};
    std::array<double, 3> brain_center;
    for (int a = 0; a < 3; ++a) brain_center[a] = vol_center[a] + spec.brain_center_offset[a];

    const double gap = 2.0;
    std::array<double, 3> inner_skull, outer_skull, scalp_outer;
    for (int a = 0; a < 3; ++a) {
        inner_skull[a] = spec.brain_semi_axes[a] + gap;
        outer_skull[a] = inner_skull[a] + spec.skull_thickness_mm;
        scalp_outer[a] = outer_skull[a] + spec.scalp_thickness_mm;
    }

    // Head must stay inside the field of view after translation.
    for (int a = 0; a < 3; ++a) {
        const double lo = brain_center[a] + spec.translation_mm[a] - scalp_outer[a];
        const double hi = brain_center[a] + spec.translation_mm[a] + scalp_outer[a];
        const double fov = (g.dims[a] - 1) * g.spacing[a];
        if (lo < -g.spacing[a] || hi > fov + g.spacing[a])
            throw Error("phantom primitives out of bounds along axis " + std::to_string(a));
    }
    if (spec.pathology && spec.pathology->radius_mm > 0.0) {
        const auto& pa = *spec.pathology;
        double off = 0.0;
        for (int a = 0; a < 3; ++a) {
            const double d = pa.center_offset_mm[a] / spec.brain_semi_axes[a];
            off += d * d;
        }
        const double min_axis =
            std::min({spec.brain_semi_axes[0], spec.brain_semi_axes[1], spec.brain_semi_axes[2]});
        if (std::sqrt(off) + pa.radius_mm / min_axis > 1.0)
            throw Error("phantom primitives out of bounds: pathology leaves the brain");
    }

    // Texture volume in structure space.
    Volume3 texture(g);
    if (spec.texture_amplitude > 0.0) {
        Rng rng(spec.texture_seed);
        for (double& t : texture.data) t = rng.normal();
        texture = smooth_gaussian(texture, spec.texture_sigma_mm);
        double mean = 0.0;
        for (double t : texture.data) mean += t;
        mean /= static_cast<double>(texture.data.size());
        double var = 0.0;
        for (double t : texture.data) var += (t - mean) * (t - mean);
        var /= static_cast<double>(texture.data.size());
        const double scale = spec.texture_amplitude / std::sqrt(std::max(var, 1e-30));
        for (double& t : texture.data) t = (t - mean) * scale;
    }

    const TrigWarp warp = TrigWarp::make(spec.warp_amplitude_mm, spec.warp_seed);

    std::array<double, 3> pathology_center{0, 0, 0};
    const bool has_path = spec.pathology && spec.pathology->radius_mm > 0.0;
    if (spec.pathology)
        for (int a = 0; a < 3; ++a)
            pathology_center[a] = brain_center[a] + spec.pathology->center_offset_mm[a];

    PhantomOutput out;
    out.volume = Volume3(g);
    out.truth_mask = BinaryMask3(g);
    out.truth_pathology = BinaryMask3(g);

    const double neck_radius = 0.5 * scalp_outer[0];
    const double neck_top_z = brain_center[2] - 0.6 * scalp_outer[2];

    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                auto p = g.voxel_to_world(x, y, z);
                for (int a = 0; a < 3; ++a) p[a] -= spec.translation_mm[a];
                p = rotate_inv(p, brain_center, spec.rotation_deg);
                // structure-space coordinate after the smooth random warp
                auto q = p;
                {
                    const auto u = warp.displacement(p);
                    for (int a = 0; a < 3; ++a) q[a] += u[a];
                }
                // mass effect pushes tissue away from the pathology center
                if (has_path && spec.pathology->mass_effect_mm > 0.0) {
                    double r = 0.0;
                    std::array<double, 3> dir{0, 0, 0};
                    for (int a = 0; a < 3; ++a) {
                        dir[a] = q[a] - pathology_center[a];
                        r += dir[a] * dir[a];
                    }
                    r = std::sqrt(r);
                    if (r > 1e-9) {
                        const double rr = r / (2.0 * spec.pathology->radius_mm);
                        const double push =
                            spec.pathology->mass_effect_mm * std::exp(-rr * rr);
                        for (int a = 0; a < 3; ++a) q[a] -= push * dir[a] / r;
                    }
                }

                const double eb = ellipsoid_value(q, brain_center, spec.brain_semi_axes);
                double value = spec.background_intensity;
                bool is_brain = false;
                if (eb <= 1.0) {
                    value = spec.brain_intensity +
                            sample(texture, q, Interpolation::Linear, 0.0);
                    is_brain = true;
                } else if (ellipsoid_value(q, brain_center, inner_skull) <= 1.0) {
                    value = 0.30; // fluid gap between brain and skull
                } else if (ellipsoid_value(q, brain_center, outer_skull) <= 1.0) {
                    value = spec.skull_intensity;
                } else if (ellipsoid_value(q, brain_center, scalp_outer) <= 1.0) {
                    value = spec.scalp_intensity;
                } else if (q[2] < neck_top_z) {
                    const double rx = q[0] - brain_center[0];
                    const double ry = q[1] - brain_center[1];
                    const double rr = std::sqrt(rx * rx + ry * ry);
                    if (rr < 0.4 * neck_radius)
                        value = spec.skull_intensity; // spine
                    else if (rr < neck_radius)
                        value = spec.scalp_intensity * 0.9;
                }

                bool in_pathology = false;
                if (has_path && is_brain) {
                    double r = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        const double d = q[a] - pathology_center[a];
                        r += d * d;
                    }
                    if (r <= spec.pathology->radius_mm * spec.pathology->radius_mm) {
                        value += spec.pathology->intensity_delta;
                        in_pathology = true;
                    }
                }

                const std::size_t i = g.index(x, y, z);
                out.volume.data[i] = value;
                out.truth_mask.data[i] = is_brain ? 1 : 0;
                out.truth_pathology.data[i] = in_pathology ? 1 : 0;
            }

    if (spec.noise_sigma > 0.0) {
        Rng rng(spec.noise_seed);
        for (double& v : out.volume.data) v += spec.noise_sigma * rng.normal();
    }
    return out;
}

std::array<double, 3> warp_displacement(const PhantomSpec& spec,
                                        const std::array<double, 3>& p) {
    return TrigWarp::make(spec.warp_amplitude_mm, spec.warp_seed).displacement(p);
}

CohortOutput generate_cohort(const PhantomSpec& base, int n, double variation) {
    if (n < 2) throw Error("cohort needs n >= 2");
    CohortOutput out;
    for (int i = 0; i < n; ++i) {
        PhantomSpec s = base;
        Rng rng(base.texture_seed * 1000003ULL + static_cast<std::uint64_t>(i) * 7919ULL + 11);
        for (int a = 0; a < 3; ++a)
            s.brain_semi_axes[a] *= 1.0 + 0.06 * variation * rng.uniform_pm();
        for (int a = 0; a < 3; ++a) s.translation_mm[a] = 2.0 * variation * rng.uniform_pm();
        for (int a = 0; a < 3; ++a) s.rotation_deg[a] = 2.0 * variation * rng.uniform_pm();
        s.brain_intensity *= 1.0 + 0.08 * variation * rng.uniform_pm();
        s.warp_amplitude_mm = 1.5 * variation * rng.uniform();
        if (variation > 0.0) {
            s.texture_seed = base.texture_seed + 131 * (i + 1);
            s.warp_seed = base.warp_seed + 977 * (i + 1);
            s.noise_seed = base.noise_seed + 389 * (i + 1);
        }
        PhantomOutput ph = generate(s);
        out.training.volumes.push_back(std::move(ph.volume));
        out.masks.push_back(std::move(ph.truth_mask));
        out.specs.push_back(s);
    }
    return out;
}

} // namespace bxt
