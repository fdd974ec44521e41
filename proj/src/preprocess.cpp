#include "bxt/preprocess.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "bxt/morphology.hpp"
#include "bxt/registration.hpp"
#include "bxt/volume_ops.hpp"

namespace bxt {

Atlas Atlas::from_volume_and_mask(const Volume3& full_head, const BinaryMask3& mask,
                                  int erosion_radius, int dilation_radius) {
    require_same_grid(full_head.grid, mask.grid, "atlas mask");
    Atlas a;
    a.full_head = full_head;
    a.mask = mask;
    a.brain = Volume3(full_head.grid);
    for (std::size_t i = 0; i < full_head.data.size(); ++i)
        a.brain.data[i] = mask.data[i] ? full_head.data[i] : 0.0;
    a.eroded = erode(mask, erosion_radius);
    a.dilated = dilate(mask, dilation_radius);
    if (a.eroded.count() == 0) throw Error("atlas mask too thin");
    return a;
}

double IntensityLut::apply(double v) const {
    if (input_levels.empty()) return v;
    if (v <= input_levels.front()) return output_levels.front();
    if (v >= input_levels.back()) return output_levels.back();
    const auto it = std::upper_bound(input_levels.begin(), input_levels.end(), v);
    const std::size_t hi = static_cast<std::size_t>(it - input_levels.begin());
    const std::size_t lo = hi - 1;
    const double span = input_levels[hi] - input_levels[lo];
    const double t = span > 0.0 ? (v - input_levels[lo]) / span : 0.0;
    return output_levels[lo] + t * (output_levels[hi] - output_levels[lo]);
}

Volume3 normalize_intensity_1000(const Volume3& v) {
    const double p1 = percentile(v, 1.0);
    const double p99 = percentile(v, 99.0);
    if (!(p99 > p1)) throw Error("degenerate intensity range: p99 == p1");
    const double a = 800.0 / (p99 - p1);
    Volume3 out(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        out.data[i] = std::clamp(100.0 + (v.data[i] - p1) * a, 0.0, 1000.0);
    return out;
}

AlignResult align_to_atlas(const Volume3& v, const Atlas& atlas, const RegistrationConfig& reg) {
    AffineRegOptions o1;
    o1.cog_init = true;
    o1.pyramid_levels = reg.pyramid_levels;
    o1.window_sigma_mm = reg.lncc_sigma_mm;
    o1.iterations = reg.affine_iterations;
    o1.padding = reg.padding;
    const AffineRegResult r1 = register_affine(v, atlas.full_head, o1);

    // Stage 2 registers the stage-1 result to the brain-extracted atlas with
    // dilated-mask cost masking, then both maps are composed exactly so the
    // image is interpolated once.
    const Volume3 stage1 =
        resample(v, atlas.full_head.grid,
                 [&](const Point3& p) { return r1.transform.apply(p); }, reg.padding);
    AffineRegOptions o2;
    o2.cog_init = false;
    o2.mask = &atlas.dilated;
    o2.pyramid_levels = reg.pyramid_levels;
    o2.window_sigma_mm = reg.lncc_sigma_mm;
    o2.iterations = reg.affine_iterations;
    o2.padding = reg.padding;
    const AffineRegResult r2 = register_affine(stage1, atlas.brain, o2);

    AlignResult out;
    out.chain.append(r1.transform);
    out.chain.append(r2.transform);
    const AffineTransform composed = r1.transform.compose(r2.transform);
    out.aligned = resample(v, atlas.full_head.grid,
                           [&](const Point3& p) { return composed.apply(p); }, reg.padding);
    out.stage1_score = r1.final_score;
    out.stage2_score = r2.final_score;
    return out;
}

std::pair<Volume3, Volume3> correct_bias(const Volume3& v, const BinaryMask3& mask) {
    require_same_grid(v.grid, mask.grid, "bias mask");
    if (mask.count() == 0) throw Error("empty mask");

    // Degree-3 trivariate monomials on grid coordinates normalized to [-1,1].
    const auto& g = v.grid;
    auto coords = [&](int x, int y, int z) {
        return Point3{g.dims[0] > 1 ? 2.0 * x / (g.dims[0] - 1) - 1.0 : 0.0,
                      g.dims[1] > 1 ? 2.0 * y / (g.dims[1] - 1) - 1.0 : 0.0,
                      g.dims[2] > 1 ? 2.0 * z / (g.dims[2] - 1) - 1.0 : 0.0};
    };
    std::vector<std::array<int, 3>> powers;
    for (int px = 0; px <= 3; ++px)
        for (int py = 0; py + px <= 3; ++py)
            for (int pz = 0; pz + py + px <= 3; ++pz) powers.push_back({px, py, pz});
    const int nb = static_cast<int>(powers.size());

    auto basis_at = [&](const Point3& c, Eigen::VectorXd& row) {
        for (int b = 0; b < nb; ++b)
            row(b) = std::pow(c[0], powers[b][0]) * std::pow(c[1], powers[b][1]) *
                     std::pow(c[2], powers[b][2]);
    };

    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(nb);
    Eigen::VectorXd row(nb);
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                if (!mask.at(x, y, z)) continue;
                basis_at(coords(x, y, z), row);
                const double lv = std::log(std::max(v.at(x, y, z), 1.0));
                ata.selfadjointView<Eigen::Lower>().rankUpdate(row);
                atb += lv * row;
            }
    ata = ata.selfadjointView<Eigen::Lower>();
    const Eigen::VectorXd coef = ata.ldlt().solve(atb);

    Volume3 bias(g);
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                basis_at(coords(x, y, z), row);
                bias.at(x, y, z) = std::exp(row.dot(coef));
            }

    double mean = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < bias.data.size(); ++i)
        if (mask.data[i]) {
            mean += bias.data[i];
            ++n;
        }
    mean /= static_cast<double>(n);
    for (double& b : bias.data) b /= mean;

    Volume3 corrected(g);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        corrected.data[i] = v.data[i] / bias.data[i];
    return {std::move(corrected), std::move(bias)};
}

std::pair<Volume3, IntensityLut> histogram_match_with_lut(const Volume3& v,
                                                          const Volume3& reference,
                                                          const BinaryMask3& mask) {
    require_same_grid(v.grid, mask.grid, "histogram mask");
    require_same_grid(reference.grid, mask.grid, "histogram reference");
    if (mask.count() == 0) throw Error("empty mask");

    constexpr int kBins = 256;
    auto masked_range = [&](const Volume3& vol) {
        double lo = 0, hi = 0;
        bool first = true;
        for (std::size_t i = 0; i < vol.data.size(); ++i) {
            if (!mask.data[i]) continue;
            if (first) {
                lo = hi = vol.data[i];
                first = false;
            } else {
                lo = std::min(lo, vol.data[i]);
                hi = std::max(hi, vol.data[i]);
            }
        }
        return std::pair<double, double>(lo, hi);
    };
    const auto [vlo, vhi] = masked_range(v);
    const auto [rlo, rhi] = masked_range(reference);
    if (!(vhi > vlo) || !(rhi > rlo))
        throw Error("degenerate intensity range: constant within mask");

    auto cdf_of = [&](const Volume3& vol, double lo, double hi) {
        std::vector<double> counts(kBins, 0.0);
        std::size_t n = 0;
        for (std::size_t i = 0; i < vol.data.size(); ++i) {
            if (!mask.data[i]) continue;
            int b = static_cast<int>((vol.data[i] - lo) / (hi - lo) * kBins);
            b = std::clamp(b, 0, kBins - 1);
            counts[b] += 1.0;
            ++n;
        }
        std::vector<double> cdf(kBins + 1, 0.0);
        for (int b = 0; b < kBins; ++b) cdf[b + 1] = cdf[b] + counts[b] / n;
        return cdf; // cdf at bin edges lo + (hi-lo)*b/kBins
    };
    const auto cdf_v = cdf_of(v, vlo, vhi);
    const auto cdf_r = cdf_of(reference, rlo, rhi);

    // invert the reference CDF at a probability
    auto ref_quantile = [&](double p) {
        int b = 0;
        while (b < kBins && cdf_r[b + 1] < p) ++b;
        if (b >= kBins) return rhi;
        const double span = cdf_r[b + 1] - cdf_r[b];
        const double t = span > 0.0 ? (p - cdf_r[b]) / span : 0.0;
        return rlo + (rhi - rlo) * (b + t) / kBins;
    };

    IntensityLut lut;
    lut.input_levels.reserve(kBins + 1);
    lut.output_levels.reserve(kBins + 1);
    double prev_out = rlo;
    for (int b = 0; b <= kBins; ++b) {
        const double in_level = vlo + (vhi - vlo) * b / kBins;
        double out_level = ref_quantile(cdf_v[b]);
        out_level = std::max(out_level, prev_out); // monotone by construction
        prev_out = out_level;
        lut.input_levels.push_back(in_level);
        lut.output_levels.push_back(out_level);
    }

    Volume3 out(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = lut.apply(v.data[i]);
    return {std::move(out), std::move(lut)};
}

Volume3 histogram_match(const Volume3& v, const Volume3& reference, const BinaryMask3& mask) {
    return histogram_match_with_lut(v, reference, mask).first;
}

PreprocessResult preprocess(const Volume3& input, const Atlas& atlas, const Volume3& model_mean,
                            const PipelineConfig& cfg) {
    require_same_grid(atlas.full_head.grid, model_mean.grid, "model mean vs atlas");

    PreprocessResult r;
    r.anchor_p1 = percentile(input, 1.0);
    r.anchor_p99 = percentile(input, 99.0);
    const Volume3 normalized = normalize_intensity_1000(input);

    AlignResult aligned = align_to_atlas(normalized, atlas, cfg.registration);
    r.chain = aligned.chain;
    r.stage1_score = aligned.stage1_score;
    r.stage2_score = aligned.stage2_score;

    Volume3 corrected;
    if (cfg.bias_correction == "none") {
        corrected = std::move(aligned.aligned);
        r.bias = Volume3(atlas.full_head.grid, 1.0);
    } else {
        auto [c, b] = correct_bias(aligned.aligned, atlas.eroded);
        corrected = std::move(c);
        r.bias = std::move(b);
    }

    auto [matched, lut] = histogram_match_with_lut(corrected, model_mean, atlas.eroded);
    r.output = std::move(matched);
    r.histogram_lut = std::move(lut);
    return r;
}

} // namespace bxt
