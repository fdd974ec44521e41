#include "bxt/pipeline.hpp"

#include <cmath>

#include "bxt/registration.hpp"
#include "bxt/volume_ops.hpp"

namespace bxt {

namespace {

Volume3 warp_through(const Volume3& v, const Grid3& onto, const AnyTransform& t, double padding) {
    return resample(v, onto, [&](const Point3& p) { return apply_transform(t, p); }, padding);
}

} // namespace

ExtractionResult run_extraction(const Volume3& input, const Atlas& atlas, const PcaBasis& model,
                                const PipelineConfig& cfg) {
    require_same_grid(atlas.full_head.grid, model.grid(), "atlas vs model");
    const Grid3& ag = atlas.full_head.grid;

    ExtractionResult result;
    result.preprocessing = preprocess(input, atlas, model.mean, cfg);
    result.chain = result.preprocessing.chain;

    const WeightMap weights =
        build_weight_map(atlas.mask, cfg.lambda, cfg.erosion_radius, cfg.dilation_radius);

    const Volume3& image_atlas0 = result.preprocessing.output; // I_1
    Volume3 image_k = image_atlas0;

    // Affine rounds accumulate into one exact matrix product; B-spline rounds
    // keep a single slot that is re-estimated (non-greedy), so image data is
    // always interpolated once from I_1 (affine phase) or I_3 (B-spline phase).
    AffineTransform affine_accum = AffineTransform::identity();
    Volume3 image_affine_done;   // I_3: input image after the affine rounds
    bool have_bspline = false;
    BsplineTransform bspline_slot;

    DecompositionResult dec;
    Volume3 pathology_reduced; // R_k = I_k - T_k

    const int last_affine = std::min(cfg.iterations, 3);
    for (int k = 1; k <= cfg.iterations; ++k) {
        IterationDiagnostics diag;
        diag.k = k;

        if (k >= 2 && k <= last_affine) {
            AffineRegOptions o;
            o.cog_init = false;
            o.mask = &atlas.dilated;
            o.pyramid_levels = cfg.registration.pyramid_levels;
            o.window_sigma_mm = cfg.registration.lncc_sigma_mm;
            o.iterations = cfg.registration.affine_iterations;
            o.padding = cfg.registration.padding;
            const AffineRegResult reg = register_affine(pathology_reduced, atlas.brain, o);
            affine_accum = affine_accum.compose(reg.transform);
            image_k = warp_through(image_atlas0, ag, affine_accum, cfg.registration.padding);
            result.chain.append(reg.transform);
            diag.registration = "affine";
            diag.registration_score = reg.final_score;
            diag.registration_warning = reg.warning_no_improvement;
        } else if (k > last_affine && k >= 4) {
            if (image_affine_done.data.empty()) image_affine_done = image_k;
            BsplineRegOptions o;
            o.grid_spacing_mm = cfg.registration.bspline_spacing_mm;
            o.window_sigma_mm = cfg.registration.lncc_sigma_mm;
            o.padding = cfg.registration.padding;
            o.bending_weight = cfg.registration.bending_weight;
            o.pyramid_levels = cfg.registration.pyramid_levels;
            o.iterations = cfg.registration.bspline_iterations;

            BsplineRegResult reg;
            if (k == 4) {
                o.mask = &atlas.dilated;
                reg = register_bspline(pathology_reduced, atlas.brain, o);
            } else {
                // Deform the quasi-normal image back to the post-affine space
                // through the numerically inverted current B-spline, then
                // re-register it; this replaces the slot rather than stacking.
                const Volume3 quasi = quasi_normal(dec, model);
                const DenseDisplacementField back = invert_bspline(bspline_slot, ag);
                const Volume3 moving = warp_through(quasi, ag, back, cfg.registration.padding);
                o.init = &bspline_slot;
                reg = register_bspline(moving, atlas.brain, o);
            }
            bspline_slot = reg.transform;
            have_bspline = true;
            image_k = warp_through(image_affine_done, ag, bspline_slot, cfg.registration.padding);
            diag.registration = "bspline";
            diag.registration_score = reg.final_score;
            diag.registration_warning = reg.warning_no_improvement;
        }

        DecompositionInput din;
        din.image = image_k;
        din.basis = &model;
        din.weights = &weights;
        din.gamma = cfg.gamma;
        dec = decompose(din, cfg.solver);
        diag.energy = dec.energy_trace.empty() ? 0.0 : dec.energy_trace.back().second;
        diag.solver_iterations = dec.iterations_used;
        diag.solver_converged = dec.converged;
        result.iterations.push_back(diag);

        if (k <= last_affine) {
            // R = L + S = I - T; this form avoids the non-unique (S, T) split
            // outside the dilated mask.
            pathology_reduced = Volume3(ag);
            for (std::size_t i = 0; i < image_k.data.size(); ++i)
                pathology_reduced.data[i] = image_k.data[i] - dec.tv.data[i];
            if (k == last_affine) image_affine_done = image_k;
        }
    }

    if (have_bspline) result.chain.append(bspline_slot);

    result.quasi_normal_atlas = quasi_normal(dec, model);
    result.sparse_atlas = dec.sparse;
    result.tv_atlas = dec.tv;

    result.mask_native = postprocess(atlas.mask, result.chain, input.grid);
    result.brain_native = Volume3(input.grid);
    for (std::size_t i = 0; i < input.data.size(); ++i)
        result.brain_native.data[i] =
            result.mask_native.data[i] ? input.data[i] : 0.0;
    return result;
}

BinaryMask3 postprocess(const BinaryMask3& atlas_mask, const TransformChain& chain,
                        const Grid3& native_grid) {
    // Inverse map: apply the inverse of each chained transform in original
    // order (the chain itself applies its last item first).
    std::vector<AnyTransform> inverses;
    inverses.reserve(chain.items.size());
    for (const auto& item : chain.items) {
        if (std::holds_alternative<AffineTransform>(item)) {
            inverses.emplace_back(std::get<AffineTransform>(item).inverse());
        } else if (std::holds_alternative<BsplineTransform>(item)) {
            inverses.emplace_back(
                invert_bspline(std::get<BsplineTransform>(item), atlas_mask.grid));
        } else {
            throw Error("cannot invert a dense displacement field in a chain");
        }
    }

    Volume3 mask_float(atlas_mask.grid);
    for (std::size_t i = 0; i < atlas_mask.data.size(); ++i)
        mask_float.data[i] = atlas_mask.data[i] ? 1.0 : 0.0;

    BinaryMask3 out(native_grid);
    for (int z = 0; z < native_grid.dims[2]; ++z)
        for (int y = 0; y < native_grid.dims[1]; ++y)
            for (int x = 0; x < native_grid.dims[0]; ++x) {
                Point3 p = native_grid.voxel_to_world(x, y, z);
                for (const auto& inv : inverses) p = apply_transform(inv, p);
                out.set(x, y, z, sample(mask_float, p, Interpolation::Linear, 0.0) >= 0.5);
            }
    return out;
}

} // namespace bxt
