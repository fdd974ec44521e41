#include "bxt/registration.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bxt/errors.hpp"
#include "bxt/gaussian.hpp"
#include "bxt/volume_ops.hpp"

namespace bxt {

namespace {

double variance_floor(const Volume3& v) {
    double lo = v.data[0], hi = v.data[0];
    for (double x : v.data) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double range = hi - lo;
    return 1e-10 * range * range + 1e-300;
}

struct LnccMoments {
    Volume3 mu_f, mu_m, var_f, var_m, cov;
    Volume3 norm;
    double eps_f = 0.0, eps_m = 0.0;
};

LnccMoments lncc_moments(const Volume3& f, const Volume3& m, double sigma_mm) {
    LnccMoments mo;
    mo.norm = smooth_normalizer(f.grid, sigma_mm);
    auto win = [&](const Volume3& v) {
        Volume3 s = smooth_gaussian(v, sigma_mm);
        for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] /= mo.norm.data[i];
        return s;
    };
    mo.mu_f = win(f);
    mo.mu_m = win(m);
    Volume3 ff(f.grid), mm(f.grid), fm(f.grid);
    for (std::size_t i = 0; i < f.data.size(); ++i) {
        ff.data[i] = f.data[i] * f.data[i];
        mm.data[i] = m.data[i] * m.data[i];
        fm.data[i] = f.data[i] * m.data[i];
    }
    mo.var_f = win(ff);
    mo.var_m = win(mm);
    mo.cov = win(fm);
    for (std::size_t i = 0; i < f.data.size(); ++i) {
        mo.var_f.data[i] -= mo.mu_f.data[i] * mo.mu_f.data[i];
        mo.var_m.data[i] -= mo.mu_m.data[i] * mo.mu_m.data[i];
        mo.cov.data[i] -= mo.mu_f.data[i] * mo.mu_m.data[i];
    }
    mo.eps_f = variance_floor(f);
    mo.eps_m = variance_floor(m);
    return mo;
}

/// Score, and optionally d(score)/d(moving voxel) via the adjoint windows.
double lncc_impl(const Volume3& f, const Volume3& m, double sigma_mm, const BinaryMask3* mask,
                 std::vector<double>* grad_out) {
    require_same_grid(f.grid, m.grid, "lncc inputs");
    if (mask) {
        require_same_grid(f.grid, mask->grid, "lncc mask");
        if (mask->count() == 0) throw Error("empty mask");
    }
    const LnccMoments mo = lncc_moments(f, m, sigma_mm);
    const std::size_t n = f.data.size();

    double sum = 0.0;
    std::size_t count = 0;
    std::vector<double> a_field, b_field;
    if (grad_out) {
        a_field.assign(n, 0.0);
        b_field.assign(n, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (mask && !mask->data[i]) continue;
        const double vf = mo.var_f.data[i], vm = mo.var_m.data[i];
        ++count;
        if (vf <= mo.eps_f || vm <= mo.eps_m) continue;
        const double c = mo.cov.data[i];
        sum += c * c / (vf * vm);
        if (grad_out) {
            a_field[i] = 2.0 * c / (vf * vm);
            b_field[i] = -c * c / (vf * vm * vm);
        }
    }
    if (count == 0) return 0.0;
    const double score = sum / static_cast<double>(count);
    if (!grad_out) return score;

    // d score / d m_j = f_j G(A/n) - G(A mu_f / n) + 2 m_j G(B/n) - 2 G(B mu_m / n)
    Volume3 an(f.grid), afn(f.grid), bn(f.grid), bmn(f.grid);
    for (std::size_t i = 0; i < n; ++i) {
        const double inv = 1.0 / mo.norm.data[i];
        an.data[i] = a_field[i] * inv;
        afn.data[i] = a_field[i] * mo.mu_f.data[i] * inv;
        bn.data[i] = b_field[i] * inv;
        bmn.data[i] = b_field[i] * mo.mu_m.data[i] * inv;
    }
    const Volume3 g_an = smooth_gaussian(an, sigma_mm);
    const Volume3 g_afn = smooth_gaussian(afn, sigma_mm);
    const Volume3 g_bn = smooth_gaussian(bn, sigma_mm);
    const Volume3 g_bmn = smooth_gaussian(bmn, sigma_mm);
    grad_out->assign(n, 0.0);
    const double inv_count = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < n; ++i)
        (*grad_out)[i] = inv_count * (f.data[i] * g_an.data[i] - g_afn.data[i] +
                                      2.0 * m.data[i] * g_bn.data[i] - 2.0 * g_bmn.data[i]);
    return score;
}

VectorField3 spatial_gradient_central(const Volume3& v) {
    const auto& g = v.grid;
    VectorField3 out(g);
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const std::size_t i = g.index(x, y, z);
                const int xm = std::max(x - 1, 0), xp = std::min(x + 1, nx - 1);
                const int ym = std::max(y - 1, 0), yp = std::min(y + 1, ny - 1);
                const int zm = std::max(z - 1, 0), zp = std::min(z + 1, nz - 1);
                out.comp[0][i] = (v.at(xp, y, z) - v.at(xm, y, z)) / ((xp - xm) * g.spacing[0]);
                out.comp[1][i] = (v.at(x, yp, z) - v.at(x, ym, z)) / ((yp - ym) * g.spacing[1]);
                out.comp[2][i] = (v.at(x, y, zp) - v.at(x, y, zm)) / ((zp - zm) * g.spacing[2]);
            }
    return out;
}

Point3 sample_vector(const VectorField3& f, const Point3& world) {
    const auto v = f.grid.world_to_voxel(world);
    Point3 out{0, 0, 0};
    const int nx = f.grid.dims[0], ny = f.grid.dims[1], nz = f.grid.dims[2];
    if (v[0] < 0 || v[1] < 0 || v[2] < 0 || v[0] > nx - 1 || v[1] > ny - 1 || v[2] > nz - 1)
        return out;
    int x0 = std::clamp(static_cast<int>(std::floor(v[0])), 0, std::max(nx - 2, 0));
    int y0 = std::clamp(static_cast<int>(std::floor(v[1])), 0, std::max(ny - 2, 0));
    int z0 = std::clamp(static_cast<int>(std::floor(v[2])), 0, std::max(nz - 2, 0));
    const double tx = v[0] - x0, ty = v[1] - y0, tz = v[2] - z0;
    const int x1 = std::min(x0 + 1, nx - 1), y1 = std::min(y0 + 1, ny - 1),
              z1 = std::min(z0 + 1, nz - 1);
    for (int c = 0; c < 3; ++c) {
        auto at = [&](int x, int y, int z) { return f.comp[c][f.grid.index(x, y, z)]; };
        const double c00 = at(x0, y0, z0) + tx * (at(x1, y0, z0) - at(x0, y0, z0));
        const double c10 = at(x0, y1, z0) + tx * (at(x1, y1, z0) - at(x0, y1, z0));
        const double c01 = at(x0, y0, z1) + tx * (at(x1, y0, z1) - at(x0, y0, z1));
        const double c11 = at(x0, y1, z1) + tx * (at(x1, y1, z1) - at(x0, y1, z1));
        const double c0 = c00 + ty * (c10 - c00);
        const double c1 = c01 + ty * (c11 - c01);
        out[c] = c0 + tz * (c1 - c0);
    }
    return out;
}

Point3 center_of_gravity(const Volume3& v) {
    double wsum = 0.0;
    Point3 c{0, 0, 0};
    for (int z = 0; z < v.grid.dims[2]; ++z)
        for (int y = 0; y < v.grid.dims[1]; ++y)
            for (int x = 0; x < v.grid.dims[0]; ++x) {
                const double w = std::max(v.at(x, y, z), 0.0);
                if (w == 0.0) continue;
                const auto p = v.grid.voxel_to_world(x, y, z);
                c[0] += w * p[0];
                c[1] += w * p[1];
                c[2] += w * p[2];
                wsum += w;
            }
    if (wsum == 0.0) return v.grid.voxel_to_world((v.grid.dims[0] - 1) / 2.0,
                                                  (v.grid.dims[1] - 1) / 2.0,
                                                  (v.grid.dims[2] - 1) / 2.0);
    return {c[0] / wsum, c[1] / wsum, c[2] / wsum};
}

BinaryMask3 downsample_mask(const BinaryMask3& m, const Grid3& onto) {
    BinaryMask3 out(onto);
    for (int z = 0; z < onto.dims[2]; ++z)
        for (int y = 0; y < onto.dims[1]; ++y)
            for (int x = 0; x < onto.dims[0]; ++x) {
                const auto p = onto.voxel_to_world(x, y, z);
                const auto v = m.grid.world_to_voxel(p);
                const int sx = std::clamp(static_cast<int>(std::lround(v[0])), 0, m.grid.dims[0] - 1);
                const int sy = std::clamp(static_cast<int>(std::lround(v[1])), 0, m.grid.dims[1] - 1);
                const int sz = std::clamp(static_cast<int>(std::lround(v[2])), 0, m.grid.dims[2] - 1);
                out.set(x, y, z, m.at(sx, sy, sz));
            }
    return out;
}

struct Pyramid {
    std::vector<Volume3> fixed, moving;
    std::vector<BinaryMask3> masks; // empty when no mask
};

Pyramid build_pyramid(const Volume3& moving, const Volume3& fixed, const BinaryMask3* mask,
                      int levels) {
    Pyramid p;
    p.fixed.push_back(fixed);
    p.moving.push_back(moving);
    for (int l = 1; l < levels; ++l) {
        const auto& prev = p.fixed.back();
        if (prev.grid.dims[0] < 8 || prev.grid.dims[1] < 8 || prev.grid.dims[2] < 8) break;
        p.fixed.push_back(downsample2(prev));
        p.moving.push_back(downsample2(p.moving.back()));
    }
    if (mask)
        for (const auto& f : p.fixed) p.masks.push_back(downsample_mask(*mask, f.grid));
    return p;
}

// Affine parameterization about a fixed center: x -> A (x - c) + c + t.
struct AffineParams {
    std::array<double, 9> a{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Point3 t{0, 0, 0};
    Point3 center{0, 0, 0};

    AffineTransform to_transform() const {
        AffineTransform m;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) m.m[4 * r + c] = a[3 * r + c];
            m.m[4 * r + 3] = t[r] + center[r] - a[3 * r + 0] * center[0] -
                             a[3 * r + 1] * center[1] - a[3 * r + 2] * center[2];
        }
        return m;
    }

    static AffineParams from_transform(const AffineTransform& m, const Point3& center) {
        AffineParams p;
        p.center = center;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) p.a[3 * r + c] = m.m[4 * r + c];
        const Point3 ac = {p.a[0] * center[0] + p.a[1] * center[1] + p.a[2] * center[2],
                           p.a[3] * center[0] + p.a[4] * center[1] + p.a[5] * center[2],
                           p.a[6] * center[0] + p.a[7] * center[1] + p.a[8] * center[2]};
        for (int r = 0; r < 3; ++r) p.t[r] = m.m[4 * r + 3] - center[r] + ac[r];
        return p;
    }
};

Volume3 warp_affine(const Volume3& moving, const Grid3& onto, const AffineTransform& t,
                    double padding) {
    return resample(moving, onto, [&](const Point3& p) { return t.apply(p); }, padding,
                    Interpolation::Linear);
}

} // namespace

double lncc(const Volume3& a, const Volume3& b, double window_sigma_mm, const BinaryMask3* mask) {
    if (!(window_sigma_mm > 0.0)) throw Error("lncc window sigma must be > 0");
    return lncc_impl(a, b, window_sigma_mm, mask, nullptr);
}

AffineRegResult register_affine(const Volume3& moving, const Volume3& fixed,
                                const AffineRegOptions& opts) {
    if (opts.mask) require_same_grid(fixed.grid, opts.mask->grid, "registration mask");
    const Pyramid pyr = build_pyramid(moving, fixed, opts.mask, opts.pyramid_levels);

    const Point3 center = fixed.grid.voxel_to_world((fixed.grid.dims[0] - 1) / 2.0,
                                                    (fixed.grid.dims[1] - 1) / 2.0,
                                                    (fixed.grid.dims[2] - 1) / 2.0);
    AffineTransform init = AffineTransform::identity();
    if (opts.init) {
        init = *opts.init;
    } else if (opts.cog_init) {
        const Point3 cm = center_of_gravity(moving);
        const Point3 cf = center_of_gravity(fixed);
        init = AffineTransform::translation(cm[0] - cf[0], cm[1] - cf[1], cm[2] - cf[2]);
    }
    AffineParams params = AffineParams::from_transform(init, center);

    // Characteristic lever arm for scaling matrix-entry gradients.
    double radius = 0.0;
    for (int a = 0; a < 3; ++a)
        radius += std::pow(0.5 * (fixed.grid.dims[a] - 1) * fixed.grid.spacing[a], 2);
    radius = std::sqrt(radius / 3.0);

    const double min_spacing =
        std::min({fixed.grid.spacing[0], fixed.grid.spacing[1], fixed.grid.spacing[2]});

    for (int level = static_cast<int>(pyr.fixed.size()) - 1; level >= 0; --level) {
        const Volume3& f = pyr.fixed[level];
        const Volume3& m = pyr.moving[level];
        const BinaryMask3* mask = pyr.masks.empty() ? nullptr : &pyr.masks[level];
        const VectorField3 mgrad = spatial_gradient_central(m);

        auto score_at = [&](const AffineParams& p) {
            const Volume3 warped = warp_affine(m, f.grid, p.to_transform(), opts.padding);
            return lncc_impl(f, warped, opts.window_sigma_mm, mask, nullptr);
        };

        double step = 2.0 * min_spacing * (1 << level);
        double score = score_at(params);
        for (int it = 0; it < opts.iterations && step > 1e-4 * min_spacing; ++it) {
            const AffineTransform t = params.to_transform();
            const Volume3 warped = warp_affine(m, f.grid, t, opts.padding);
            std::vector<double> g;
            lncc_impl(f, warped, opts.window_sigma_mm, mask, &g);

            std::array<double, 9> da{};
            Point3 dt{0, 0, 0};
            for (int z = 0; z < f.grid.dims[2]; ++z)
                for (int y = 0; y < f.grid.dims[1]; ++y)
                    for (int x = 0; x < f.grid.dims[0]; ++x) {
                        const std::size_t i = f.grid.index(x, y, z);
                        if (g[i] == 0.0) continue;
                        const Point3 pfix = f.grid.voxel_to_world(x, y, z);
                        const Point3 psrc = t.apply(pfix);
                        const Point3 gm = sample_vector(mgrad, psrc);
                        const Point3 rel = {pfix[0] - center[0], pfix[1] - center[1],
                                            pfix[2] - center[2]};
                        for (int r = 0; r < 3; ++r) {
                            const double gr = g[i] * gm[r];
                            dt[r] += gr;
                            for (int c = 0; c < 3; ++c) da[3 * r + c] += gr * rel[c];
                        }
                    }

            // Scale so one unit of step ~ one mm of motion at the lever arm.
            double norm = 0.0;
            for (double v : da) norm += v * v * radius * radius;
            for (double v : dt) norm += v * v;
            norm = std::sqrt(norm);
            if (norm < 1e-300) break;

            bool accepted = false;
            while (step > 1e-4 * min_spacing) {
                AffineParams trial = params;
                for (int k = 0; k < 9; ++k) trial.a[k] += step * da[k] * radius / norm;
                for (int k = 0; k < 3; ++k) trial.t[k] += step * dt[k] / norm;
                const double s = score_at(trial);
                if (s > score) {
                    params = trial;
                    score = s;
                    step *= 1.4;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;
        }
    }

    AffineRegResult result;
    const Volume3 warped_init = warp_affine(moving, fixed.grid, init, opts.padding);
    const Volume3 warped_final =
        warp_affine(moving, fixed.grid, params.to_transform(), opts.padding);
    result.initial_score = lncc_impl(fixed, warped_init, opts.window_sigma_mm, opts.mask, nullptr);
    result.final_score = lncc_impl(fixed, warped_final, opts.window_sigma_mm, opts.mask, nullptr);
    if (result.final_score >= result.initial_score) {
        result.transform = params.to_transform();
    } else {
        result.transform = init;
        result.final_score = result.initial_score;
        result.warning_no_improvement = true;
    }
    if (result.final_score == result.initial_score && !opts.init && !opts.cog_init) {
        // Flat landscape (e.g. featureless moving image): flag it.
        result.warning_no_improvement = true;
    }
    return result;
}

namespace {

double bending_energy(const BsplineTransform& t, std::array<std::vector<double>, 3>* grad) {
    const auto& d = t.grid_dims;
    const double inv2 = 1.0 / (t.spacing_mm * t.spacing_mm);
    double energy = 0.0;
    if (grad)
        for (auto& g : *grad) g.assign(t.control_count(), 0.0);
    const int strides[3] = {1, d[0], d[0] * d[1]};
    for (int axis = 0; axis < 3; ++axis) {
        const int s = strides[axis];
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i) {
                    const int idx[3] = {i, j, k};
                    if (idx[axis] < 1 || idx[axis] > d[axis] - 2) continue;
                    const std::size_t c = t.control_index(i, j, k);
                    for (int comp = 0; comp < 3; ++comp) {
                        const auto& co = t.coef[comp];
                        const double dd = (co[c + s] - 2.0 * co[c] + co[c - s]) * inv2;
                        energy += dd * dd;
                        if (grad) {
                            auto& g = (*grad)[comp];
                            g[c + s] += 2.0 * dd * inv2;
                            g[c] += -4.0 * dd * inv2;
                            g[c - s] += 2.0 * dd * inv2;
                        }
                    }
                }
    }
    return energy;
}

Volume3 warp_bspline(const Volume3& moving, const Grid3& onto, const BsplineTransform& t,
                     double padding) {
    return resample(moving, onto, [&](const Point3& p) { return t.apply(p); }, padding,
                    Interpolation::Linear);
}

// Cubic B-spline weights for the 4 controls covering fractional position f.
void bspline_weights(double f, double w[4]) {
    const double f2 = f * f, f3 = f2 * f;
    w[0] = (1.0 - 3.0 * f + 3.0 * f2 - f3) / 6.0;
    w[1] = (4.0 - 6.0 * f2 + 3.0 * f3) / 6.0;
    w[2] = (1.0 + 3.0 * f + 3.0 * f2 - 3.0 * f3) / 6.0;
    w[3] = f3 / 6.0;
}

} // namespace

BsplineRegResult register_bspline(const Volume3& moving, const Volume3& fixed,
                                  const BsplineRegOptions& opts) {
    const double max_spacing =
        std::max({fixed.grid.spacing[0], fixed.grid.spacing[1], fixed.grid.spacing[2]});
    if (!(opts.grid_spacing_mm > 2.0 * max_spacing))
        throw Error("B-spline grid spacing must exceed twice the voxel spacing");
    if (opts.mask) require_same_grid(fixed.grid, opts.mask->grid, "registration mask");

    BsplineTransform t = opts.init
                             ? *opts.init
                             : BsplineTransform::zero_for_domain(fixed.grid, opts.grid_spacing_mm);
    const BsplineTransform init = t;

    const Pyramid pyr = build_pyramid(moving, fixed, opts.mask, opts.pyramid_levels);
    const double min_spacing =
        std::min({fixed.grid.spacing[0], fixed.grid.spacing[1], fixed.grid.spacing[2]});

    for (int level = static_cast<int>(pyr.fixed.size()) - 1; level >= 0; --level) {
        const Volume3& f = pyr.fixed[level];
        const Volume3& m = pyr.moving[level];
        const BinaryMask3* mask = pyr.masks.empty() ? nullptr : &pyr.masks[level];
        const VectorField3 mgrad = spatial_gradient_central(m);

        auto objective_at = [&](const BsplineTransform& tt) {
            const Volume3 warped = warp_bspline(m, f.grid, tt, opts.padding);
            const double s = lncc_impl(f, warped, opts.window_sigma_mm, mask, nullptr);
            return s - opts.bending_weight * bending_energy(tt, nullptr);
        };

        double step = 1.0 * min_spacing * (1 << level);
        double obj = objective_at(t);
        for (int it = 0; it < opts.iterations && step > 1e-3 * min_spacing; ++it) {
            const Volume3 warped = warp_bspline(m, f.grid, t, opts.padding);
            std::vector<double> g;
            lncc_impl(f, warped, opts.window_sigma_mm, mask, &g);

            std::array<std::vector<double>, 3> grad;
            for (auto& gc : grad) gc.assign(t.control_count(), 0.0);
            for (int z = 0; z < f.grid.dims[2]; ++z)
                for (int y = 0; y < f.grid.dims[1]; ++y)
                    for (int x = 0; x < f.grid.dims[0]; ++x) {
                        const std::size_t i = f.grid.index(x, y, z);
                        if (g[i] == 0.0) continue;
                        const Point3 pfix = f.grid.voxel_to_world(x, y, z);
                        const Point3 psrc = t.apply(pfix);
                        const Point3 gm = sample_vector(mgrad, psrc);
                        double fr[3];
                        int base[3];
                        for (int a = 0; a < 3; ++a) {
                            const double idx = (pfix[a] - t.grid_origin[a]) / t.spacing_mm;
                            base[a] = static_cast<int>(std::floor(idx));
                            fr[a] = idx - base[a];
                        }
                        double wx[4], wy[4], wz[4];
                        bspline_weights(fr[0], wx);
                        bspline_weights(fr[1], wy);
                        bspline_weights(fr[2], wz);
                        for (int ok = 0; ok < 4; ++ok) {
                            const int kk = std::clamp(base[2] + ok - 1, 0, t.grid_dims[2] - 1);
                            for (int oj = 0; oj < 4; ++oj) {
                                const int jj = std::clamp(base[1] + oj - 1, 0, t.grid_dims[1] - 1);
                                const double wyz = wy[oj] * wz[ok];
                                for (int oi = 0; oi < 4; ++oi) {
                                    const int ii =
                                        std::clamp(base[0] + oi - 1, 0, t.grid_dims[0] - 1);
                                    const double w = g[i] * wx[oi] * wyz;
                                    const std::size_t ci = t.control_index(ii, jj, kk);
                                    grad[0][ci] += w * gm[0];
                                    grad[1][ci] += w * gm[1];
                                    grad[2][ci] += w * gm[2];
                                }
                            }
                        }
                    }
            std::array<std::vector<double>, 3> bend_grad;
            bending_energy(t, &bend_grad);
            double gmax = 0.0;
            for (int c = 0; c < 3; ++c)
                for (std::size_t ci = 0; ci < grad[c].size(); ++ci) {
                    grad[c][ci] -= opts.bending_weight * bend_grad[c][ci];
                    gmax = std::max(gmax, std::abs(grad[c][ci]));
                }
            if (gmax < 1e-300) break;

            bool accepted = false;
            while (step > 1e-3 * min_spacing) {
                BsplineTransform trial = t;
                for (int c = 0; c < 3; ++c)
                    for (std::size_t ci = 0; ci < grad[c].size(); ++ci)
                        trial.coef[c][ci] += step * grad[c][ci] / gmax;
                const double o = objective_at(trial);
                if (o > obj) {
                    t = std::move(trial);
                    obj = o;
                    step *= 1.3;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;
        }
    }

    BsplineRegResult result;
    {
        const Volume3 wi = warp_bspline(moving, fixed.grid, init, opts.padding);
        const Volume3 wf = warp_bspline(moving, fixed.grid, t, opts.padding);
        result.initial_score =
            lncc_impl(fixed, wi, opts.window_sigma_mm, opts.mask, nullptr) -
            opts.bending_weight * bending_energy(init, nullptr);
        result.final_score = lncc_impl(fixed, wf, opts.window_sigma_mm, opts.mask, nullptr) -
                             opts.bending_weight * bending_energy(t, nullptr);
    }
    if (result.final_score >= result.initial_score) {
        result.transform = std::move(t);
        if (result.final_score == result.initial_score) result.warning_no_improvement = true;
    } else {
        result.transform = init;
        result.final_score = result.initial_score;
        result.warning_no_improvement = true;
    }
    return result;
}

DenseDisplacementField invert_bspline(const BsplineTransform& t, const Grid3& domain,
                                      double tolerance_voxels, int max_iterations) {
    // Folding check on the domain lattice.
    for (int z = 0; z < domain.dims[2]; ++z)
        for (int y = 0; y < domain.dims[1]; ++y)
            for (int x = 0; x < domain.dims[0]; ++x) {
                const auto jac = t.jacobian(domain.voxel_to_world(x, y, z));
                const double det = jac[0] * (jac[4] * jac[8] - jac[5] * jac[7]) -
                                   jac[1] * (jac[3] * jac[8] - jac[5] * jac[6]) +
                                   jac[2] * (jac[3] * jac[7] - jac[4] * jac[6]);
                if (det <= 0.0) throw Error("non-invertible deformation: folding detected");
            }

    const double tol_mm =
        tolerance_voxels * std::min({domain.spacing[0], domain.spacing[1], domain.spacing[2]});
    DenseDisplacementField inv;
    inv.grid = domain;
    inv.field = VectorField3(domain);

    for (int iter = 0; iter < max_iterations; ++iter) {
        // v  <-  -u(y + v), then verify the round trip with the updated field.
        for (int z = 0; z < domain.dims[2]; ++z)
            for (int y = 0; y < domain.dims[1]; ++y)
                for (int x = 0; x < domain.dims[0]; ++x) {
                    const std::size_t i = domain.index(x, y, z);
                    const Point3 p = domain.voxel_to_world(x, y, z);
                    const Point3 q = {p[0] + inv.field.comp[0][i], p[1] + inv.field.comp[1][i],
                                      p[2] + inv.field.comp[2][i]};
                    const Point3 u = t.displacement(q);
                    inv.field.comp[0][i] = -u[0];
                    inv.field.comp[1][i] = -u[1];
                    inv.field.comp[2][i] = -u[2];
                }
        double worst = 0.0;
        for (int z = 0; z < domain.dims[2]; ++z)
            for (int y = 0; y < domain.dims[1]; ++y)
                for (int x = 0; x < domain.dims[0]; ++x) {
                    const std::size_t i = domain.index(x, y, z);
                    const Point3 p = domain.voxel_to_world(x, y, z);
                    const Point3 q = {p[0] + inv.field.comp[0][i], p[1] + inv.field.comp[1][i],
                                      p[2] + inv.field.comp[2][i]};
                    const Point3 u = t.displacement(q);
                    const double rx = q[0] + u[0] - p[0];
                    const double ry = q[1] + u[1] - p[1];
                    const double rz = q[2] + u[2] - p[2];
                    worst = std::max(worst, std::sqrt(rx * rx + ry * ry + rz * rz));
                }
        if (worst <= tol_mm) return inv;
    }
    throw Error("non-invertible deformation: inversion did not reach tolerance");
}

} // namespace bxt
