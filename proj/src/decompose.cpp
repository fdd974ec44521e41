#include "bxt/decompose.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "bxt/morphology.hpp"
#include "bxt/volume_ops.hpp"

namespace bxt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

WeightMap build_weight_map(const BinaryMask3& atlas_mask, double lambda, int erosion_radius,
                           int dilation_radius) {
    if (lambda < 0.0) throw Error("lambda must be >= 0");
    WeightMap w;
    w.lambda = lambda;
    w.eroded = erode(atlas_mask, erosion_radius);
    w.dilated = dilate(atlas_mask, dilation_radius);
    if (w.eroded.count() == 0) throw Error("atlas mask too thin");
    w.values = Volume3(atlas_mask.grid);
    for (std::size_t i = 0; i < w.values.data.size(); ++i) {
        if (w.eroded.data[i])
            w.values.data[i] = kInf;
        else if (w.dilated.data[i])
            w.values.data[i] = lambda;
        else
            w.values.data[i] = 0.0;
    }
    return w;
}

VectorField3 shrink_vector(const VectorField3& p, double gamma) {
    if (gamma < 0.0) throw Error("shrink radius must be >= 0");
    VectorField3 out = p;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double nx = p.comp[0][i], ny = p.comp[1][i], nz = p.comp[2][i];
        const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
        if (norm > gamma) {
            const double s = gamma / norm;
            out.comp[0][i] = nx * s;
            out.comp[1][i] = ny * s;
            out.comp[2][i] = nz * s;
        }
    }
    return out;
}

Volume3 soft_threshold(const Volume3& v, const Volume3& thresholds) {
    require_same_grid(v.grid, thresholds.grid, "soft threshold");
    Volume3 out(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const double t = thresholds.data[i];
        if (std::isinf(t)) {
            out.data[i] = 0.0;
            continue;
        }
        const double x = v.data[i];
        const double mag = std::abs(x) - t;
        out.data[i] = mag > 0.0 ? (x > 0.0 ? mag : -mag) : 0.0;
    }
    return out;
}

namespace {

struct Projector {
    const PcaBasis* basis;

    // r = (Id - B B^T) w, alpha = B^T w
    void apply(const std::vector<double>& w, std::vector<double>& alpha,
               std::vector<double>& r) const {
        const int k = basis->mode_count();
        alpha.assign(k, 0.0);
        r = w;
        for (int m = 0; m < k; ++m) {
            const auto& mode = basis->modes[m].data;
            double dot = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) dot += mode[i] * w[i];
            alpha[m] = dot;
        }
        for (int m = 0; m < k; ++m) {
            const double a = alpha[m];
            if (a == 0.0) continue;
            const auto& mode = basis->modes[m].data;
            for (std::size_t i = 0; i < r.size(); ++i) r[i] -= a * mode[i];
        }
    }
};

double tv_norm(const Volume3& t) {
    const VectorField3 g = gradient(t);
    double sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        sum += std::sqrt(g.comp[0][i] * g.comp[0][i] + g.comp[1][i] * g.comp[1][i] +
                         g.comp[2][i] * g.comp[2][i]);
    return sum;
}

double sparse_norm(const Volume3& s, const Volume3& weights) {
    double sum = 0.0;
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        const double w = weights.data[i];
        if (std::isinf(w)) continue; // S is exactly zero there
        sum += w * std::abs(s.data[i]);
    }
    return sum;
}

} // namespace

double energy(const DecompositionInput& input, const Volume3& l_hat, const Volume3& sparse,
              const Volume3& tv, const std::vector<double>& alpha) {
    const PcaBasis& basis = *input.basis;
    const WeightMap& weights = *input.weights;
    require_same_grid(input.image.grid, basis.grid(), "decomposition basis");
    require_same_grid(input.image.grid, weights.values.grid, "decomposition weights");

    for (std::size_t i = 0; i < sparse.data.size(); ++i) {
        if (std::isinf(weights.values.data[i]) && sparse.data[i] != 0.0)
            throw Error("nonzero sparse component at an infinite-weight voxel");
        const double residual = (input.image.data[i] - basis.mean.data[i]) -
                                (l_hat.data[i] + sparse.data[i] + tv.data[i]);
        if (std::abs(residual) > 1e-8)
            throw Error("decomposition constraint violated: L_hat + S + T != I - M");
    }

    const Volume3 fit = reconstruct(basis, alpha);
    double quad = 0.0;
    for (std::size_t i = 0; i < l_hat.data.size(); ++i) {
        const double d = l_hat.data[i] - fit.data[i];
        quad += d * d;
    }
    return 0.5 * quad + input.gamma * tv_norm(tv) + sparse_norm(sparse, weights.values);
}

DecompositionResult decompose(const DecompositionInput& input, const SolverConfig& cfg) {
    const PcaBasis& basis = *input.basis;
    const WeightMap& wm = *input.weights;
    const Grid3& g = input.image.grid;
    require_same_grid(g, basis.grid(), "decomposition basis");
    require_same_grid(g, wm.values.grid, "decomposition weights");
    if (input.gamma < 0.0) throw Error("gamma must be >= 0");
    if (basis.mode_count() > 0 && basis.orthonormality_error() > 1e-5)
        throw Error("non-orthonormal basis");

    const std::size_t n = g.voxel_count();
    std::vector<double> ihat(n);
    for (std::size_t i = 0; i < n; ++i)
        ihat[i] = input.image.data[i] - basis.mean.data[i];

    // Step sizes for the saddle problem in (S, T) with dual field on grad T.
    // Stability: 1/tau - sigma L_K^2 >= 1 (joint Lipschitz constant of the
    // projector quadratic is 2).
    const double lk2 = 4.0 * (1.0 / (g.spacing[0] * g.spacing[0]) +
                              1.0 / (g.spacing[1] * g.spacing[1]) +
                              1.0 / (g.spacing[2] * g.spacing[2]));
    double tau = 0.35;
    double sigma = (1.0 / tau - 1.0 - 0.05) / lk2;
    const double step_product = tau * sigma;

    Volume3 sparse(g), tv(g);
    VectorField3 dual(g);
    if (cfg.init == "random") {
        std::mt19937_64 rng(cfg.init_seed);
        double scale = 0.0;
        for (double v : ihat) scale = std::max(scale, std::abs(v));
        if (scale == 0.0) scale = 1.0;
        auto uni = [&rng]() {
            return 2.0 * (static_cast<double>(rng()) / static_cast<double>(UINT64_MAX)) - 1.0;
        };
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isinf(wm.values.data[i])) sparse.data[i] = scale * uni();
            tv.data[i] = scale * uni();
        }
        for (auto& c : dual.comp)
            for (double& v : c) v = input.gamma * uni();
        dual = shrink_vector(dual, input.gamma);
    }

    Projector proj{&basis};
    std::vector<double> alpha, r, w(n);

    DecompositionResult result;
    double best = std::numeric_limits<double>::infinity();
    Volume3 best_sparse = sparse, best_tv = tv;

    Volume3 thresholds(g);
    auto set_thresholds = [&](double t) {
        for (std::size_t i = 0; i < n; ++i) {
            const double lw = wm.values.data[i];
            thresholds.data[i] = std::isinf(lw) ? kInf : t * lw;
        }
    };
    set_thresholds(tau);

    int it = 0;
    for (it = 1; it <= cfg.max_iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) w[i] = ihat[i] - sparse.data[i] - tv.data[i];
        proj.apply(w, alpha, r);

        // Energy of the current iterate (reuses the projector residual).
        double quad = 0.0;
        for (double v : r) quad += v * v;
        const double e = 0.5 * quad + input.gamma * tv_norm(tv) + sparse_norm(sparse, wm.values);
        if (!std::isfinite(e)) {
            result.energy_trace.emplace_back(it, e);
            throw Error("solver diverged at iteration " + std::to_string(it));
        }
        if (e < best) {
            best = e;
            best_sparse = sparse;
            best_tv = tv;
        }
        result.energy_trace.emplace_back(it, best);

        if (result.energy_trace.size() > 10) {
            const double prev = result.energy_trace[result.energy_trace.size() - 11].second;
            const double scale = std::max(std::abs(best), 1e-12);
            const double window_change = (prev - best) / scale;
            // The raw energy must also have settled onto the incumbent;
            // otherwise the startup plateau (dual warm-up) looks like a stall.
            const double settled = (e - best) / scale;
            if (window_change < cfg.tolerance && settled <= 100.0 * cfg.tolerance) {
                result.converged = true;
                break;
            }
        }

        const Volume3 div_dual = divergence(dual);
        Volume3 s_arg(g);
        for (std::size_t i = 0; i < n; ++i) s_arg.data[i] = sparse.data[i] + tau * r[i];
        Volume3 s_new = soft_threshold(s_arg, thresholds);
        Volume3 t_new(g);
        for (std::size_t i = 0; i < n; ++i)
            t_new.data[i] = tv.data[i] + tau * (r[i] + div_dual.data[i]);

        // Dual ascent on the extrapolated T, then project to the gamma ball.
        Volume3 t_bar(g);
        for (std::size_t i = 0; i < n; ++i) t_bar.data[i] = 2.0 * t_new.data[i] - tv.data[i];
        const VectorField3 grad_bar = gradient(t_bar);
        VectorField3 dual_new = dual;
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < n; ++i)
                dual_new.comp[c][i] += sigma * grad_bar.comp[c][i];
        dual_new = shrink_vector(dual_new, input.gamma);

        if (cfg.adaptive_steps && it % 10 == 0) {
            // Residual balancing in the adaptive-PDHG style: grow the step of
            // the side whose residual dominates, keeping the product fixed
            // and the stability inequality intact.
            double pres = 0.0, dres = 0.0;
            const VectorField3 grad_dt = gradient([&] {
                Volume3 dt(g);
                for (std::size_t i = 0; i < n; ++i) dt.data[i] = tv.data[i] - t_new.data[i];
                return dt;
            }());
            const VectorField3 ddual = [&] {
                VectorField3 d(g);
                for (int c = 0; c < 3; ++c)
                    for (std::size_t i = 0; i < n; ++i)
                        d.comp[c][i] = dual.comp[c][i] - dual_new.comp[c][i];
                return d;
            }();
            const Volume3 div_ddual = divergence(ddual);
            for (std::size_t i = 0; i < n; ++i) {
                const double ps = (sparse.data[i] - s_new.data[i]) / tau;
                const double pt = (tv.data[i] - t_new.data[i]) / tau + div_ddual.data[i];
                pres += ps * ps + pt * pt;
            }
            for (int c = 0; c < 3; ++c)
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = ddual.comp[c][i] / sigma - grad_dt.comp[c][i];
                    dres += d * d;
                }
            pres = std::sqrt(pres);
            dres = std::sqrt(dres);
            double tau_next = tau;
            if (pres > 10.0 * dres)
                tau_next = tau * 1.5;
            else if (dres > 10.0 * pres)
                tau_next = tau / 1.5;
            if (tau_next != tau) {
                const double sigma_next = step_product / tau_next;
                if (1.0 / tau_next - sigma_next * lk2 >= 1.0 + 1e-3) {
                    tau = tau_next;
                    sigma = sigma_next;
                    set_thresholds(tau);
                }
            }
        }

        sparse = std::move(s_new);
        tv = std::move(t_new);
        dual = std::move(dual_new);
    }
    result.iterations_used = std::min(it, cfg.max_iterations);

    // Assemble the best iterate; the split holds exactly by construction.
    result.sparse = std::move(best_sparse);
    result.tv = std::move(best_tv);
    result.l_hat = Volume3(g);
    for (std::size_t i = 0; i < n; ++i)
        result.l_hat.data[i] = ihat[i] - result.sparse.data[i] - result.tv.data[i];
    result.alpha = project(basis, result.l_hat);
    return result;
}

Volume3 quasi_normal(const DecompositionResult& result, const PcaBasis& basis) {
    require_same_grid(result.l_hat.grid, basis.grid(), "quasi-normal");
    Volume3 out(result.l_hat.grid);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = basis.mean.data[i] + result.l_hat.data[i];
    return out;
}

} // namespace bxt
