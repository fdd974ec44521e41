// Independent reference implementations used by the test suites. Everything
// here favors directness over speed: brute-force loops, exhaustive
// enumeration, and certified iterative solves.
#ifndef BXT_TESTS_ORACLES_HPP
#define BXT_TESTS_ORACLES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "bxt/pca.hpp"
#include "bxt/volume.hpp"

namespace oracles {

using bxt::BinaryMask3;
using bxt::Grid3;
using bxt::VectorField3;
using bxt::Volume3;

inline Grid3 grid(int nx, int ny, int nz, double sx = 1.0, double sy = 1.0, double sz = 1.0) {
    Grid3 g;
    g.dims = {nx, ny, nz};
    g.spacing = {sx, sy, sz};
    return g;
}

inline Volume3 random_volume(const Grid3& g, std::uint32_t seed, double lo = -1.0,
                             double hi = 1.0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Volume3 v(g);
    for (double& x : v.data) x = dist(rng);
    return v;
}

inline BinaryMask3 random_mask(const Grid3& g, std::uint32_t seed, double density = 0.4) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    BinaryMask3 m(g);
    for (auto& x : m.data) x = dist(rng) < density ? 1 : 0;
    return m;
}

inline VectorField3 random_field(const Grid3& g, std::uint32_t seed) {
    std::mt19937 rng(seed + 7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    VectorField3 f(g);
    for (auto& c : f.comp)
        for (double& x : c) x = dist(rng);
    return f;
}

// ---- differential operators ------------------------------------------------

/// Forward-difference gradient written as an explicit per-voxel loop.
inline VectorField3 gradient_bruteforce(const Volume3& v) {
    const auto& g = v.grid;
    VectorField3 out(g);
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                const std::size_t i = g.index(x, y, z);
                out.comp[0][i] =
                    x + 1 < g.dims[0] ? (v.at(x + 1, y, z) - v.at(x, y, z)) / g.spacing[0] : 0.0;
                out.comp[1][i] =
                    y + 1 < g.dims[1] ? (v.at(x, y + 1, z) - v.at(x, y, z)) / g.spacing[1] : 0.0;
                out.comp[2][i] =
                    z + 1 < g.dims[2] ? (v.at(x, y, z + 1) - v.at(x, y, z)) / g.spacing[2] : 0.0;
            }
    return out;
}

inline double inner(const Volume3& a, const Volume3& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline double inner(const VectorField3& a, const VectorField3& b) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < a.comp[c].size(); ++i) s += a.comp[c][i] * b.comp[c][i];
    return s;
}

// ---- morphology ------------------------------------------------------------

inline std::vector<std::array<int, 3>> offsets18() {
    std::vector<std::array<int, 3>> offs;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int m = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (m >= 1 && m <= 2) offs.push_back({dx, dy, dz});
            }
    return offs;
}

inline BinaryMask3 dilate_bruteforce(const BinaryMask3& m) {
    const auto& g = m.grid;
    BinaryMask3 out = m;
    const auto offs = offsets18();
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x)
                for (const auto& o : offs) {
                    const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
                    if (nx >= 0 && ny >= 0 && nz >= 0 && nx < g.dims[0] && ny < g.dims[1] &&
                        nz < g.dims[2] && m.at(nx, ny, nz)) {
                        out.set(x, y, z, true);
                        break;
                    }
                }
    return out;
}

inline BinaryMask3 erode_bruteforce(const BinaryMask3& m) {
    const auto& g = m.grid;
    BinaryMask3 out = m;
    const auto offs = offsets18();
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                if (!m.at(x, y, z)) continue;
                for (const auto& o : offs) {
                    const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
                    const bool inside = nx >= 0 && ny >= 0 && nz >= 0 && nx < g.dims[0] &&
                                        ny < g.dims[1] && nz < g.dims[2];
                    if (inside && !m.at(nx, ny, nz)) {
                        out.set(x, y, z, false);
                        break;
                    }
                }
            }
    return out;
}

/// Flood-fill labeling; returns per-voxel component id (0 = background).
inline std::vector<int> label_bruteforce(const BinaryMask3& m, int connectivity) {
    const auto& g = m.grid;
    std::vector<std::array<int, 3>> offs;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int s = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (s == 0) continue;
                if (connectivity == 6 && s > 1) continue;
                if (connectivity == 18 && s > 2) continue;
                offs.push_back({dx, dy, dz});
            }
    std::vector<int> labels(m.data.size(), 0);
    int next = 0;
    for (std::size_t seed = 0; seed < m.data.size(); ++seed) {
        if (!m.data[seed] || labels[seed]) continue;
        ++next;
        std::vector<std::size_t> stack{seed};
        labels[seed] = next;
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            const int z = static_cast<int>(i / (static_cast<std::size_t>(g.dims[0]) * g.dims[1]));
            const std::size_t rem = i % (static_cast<std::size_t>(g.dims[0]) * g.dims[1]);
            const int y = static_cast<int>(rem / g.dims[0]);
            const int x = static_cast<int>(rem % g.dims[0]);
            for (const auto& o : offs) {
                const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
                if (nx < 0 || ny < 0 || nz < 0 || nx >= g.dims[0] || ny >= g.dims[1] ||
                    nz >= g.dims[2])
                    continue;
                const std::size_t ni = g.index(nx, ny, nz);
                if (m.data[ni] && !labels[ni]) {
                    labels[ni] = next;
                    stack.push_back(ni);
                }
            }
        }
    }
    return labels;
}

// ---- distances ---------------------------------------------------------

/// O(n^2) nearest true voxel in mm.
inline Volume3 distance_bruteforce(const BinaryMask3& m) {
    const auto& g = m.grid;
    std::vector<std::array<int, 3>> sites;
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x)
                if (m.at(x, y, z)) sites.push_back({x, y, z});
    Volume3 out(g);
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& s : sites) {
                    const double dx = (x - s[0]) * g.spacing[0];
                    const double dy = (y - s[1]) * g.spacing[1];
                    const double dz = (z - s[2]) * g.spacing[2];
                    best = std::min(best, dx * dx + dy * dy + dz * dz);
                }
                out.at(x, y, z) = std::sqrt(best);
            }
    return out;
}

inline double percentile_sorted(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    const double rank = p / 100.0 * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (rank - lo) * (v[hi] - v[lo]);
}

// ---- 1D total variation (ROF) ----------------------------------------------

/// Exact 1D TV denoising, min 0.5 sum (u-f)^2 + lam sum |u_{i+1}-u_i|, by the
/// taut-string construction: the solution is the increment sequence of the
/// taut string through the tube |s_i - F_i| <= lam with pinned ends, and the
/// taut string also minimizes the sum of squared increments, a tridiagonal
/// box QP solved here by projected coordinate sweeps to a fixed point.
inline std::vector<double> tv1d_taut_string(const std::vector<double>& f, double lam) {
    const int n = static_cast<int>(f.size());
    std::vector<double> cum(n + 1, 0.0);
    for (int i = 0; i < n; ++i) cum[i + 1] = cum[i] + f[i];
    std::vector<double> s = cum; // interior knots clipped into the tube
    for (int i = 1; i < n; ++i) s[i] = cum[i];

    auto clip = [&](int i, double v) {
        return std::min(cum[i] + lam, std::max(cum[i] - lam, v));
    };
    for (int sweep = 0; sweep < 2000000; ++sweep) {
        double moved = 0.0;
        for (int i = 1; i < n; ++i) {
            const double target = clip(i, 0.5 * (s[i - 1] + s[i + 1]));
            moved = std::max(moved, std::abs(target - s[i]));
            s[i] = target;
        }
        if (moved < 1e-15) break;
    }
    // fixed-point certificate
    for (int i = 1; i < n; ++i) {
        const double target = clip(i, 0.5 * (s[i - 1] + s[i + 1]));
        if (std::abs(target - s[i]) > 1e-12) throw std::runtime_error("taut string not settled");
    }
    std::vector<double> u(n);
    for (int i = 0; i < n; ++i) u[i] = s[i + 1] - s[i];
    return u;
}

inline double rof_objective_1d(const std::vector<double>& u, const std::vector<double>& f,
                               double lam) {
    double e = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) e += 0.5 * (u[i] - f[i]) * (u[i] - f[i]);
    for (std::size_t i = 0; i + 1 < u.size(); ++i) e += lam * std::abs(u[i + 1] - u[i]);
    return e;
}

// ---- decomposition oracle ----------------------------------------------

/// Long-run projected subgradient descent on the reduced objective
///   F(S,T) = 0.5 || P (ihat - S - T) ||^2 + gamma TV(T) + sum lam_i |S_i|
/// with S projected to zero on infinite-weight voxels. Constant-step phases
/// with geometric cooling; returns the best objective seen.
struct SubgradientResult {
    Volume3 sparse, tv;
    double energy = 0.0;
};

SubgradientResult decompose_subgradient(const Volume3& ihat, const bxt::PcaBasis& basis,
                                        const Volume3& weights, double gamma, double step0,
                                        int phases, int iters_per_phase);

// ---- wilcoxon enumeration ----------------------------------------------

/// Exhaustive 2^n sign enumeration of the signed-rank tail probability.
inline double wilcoxon_enumerate(const std::vector<double>& diffs, bool greater) {
    std::vector<double> nz;
    for (double d : diffs)
        if (d != 0.0) nz.push_back(d);
    const int n = static_cast<int>(nz.size());
    if (n == 0) throw std::runtime_error("all zero");
    // midranks of |d|
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return std::abs(nz[a]) < std::abs(nz[b]); });
    std::vector<double> rank(n);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && std::abs(nz[order[j + 1]]) == std::abs(nz[order[i]])) ++j;
        const double mid = 0.5 * (i + 1 + j + 1);
        for (int k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double observed = 0.0;
    for (int k = 0; k < n; ++k)
        if (nz[k] > 0.0) observed += rank[k];
    long long hits = 0;
    const long long total = 1LL << n;
    for (long long bits = 0; bits < total; ++bits) {
        double w = 0.0;
        for (int k = 0; k < n; ++k)
            if (bits & (1LL << k)) w += rank[k];
        if (greater ? (w >= observed) : (w <= observed)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace oracles

#endif
