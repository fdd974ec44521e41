#include "bxt/volume_ops.hpp"

#include <algorithm>
#include <cmath>

namespace bxt {

VectorField3 gradient(const Volume3& v) {
    const auto& g = v.grid;
    VectorField3 out(g);
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const double hx = g.spacing[0], hy = g.spacing[1], hz = g.spacing[2];
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const std::size_t i = g.index(x, y, z);
                const double c = v.data[i];
                out.comp[0][i] = (x + 1 < nx) ? (v.data[i + 1] - c) / hx : 0.0;
                out.comp[1][i] = (y + 1 < ny) ? (v.data[i + nx] - c) / hy : 0.0;
                out.comp[2][i] =
                    (z + 1 < nz) ? (v.data[i + static_cast<std::size_t>(nx) * ny] - c) / hz : 0.0;
            }
    return out;
}

Volume3 divergence(const VectorField3& f) {
    const auto& g = f.grid;
    Volume3 out(g);
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const std::size_t sx = 1, sy = nx, sz = static_cast<std::size_t>(nx) * ny;
    const double hx = g.spacing[0], hy = g.spacing[1], hz = g.spacing[2];
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const std::size_t i = g.index(x, y, z);
                double d = 0.0;
                // Adjoint of the forward difference: the last slice of each
                // axis carries no forward flux, only the backward term.
                if (x + 1 < nx) d += f.comp[0][i] / hx;
                if (x > 0) d -= f.comp[0][i - sx] / hx;
                if (y + 1 < ny) d += f.comp[1][i] / hy;
                if (y > 0) d -= f.comp[1][i - sy] / hy;
                if (z + 1 < nz) d += f.comp[2][i] / hz;
                if (z > 0) d -= f.comp[2][i - sz] / hz;
                out.data[i] = d;
            }
    return out;
}

namespace {

double sample_linear(const Volume3& v, double fx, double fy, double fz, double padding) {
    const auto& g = v.grid;
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    if (fx < 0.0 || fy < 0.0 || fz < 0.0 || fx > nx - 1 || fy > ny - 1 || fz > nz - 1)
        return padding;
    int x0 = static_cast<int>(std::floor(fx));
    int y0 = static_cast<int>(std::floor(fy));
    int z0 = static_cast<int>(std::floor(fz));
    if (x0 == nx - 1) x0 = std::max(0, nx - 2);
    if (y0 == ny - 1) y0 = std::max(0, ny - 2);
    if (z0 == nz - 1) z0 = std::max(0, nz - 2);
    const double tx = fx - x0, ty = fy - y0, tz = fz - z0;
    const int x1 = std::min(x0 + 1, nx - 1);
    const int y1 = std::min(y0 + 1, ny - 1);
    const int z1 = std::min(z0 + 1, nz - 1);
    const double c000 = v.at(x0, y0, z0), c100 = v.at(x1, y0, z0);
    const double c010 = v.at(x0, y1, z0), c110 = v.at(x1, y1, z0);
    const double c001 = v.at(x0, y0, z1), c101 = v.at(x1, y0, z1);
    const double c011 = v.at(x0, y1, z1), c111 = v.at(x1, y1, z1);
    const double c00 = c000 + tx * (c100 - c000);
    const double c10 = c010 + tx * (c110 - c010);
    const double c01 = c001 + tx * (c101 - c001);
    const double c11 = c011 + tx * (c111 - c011);
    const double c0 = c00 + ty * (c10 - c00);
    const double c1 = c01 + ty * (c11 - c01);
    return c0 + tz * (c1 - c0);
}

double sample_nearest(const Volume3& v, double fx, double fy, double fz, double padding) {
    const auto& g = v.grid;
    const int x = static_cast<int>(std::lround(fx));
    const int y = static_cast<int>(std::lround(fy));
    const int z = static_cast<int>(std::lround(fz));
    if (x < 0 || y < 0 || z < 0 || x >= g.dims[0] || y >= g.dims[1] || z >= g.dims[2])
        return padding;
    return v.at(x, y, z);
}

} // namespace

double sample(const Volume3& v, const std::array<double, 3>& world_mm,
              Interpolation interp, double padding) {
    const auto f = v.grid.world_to_voxel(world_mm);
    return interp == Interpolation::Linear ? sample_linear(v, f[0], f[1], f[2], padding)
                                           : sample_nearest(v, f[0], f[1], f[2], padding);
}

Volume3 resample(const Volume3& v, const Grid3& onto,
                 const std::function<std::array<double, 3>(const std::array<double, 3>&)>&
                     map_target_to_source,
                 double padding, Interpolation interp) {
    Volume3 out(onto);
    for (int z = 0; z < onto.dims[2]; ++z)
        for (int y = 0; y < onto.dims[1]; ++y)
            for (int x = 0; x < onto.dims[0]; ++x) {
                const auto p = onto.voxel_to_world(x, y, z);
                out.at(x, y, z) = sample(v, map_target_to_source(p), interp, padding);
            }
    return out;
}

BinaryMask3 resample_mask(const BinaryMask3& m, const Grid3& onto,
                          const std::function<std::array<double, 3>(const std::array<double, 3>&)>&
                              map_target_to_source) {
    Volume3 tmp(m.grid);
    for (std::size_t i = 0; i < m.data.size(); ++i) tmp.data[i] = m.data[i] ? 1.0 : 0.0;
    BinaryMask3 out(onto);
    for (int z = 0; z < onto.dims[2]; ++z)
        for (int y = 0; y < onto.dims[1]; ++y)
            for (int x = 0; x < onto.dims[0]; ++x) {
                const auto p = onto.voxel_to_world(x, y, z);
                out.set(x, y, z,
                        sample(tmp, map_target_to_source(p), Interpolation::Nearest, 0.0) > 0.5);
            }
    return out;
}

double percentile_of(std::vector<double> values, double p) {
    if (values.empty()) throw Error("empty percentile domain");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double percentile(const Volume3& v, double p, const BinaryMask3* within) {
    std::vector<double> selected;
    if (within) {
        require_same_grid(v.grid, within->grid, "percentile mask");
        selected.reserve(within->count());
        for (std::size_t i = 0; i < v.data.size(); ++i)
            if (within->data[i]) selected.push_back(v.data[i]);
    } else {
        selected = v.data;
    }
    return percentile_of(std::move(selected), p);
}

} // namespace bxt
