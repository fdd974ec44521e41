#include "bxt/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "bxt/distance.hpp"
#include "bxt/errors.hpp"
#include "bxt/volume_ops.hpp"

namespace bxt {

double dice(const SegmentationPair& pair) {
    const auto& x = *pair.automatic;
    const auto& y = *pair.truth;
    require_same_grid(x.grid, y.grid, "dice masks");
    std::size_t nx = 0, ny = 0, ni = 0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        nx += x.data[i] != 0;
        ny += y.data[i] != 0;
        ni += (x.data[i] && y.data[i]);
    }
    if (nx + ny == 0) throw Error("undefined Dice: both masks are empty");
    return 2.0 * static_cast<double>(ni) / static_cast<double>(nx + ny);
}

BinaryMask3 surface_voxels(const BinaryMask3& m) {
    const auto& g = m.grid;
    BinaryMask3 out(g);
    const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                if (!m.at(x, y, z)) continue;
                bool boundary = false;
                for (const auto& o : off) {
                    const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
                    if (nx < 0 || ny < 0 || nz < 0 || nx >= g.dims[0] || ny >= g.dims[1] ||
                        nz >= g.dims[2]) {
                        boundary = true; // grid border counts as surface
                        break;
                    }
                    if (!m.at(nx, ny, nz)) {
                        boundary = true;
                        break;
                    }
                }
                if (boundary) out.set(x, y, z, true);
            }
    return out;
}

SurfaceDistanceReport surface_distances(const SegmentationPair& pair) {
    const auto& x = *pair.automatic;
    const auto& y = *pair.truth;
    require_same_grid(x.grid, y.grid, "surface distance masks");
    if (x.count() == 0 || y.count() == 0)
        throw Error("surface distance undefined for an empty mask");

    const BinaryMask3 sa = surface_voxels(x);
    const BinaryMask3 sb = surface_voxels(y);
    const Volume3 dist_to_b = distance_transform(sb);
    const Volume3 dist_to_a = distance_transform(sa);

    std::vector<double> pooled;
    pooled.reserve(sa.count() + sb.count());
    double sum = 0.0;
    for (std::size_t i = 0; i < sa.data.size(); ++i) {
        if (sa.data[i]) {
            pooled.push_back(dist_to_b.data[i]);
            sum += dist_to_b.data[i];
        }
        if (sb.data[i]) {
            pooled.push_back(dist_to_a.data[i]);
            sum += dist_to_a.data[i];
        }
    }

    SurfaceDistanceReport r;
    r.surface_a = sa.count();
    r.surface_b = sb.count();
    r.average_mm = sum / static_cast<double>(r.surface_a + r.surface_b);
    r.max_mm = *std::max_element(pooled.begin(), pooled.end());
    r.p95_mm = percentile_of(pooled, 95.0);
    return r;
}

std::pair<double, double> sensitivity_specificity(const SegmentationPair& pair) {
    const auto& x = *pair.automatic;
    const auto& y = *pair.truth;
    require_same_grid(x.grid, y.grid, "sensitivity masks");
    std::size_t ni = 0, nu = 0, ny = 0;
    const std::size_t nv = x.data.size();
    for (std::size_t i = 0; i < nv; ++i) {
        ni += (x.data[i] && y.data[i]);
        nu += (x.data[i] || y.data[i]);
        ny += y.data[i] != 0;
    }
    if (ny == 0) throw Error("sensitivity undefined: empty gold-standard mask");
    if (ny == nv) throw Error("specificity undefined: gold standard covers the whole volume");
    const double sens = static_cast<double>(ni) / static_cast<double>(ny);
    const double spec =
        static_cast<double>(nv - nu) / static_cast<double>(nv - ny);
    return {sens, spec};
}

} // namespace bxt
