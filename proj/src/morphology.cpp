#include "bxt/morphology.hpp"

#include <array>
#include <cstdlib>
#include <deque>

#include "bxt/errors.hpp"

namespace bxt {

namespace {

std::vector<std::array<int, 3>> neighborhood(int connectivity) {
    std::vector<std::array<int, 3>> offs;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int m = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (m == 0) continue;
                if (connectivity == 6 && m > 1) continue;
                if (connectivity == 18 && m > 2) continue;
                offs.push_back({dx, dy, dz});
            }
    return offs;
}

BinaryMask3 dilate_once(const BinaryMask3& m, const std::vector<std::array<int, 3>>& offs) {
    const auto& g = m.grid;
    BinaryMask3 out = m;
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                if (m.at(x, y, z)) continue;
                for (const auto& o : offs) {
                    const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
                    if (nx < 0 || ny < 0 || nz < 0 || nx >= g.dims[0] || ny >= g.dims[1] ||
                        nz >= g.dims[2])
                        continue;
                    if (m.at(nx, ny, nz)) {
                        out.set(x, y, z, true);
                        break;
                    }
                }
            }
    return out;
}

// Erosion as the exact dual of dilation: out-of-grid neighbors never block,
// which keeps erode(m) == complement(dilate(complement(m))) and makes
// closing extensive on the whole grid.
BinaryMask3 erode_once(const BinaryMask3& m, const std::vector<std::array<int, 3>>& offs) {
    const auto& g = m.grid;
    BinaryMask3 out = m;
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

} // namespace

BinaryMask3 dilate(const BinaryMask3& m, int radius) {
    if (radius < 0) throw Error("morphology radius must be >= 0");
    const auto offs = neighborhood(18);
    BinaryMask3 out = m;
    for (int r = 0; r < radius; ++r) out = dilate_once(out, offs);
    return out;
}

BinaryMask3 erode(const BinaryMask3& m, int radius) {
    if (radius < 0) throw Error("morphology radius must be >= 0");
    const auto offs = neighborhood(18);
    BinaryMask3 out = m;
    for (int r = 0; r < radius; ++r) out = erode_once(out, offs);
    return out;
}

BinaryMask3 close(const BinaryMask3& m) { return erode(dilate(m, 1), 1); }

BinaryMask3 complement(const BinaryMask3& m) {
    BinaryMask3 out(m.grid);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i] ? 0 : 1;
    return out;
}

ConnectedComponents connected_components(const BinaryMask3& m, int connectivity) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw Error("connectivity must be one of 6, 18, 26");
    const auto& g = m.grid;
    const auto offs = neighborhood(connectivity);
    ConnectedComponents cc;
    cc.labels.assign(m.data.size(), 0);
    std::deque<std::size_t> queue;
    int next = 0;
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                const std::size_t seed = g.index(x, y, z);
                if (!m.data[seed] || cc.labels[seed] != 0) continue;
                ++next;
                std::size_t count = 0;
                cc.labels[seed] = next;
                queue.push_back(seed);
                while (!queue.empty()) {
                    const std::size_t i = queue.front();
                    queue.pop_front();
                    ++count;
                    const int cz = static_cast<int>(i / (static_cast<std::size_t>(g.dims[0]) * g.dims[1]));
                    const std::size_t rem = i % (static_cast<std::size_t>(g.dims[0]) * g.dims[1]);
                    const int cy = static_cast<int>(rem / g.dims[0]);
                    const int cx = static_cast<int>(rem % g.dims[0]);
                    for (const auto& o : offs) {
                        const int nx = cx + o[0], ny = cy + o[1], nz = cz + o[2];
                        if (nx < 0 || ny < 0 || nz < 0 || nx >= g.dims[0] || ny >= g.dims[1] ||
                            nz >= g.dims[2])
                            continue;
                        const std::size_t ni = g.index(nx, ny, nz);
                        if (m.data[ni] && cc.labels[ni] == 0) {
                            cc.labels[ni] = next;
                            queue.push_back(ni);
                        }
                    }
                }
                cc.sizes.push_back(count);
            }
    return cc;
}

BinaryMask3 refine_brain_mask(const BinaryMask3& m) {
    const BinaryMask3 closed = close(m);
    const auto& g = closed.grid;
    const auto cc = connected_components(complement(closed), 18);

    std::vector<bool> touches_boundary(cc.sizes.size() + 1, false);
    auto mark = [&](int x, int y, int z) {
        const int l = cc.labels[g.index(x, y, z)];
        if (l > 0) touches_boundary[l] = true;
    };
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y) {
            mark(0, y, z);
            mark(g.dims[0] - 1, y, z);
        }
    for (int z = 0; z < g.dims[2]; ++z)
        for (int x = 0; x < g.dims[0]; ++x) {
            mark(x, 0, z);
            mark(x, g.dims[1] - 1, z);
        }
    for (int y = 0; y < g.dims[1]; ++y)
        for (int x = 0; x < g.dims[0]; ++x) {
            mark(x, y, 0);
            mark(x, y, g.dims[2] - 1);
        }

    BinaryMask3 out(g);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const int l = cc.labels[i];
        // Brain = everything except the background components that reach the
        // volume boundary; enclosed cavities get filled.
        out.data[i] = (l == 0 || !touches_boundary[l]) ? 1 : 0;
    }
    return out;
}

} // namespace bxt
