#ifndef BXT_VOLUME_HPP
#define BXT_VOLUME_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "bxt/errors.hpp"

namespace bxt {

/// Regular 3D voxel lattice: voxel counts, spacing in mm/voxel and the mm
/// position of voxel (0,0,0). World coordinates are axis-aligned:
///   world = origin + index * spacing (per axis).
struct Grid3 {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

    /// Flat index; x is the fastest-varying axis.
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
    }

    std::array<double, 3> voxel_to_world(double x, double y, double z) const {
        return {origin[0] + x * spacing[0], origin[1] + y * spacing[1],
                origin[2] + z * spacing[2]};
    }
    std::array<double, 3> world_to_voxel(const std::array<double, 3>& p) const {
        return {(p[0] - origin[0]) / spacing[0], (p[1] - origin[1]) / spacing[1],
                (p[2] - origin[2]) / spacing[2]};
    }

    bool operator==(const Grid3& o) const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] != o.dims[a]) return false;
            if (std::abs(spacing[a] - o.spacing[a]) > 1e-9) return false;
            if (std::abs(origin[a] - o.origin[a]) > 1e-6) return false;
        }
        return true;
    }
    bool operator!=(const Grid3& o) const { return !(*this == o); }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] < 1) throw GeometryError("invalid grid: dims must be >= 1");
            if (!(spacing[a] > 0.0))
                throw GeometryError("invalid grid: spacing must be > 0");
        }
    }
};

/// Dense scalar volume. Data is stored double-precision in memory; file
/// formats apply their own storage types.
struct Volume3 {
    Grid3 grid;
    std::vector<double> data;

    Volume3() = default;
    explicit Volume3(const Grid3& g, double fill = 0.0)
        : grid(g), data(g.voxel_count(), fill) {
        grid.validate();
    }

    double& at(int x, int y, int z) { return data[grid.index(x, y, z)]; }
    double at(int x, int y, int z) const { return data[grid.index(x, y, z)]; }
    std::size_t size() const { return data.size(); }

    void validate() const {
        grid.validate();
        if (data.size() != grid.voxel_count())
            throw GeometryError("volume data length does not match dims");
        for (double v : data)
            if (!std::isfinite(v)) throw GeometryError("volume contains non-finite values");
    }
};

/// Binary mask on the same lattice model as Volume3. Geometry mismatches
/// against volumes it is applied to are hard errors, never silent resampling.
struct BinaryMask3 {
    Grid3 grid;
    std::vector<std::uint8_t> data;

    BinaryMask3() = default;
    explicit BinaryMask3(const Grid3& g, bool fill = false)
        : grid(g), data(g.voxel_count(), fill ? 1 : 0) {
        grid.validate();
    }

    bool at(int x, int y, int z) const { return data[grid.index(x, y, z)] != 0; }
    void set(int x, int y, int z, bool v) { data[grid.index(x, y, z)] = v ? 1 : 0; }
    std::size_t size() const { return data.size(); }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += (v != 0);
        return n;
    }
};

/// Per-voxel 3-vectors, stored as one contiguous array per component.
/// Used for spatial gradients (intensity/mm) and displacements (mm).
struct VectorField3 {
    Grid3 grid;
    std::array<std::vector<double>, 3> comp;

    VectorField3() = default;
    explicit VectorField3(const Grid3& g) : grid(g) {
        grid.validate();
        for (auto& c : comp) c.assign(g.voxel_count(), 0.0);
    }

    std::size_t size() const { return comp[0].size(); }
};

inline void require_same_grid(const Grid3& a, const Grid3& b, const char* what) {
    if (a != b) throw GeometryError(std::string("geometry mismatch: ") + what);
}

} // namespace bxt

#endif
