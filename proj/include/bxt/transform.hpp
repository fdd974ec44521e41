#ifndef BXT_TRANSFORM_HPP
#define BXT_TRANSFORM_HPP

#include <array>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "bxt/volume.hpp"

namespace bxt {

using Point3 = std::array<double, 3>;

/// Homogeneous 4x4 transform on mm coordinates. In the resampling convention
/// used throughout, a registration result maps fixed-space points into
/// moving-space points.
struct AffineTransform {
    // Row-major 4x4; last row is (0,0,0,1).
    std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    static AffineTransform identity() { return {}; }
    static AffineTransform translation(double tx, double ty, double tz);

    Point3 apply(const Point3& p) const {
        return {m[0] * p[0] + m[1] * p[1] + m[2] * p[2] + m[3],
                m[4] * p[0] + m[5] * p[1] + m[6] * p[2] + m[7],
                m[8] * p[0] + m[9] * p[1] + m[10] * p[2] + m[11]};
    }

    AffineTransform compose(const AffineTransform& inner) const; // this(inner(x))
    AffineTransform inverse() const;                             // exact; throws if singular
};

/// Free-form deformation: displacement u(x) interpolated from a coarse grid
/// of control-point 3-vectors by a cubic B-spline tensor kernel. The map is
/// x |-> x + u(x). The control lattice covers the target domain plus the
/// kernel support margin.
struct BsplineTransform {
    std::array<int, 3> grid_dims{0, 0, 0};
    double spacing_mm = 10.0;
    Point3 grid_origin{0, 0, 0};             // mm position of control point (0,0,0)
    std::array<std::vector<double>, 3> coef; // per-axis control displacements

    static BsplineTransform zero_for_domain(const Grid3& domain, double spacing_mm);

    std::size_t control_count() const {
        return static_cast<std::size_t>(grid_dims[0]) * grid_dims[1] * grid_dims[2];
    }
    std::size_t control_index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(grid_dims[0]) *
                   (static_cast<std::size_t>(j) +
                    static_cast<std::size_t>(grid_dims[1]) * static_cast<std::size_t>(k));
    }

    Point3 displacement(const Point3& p) const;
    Point3 apply(const Point3& p) const {
        const Point3 u = displacement(p);
        return {p[0] + u[0], p[1] + u[1], p[2] + u[2]};
    }

    /// Spatial Jacobian of the map x + u(x) (row-major 3x3).
    std::array<double, 9> jacobian(const Point3& p) const;
};

/// Dense displacement field sampled on a grid; used for numerically inverted
/// B-spline transforms. Points map as x |-> x + u(x) with u interpolated
/// trilinearly (zero displacement outside the lattice).
struct DenseDisplacementField {
    Grid3 grid;
    VectorField3 field;

    Point3 apply(const Point3& p) const;
};

using AnyTransform = std::variant<AffineTransform, BsplineTransform, DenseDisplacementField>;

Point3 apply_transform(const AnyTransform& t, const Point3& p);

/// Ordered transform list representing the function composition
///   chain(x) = t1(t2(...tn(x)...)),
/// i.e. the most recently appended transform is applied first. This matches
/// pull-back image warping, where appending the latest registration result
/// extends the map from the newest aligned space back to the original one.
struct TransformChain {
    std::vector<AnyTransform> items;

    Point3 map_point(const Point3& p) const;
    void append(AnyTransform t) { items.push_back(std::move(t)); }
    std::size_t size() const { return items.size(); }
};

TransformChain compose(TransformChain chain, AnyTransform t);

/// Serialization: affine as 16 numbers row-major in a text sidecar; B-spline
/// as a manifest plus raw little-endian float32 control displacements; a
/// chain as a JSON index naming its parts.
void save_affine(const AffineTransform& t, const std::string& path);
AffineTransform load_affine(const std::string& path);
void save_bspline(const BsplineTransform& t, const std::string& base);
BsplineTransform load_bspline(const std::string& base);
void save_chain(const TransformChain& chain, const std::string& dir);
TransformChain load_chain(const std::string& dir);

} // namespace bxt

#endif
