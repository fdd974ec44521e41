#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "bxt/phantom.hpp"
#include "bxt/registration.hpp"
#include "bxt/volume_ops.hpp"
#include "oracles.hpp"

using namespace bxt;

namespace {

PhantomSpec small_head() {
    PhantomSpec spec;
    spec.dims = {36, 36, 36};
    spec.spacing = {4.5, 4.5, 4.5};
    spec.texture_amplitude = 0.08;
    spec.texture_sigma_mm = 10.0;
    return spec;
}

// direct nested-loop Gaussian-window statistics, no separability tricks
double lncc_direct(const Volume3& a, const Volume3& b, double sigma_mm) {
    const auto& g = a.grid;
    const int rx = static_cast<int>(std::ceil(3.0 * sigma_mm / g.spacing[0]));
    const int ry = static_cast<int>(std::ceil(3.0 * sigma_mm / g.spacing[1]));
    const int rz = static_cast<int>(std::ceil(3.0 * sigma_mm / g.spacing[2]));
    auto range = [](const Volume3& v) {
        double lo = v.data[0], hi = v.data[0];
        for (double x : v.data) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        return hi - lo;
    };
    const double eps_a = 1e-10 * range(a) * range(a) + 1e-300;
    const double eps_b = 1e-10 * range(b) * range(b) + 1e-300;
    double sum = 0.0;
    std::size_t count = 0;
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                double wsum = 0, ma = 0, mb = 0, vaa = 0, vbb = 0, vab = 0;
                for (int dz = -rz; dz <= rz; ++dz)
                    for (int dy = -ry; dy <= ry; ++dy)
                        for (int dx = -rx; dx <= rx; ++dx) {
                            const int nx = x + dx, ny = y + dy, nz = z + dz;
                            if (nx < 0 || ny < 0 || nz < 0 || nx >= g.dims[0] ||
                                ny >= g.dims[1] || nz >= g.dims[2])
                                continue;
                            const double wx = dx * g.spacing[0] / sigma_mm;
                            const double wy = dy * g.spacing[1] / sigma_mm;
                            const double wz = dz * g.spacing[2] / sigma_mm;
                            const double w =
                                std::exp(-0.5 * wx * wx) * std::exp(-0.5 * wy * wy) *
                                std::exp(-0.5 * wz * wz);
                            wsum += w;
                            ma += w * a.at(nx, ny, nz);
                            mb += w * b.at(nx, ny, nz);
                            vaa += w * a.at(nx, ny, nz) * a.at(nx, ny, nz);
                            vbb += w * b.at(nx, ny, nz) * b.at(nx, ny, nz);
                            vab += w * a.at(nx, ny, nz) * b.at(nx, ny, nz);
                        }
                ma /= wsum;
                mb /= wsum;
                const double va = vaa / wsum - ma * ma;
                const double vb = vbb / wsum - mb * mb;
                const double cab = vab / wsum - ma * mb;
                ++count;
                if (va <= eps_a || vb <= eps_b) continue;
                sum += cab * cab / (va * vb);
            }
    return sum / static_cast<double>(count);
}

double rotation_angle_deg(const AffineTransform& t) {
    // angle of the rotation factor (polar decomposition via quaternions is
    // overkill: for near-rotations, use trace of the upper 3x3)
    const double tr = t.m[0] + t.m[5] + t.m[10];
    const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c) * 180.0 / 3.14159265358979323846;
}

} // namespace

TEST_CASE("lncc self-correlation and affine-intensity invariance") {
    const PhantomOutput head = generate(small_head());
    const Volume3& v = head.volume;
    CHECK(lncc(v, v, 15.0) == doctest::Approx(1.0).epsilon(1e-6));

    Volume3 rescaled(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i) rescaled.data[i] = -3.2 * v.data[i] + 40.0;
    CHECK(lncc(v, rescaled, 15.0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("lncc of independent noise volumes is low and matches the direct oracle") {
    const Grid3 g = oracles::grid(32, 32, 32, 4.0, 4.0, 4.0);
    const Volume3 a = oracles::random_volume(g, 1001);
    const Volume3 b = oracles::random_volume(g, 2002);
    const double mine = lncc(a, b, 6.0);
    CHECK(mine < 0.2);
    const double ref = lncc_direct(a, b, 6.0);
    CHECK(mine == doctest::Approx(ref).epsilon(1e-6));

    // oracle agreement on structured content too
    const PhantomOutput head = generate(small_head());
    Volume3 other = head.volume;
    for (std::size_t i = 0; i < other.data.size(); ++i) other.data[i] *= 1.7;
    CHECK(lncc(head.volume, other, 9.0) ==
          doctest::Approx(lncc_direct(head.volume, other, 9.0)).epsilon(1e-6));
}

TEST_CASE("lncc rejects an empty mask") {
    const Grid3 g = oracles::grid(8, 8, 8);
    const Volume3 v = oracles::random_volume(g, 5);
    BinaryMask3 empty(g);
    CHECK_THROWS_WITH_AS(lncc(v, v, 5.0, &empty), "empty mask", Error);
}

TEST_CASE("affine registration: identity on identical inputs") {
    const PhantomOutput head = generate(small_head());
    AffineRegOptions o;
    o.cog_init = true;
    o.window_sigma_mm = 15.0;
    o.iterations = 30;
    const AffineRegResult r = register_affine(head.volume, head.volume, o);
    double dev = 0.0;
    for (int i = 0; i < 16; ++i) {
        const double id = (i % 5 == 0) ? 1.0 : 0.0;
        dev = std::max(dev, std::abs(r.transform.m[i] - id));
    }
    CHECK(dev <= 1e-3 * std::max(1.0, 36 * 4.5)); // matrix-norm-ish, mm scale
    CHECK(r.final_score >= r.initial_score);
}

TEST_CASE("affine registration recovers a pure translation") {
    PhantomSpec spec = small_head();
    const PhantomOutput fixed_head = generate(spec);
    PhantomSpec moved = spec;
    moved.translation_mm = {3 * spec.spacing[0], -2 * spec.spacing[1], 1 * spec.spacing[2]};
    const PhantomOutput moving_head = generate(moved);

    AffineRegOptions o;
    o.cog_init = true;
    o.window_sigma_mm = 15.0;
    o.iterations = 60;
    const AffineRegResult r = register_affine(moving_head.volume, fixed_head.volume, o);

    // true map: fixed-space x  ->  x + t in moving space
    CHECK(std::abs(r.transform.m[3] - moved.translation_mm[0]) <= 0.2 * spec.spacing[0]);
    CHECK(std::abs(r.transform.m[7] - moved.translation_mm[1]) <= 0.2 * spec.spacing[1]);
    CHECK(std::abs(r.transform.m[11] - moved.translation_mm[2]) <= 0.2 * spec.spacing[2]);
    for (int rr = 0; rr < 3; ++rr)
        for (int cc = 0; cc < 3; ++cc)
            CHECK(std::abs(r.transform.m[4 * rr + cc] - (rr == cc ? 1.0 : 0.0)) <= 0.02);
}

TEST_CASE("affine registration recovers a 5 degree rotation") {
    PhantomSpec spec = small_head();
    const PhantomOutput fixed_head = generate(spec);
    PhantomSpec rotated = spec;
    rotated.rotation_deg = {5.0, 0.0, 0.0}; // about z
    const PhantomOutput moving_head = generate(rotated);

    AffineRegOptions o;
    o.cog_init = false;
    o.window_sigma_mm = 15.0;
    o.iterations = 80;
    const AffineRegResult r = register_affine(moving_head.volume, fixed_head.volume, o);
    CHECK(std::abs(rotation_angle_deg(r.transform) - 5.0) <= 0.5);
    CHECK(lncc(resample(moving_head.volume, fixed_head.volume.grid,
                        [&](const Point3& p) { return r.transform.apply(p); }),
               fixed_head.volume, 15.0) >= 0.99);
}

TEST_CASE("affine registration is equivariant under shared integer translations") {
    PhantomSpec spec = small_head();
    spec.dims = {32, 32, 32};
    const PhantomOutput a = generate(spec);
    PhantomSpec moved = spec;
    moved.translation_mm = {2 * spec.spacing[0], 0.0, 0.0};
    const PhantomOutput b = generate(moved);

    AffineRegOptions o;
    o.cog_init = true;
    o.window_sigma_mm = 15.0;
    o.iterations = 40;
    const AffineRegResult r1 = register_affine(b.volume, a.volume, o);

    // shift both volumes' content by one voxel in y
    auto shift_y = [](const Volume3& v) {
        Volume3 out(v.grid);
        for (int z = 0; z < v.grid.dims[2]; ++z)
            for (int y = 0; y < v.grid.dims[1]; ++y)
                for (int x = 0; x < v.grid.dims[0]; ++x)
                    out.at(x, y, z) = y > 0 ? v.at(x, y - 1, z) : v.at(x, 0, z);
        return out;
    };
    const Volume3 a2 = shift_y(a.volume);
    const Volume3 b2 = shift_y(b.volume);
    const AffineRegResult r2 = register_affine(b2, a2, o);
    for (int i : {3, 7, 11})
        CHECK(std::abs(r1.transform.m[i] - r2.transform.m[i]) <= 0.1 * spec.spacing[0]);
}

TEST_CASE("bspline registration: identity stays put, degenerate input warns") {
    PhantomSpec spec = small_head();
    const PhantomOutput head = generate(spec);

    BsplineRegOptions o;
    o.grid_spacing_mm = 30.0;
    o.window_sigma_mm = 15.0;
    o.iterations = 15;
    const BsplineRegResult r = register_bspline(head.volume, head.volume, o);
    double max_disp = 0.0;
    for (int c = 0; c < 3; ++c)
        for (double d : r.transform.coef[c]) max_disp = std::max(max_disp, std::abs(d));
    CHECK(max_disp <= 0.1 * spec.spacing[0]);

    // checkerboard fixed vs constant moving: no local variance to correlate
    Volume3 checker(head.volume.grid);
    for (int z = 0; z < 36; ++z)
        for (int y = 0; y < 36; ++y)
            for (int x = 0; x < 36; ++x) checker.at(x, y, z) = (x + y + z) % 2 ? 1.0 : 0.0;
    Volume3 flat(head.volume.grid, 0.5);
    const BsplineRegResult degenerate = register_bspline(flat, checker, o);
    CHECK(degenerate.warning_no_improvement);
}

TEST_CASE("bspline registration recovers a smooth synthetic warp") {
    PhantomSpec spec;
    spec.dims = {40, 40, 40};
    spec.spacing = {4.0, 4.0, 4.0};
    spec.texture_amplitude = 0.08;
    spec.texture_sigma_mm = 10.0;
    const PhantomOutput fixed_head = generate(spec);
    PhantomSpec warped = spec;
    warped.warp_amplitude_mm = 1.5 * spec.spacing[0]; // 1.5 voxels
    warped.warp_seed = 12345;
    const PhantomOutput moving_head = generate(warped);

    BsplineRegOptions o;
    o.grid_spacing_mm = 24.0;
    o.window_sigma_mm = 12.0;
    o.iterations = 40;
    o.bending_weight = 1e-3;
    const BsplineRegResult r = register_bspline(moving_head.volume, fixed_head.volume, o);
    CHECK(r.final_score >= r.initial_score);

    // ground truth: moving(p) = fixed(p + u(p)), so the true fixed->moving
    // map satisfies phi(x) + u(phi(x)) = x; resolve it by fixed-point sweeps
    auto truth_map = [&](const Point3& x) {
        Point3 v{0, 0, 0};
        for (int it = 0; it < 25; ++it) {
            const auto u = warp_displacement(warped, {x[0] + v[0], x[1] + v[1], x[2] + v[2]});
            v = {-u[0], -u[1], -u[2]};
        }
        return Point3{x[0] + v[0], x[1] + v[1], x[2] + v[2]};
    };

    double err_sum = 0.0;
    std::size_t count = 0;
    const auto& g = fixed_head.volume.grid;
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                if (!fixed_head.truth_mask.at(x, y, z)) continue;
                const Point3 p = g.voxel_to_world(x, y, z);
                const Point3 got = r.transform.apply(p);
                const Point3 want = truth_map(p);
                err_sum += std::sqrt((got[0] - want[0]) * (got[0] - want[0]) +
                                     (got[1] - want[1]) * (got[1] - want[1]) +
                                     (got[2] - want[2]) * (got[2] - want[2]));
                ++count;
            }
    const double mean_err_voxels = err_sum / count / spec.spacing[0];
    CHECK(mean_err_voxels < 0.5);
}

TEST_CASE("affine inversion is exact and composes to identity") {
    AffineTransform t;
    t.m = {0.98, 0.05, -0.02, 3.0, -0.04, 1.02, 0.03, -2.0, 0.01, -0.02, 0.99, 1.0, 0, 0, 0, 1};
    const AffineTransform inv = invert_affine(t);
    const AffineTransform id = t.compose(inv);
    for (int i = 0; i < 16; ++i)
        CHECK(std::abs(id.m[i] - ((i % 5 == 0) ? 1.0 : 0.0)) <= 1e-10);

    CHECK(invert_affine(AffineTransform::identity()).m == AffineTransform::identity().m);

    AffineTransform singular;
    singular.m[0] = 0.0;
    singular.m[5] = 0.0;
    singular.m[1] = 0.0;
    singular.m[4] = 0.0;
    CHECK_THROWS_AS(invert_affine(singular), Error);
}

TEST_CASE("bspline inversion round-trips below tolerance") {
    const Grid3 g = oracles::grid(24, 24, 24, 5.0, 5.0, 5.0);
    BsplineTransform t = BsplineTransform::zero_for_domain(g, 25.0);
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> d(-4.0, 4.0); // mm, smooth and mild
    for (int c = 0; c < 3; ++c)
        for (double& v : t.coef[c]) v = d(rng);

    const DenseDisplacementField inv = invert_bspline(t, g, 0.05);
    std::mt19937 pts(123);
    std::uniform_real_distribution<double> u(2.0, 21.0);
    for (int i = 0; i < 1000; ++i) {
        const Point3 x = {u(pts) * 5.0, u(pts) * 5.0, u(pts) * 5.0};
        const Point3 back = t.apply(inv.apply(x));
        const double err = std::sqrt((back[0] - x[0]) * (back[0] - x[0]) +
                                     (back[1] - x[1]) * (back[1] - x[1]) +
                                     (back[2] - x[2]) * (back[2] - x[2]));
        CHECK(err <= 0.05 * 5.0 + 1e-9);
    }
}

TEST_CASE("bspline inversion detects folding") {
    const Grid3 g = oracles::grid(20, 20, 20, 5.0, 5.0, 5.0);
    BsplineTransform t = BsplineTransform::zero_for_domain(g, 25.0);
    // a displacement ramp steep enough to fold the map
    for (int k = 0; k < t.grid_dims[2]; ++k)
        for (int j = 0; j < t.grid_dims[1]; ++j)
            for (int i = 0; i < t.grid_dims[0]; ++i)
                t.coef[0][t.control_index(i, j, k)] = (i % 2) ? 40.0 : -40.0;
    CHECK_THROWS_WITH_AS(invert_bspline(t, g), doctest::Contains("non-invertible"), Error);
}

TEST_CASE("transform chains compose point maps in application order") {
    TransformChain chain;
    CHECK(chain.map_point({1.0, 2.0, 3.0}) == Point3{1.0, 2.0, 3.0});

    chain = compose(std::move(chain), AffineTransform::translation(1, 0, 0));
    chain = compose(std::move(chain), AffineTransform::translation(0, 2, 0));
    const Point3 p = chain.map_point({0, 0, 0});
    CHECK(p == Point3{1.0, 2.0, 0.0});

    AffineTransform t;
    t.m = {1.1, 0.0, 0.0, 4.0, 0.0, 0.9, 0.1, -1.0, 0.0, 0.0, 1.0, 2.0, 0, 0, 0, 1};
    TransformChain pair_chain;
    pair_chain.append(t);
    pair_chain.append(invert_affine(t));
    const Point3 q = pair_chain.map_point({3.0, -2.0, 5.0});
    CHECK(std::abs(q[0] - 3.0) <= 1e-10);
    CHECK(std::abs(q[1] + 2.0) <= 1e-10);
    CHECK(std::abs(q[2] - 5.0) <= 1e-10);
}

TEST_CASE("transform serialization round-trips") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "bxt_reg_io";
    fs::create_directories(dir);

    AffineTransform t;
    t.m = {0.98, 0.05, -0.02, 3.0, -0.04, 1.02, 0.03, -2.0, 0.01, -0.02, 0.99, 1.0, 0, 0, 0, 1};
    save_affine(t, (dir / "a.txt").string());
    CHECK(load_affine((dir / "a.txt").string()).m == t.m);

    const Grid3 g = oracles::grid(12, 12, 12, 5, 5, 5);
    BsplineTransform b = BsplineTransform::zero_for_domain(g, 25.0);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (int c = 0; c < 3; ++c)
        for (double& v : b.coef[c]) v = static_cast<float>(d(rng));
    save_bspline(b, (dir / "b").string());
    const BsplineTransform lb = load_bspline((dir / "b").string());
    CHECK(lb.grid_dims == b.grid_dims);
    CHECK(lb.coef == b.coef);

    TransformChain chain;
    chain.append(t);
    chain.append(b);
    save_chain(chain, (dir / "chain").string());
    const TransformChain lc = load_chain((dir / "chain").string());
    REQUIRE(lc.size() == 2);
    const Point3 x = {10.0, 20.0, 30.0};
    const Point3 pa = chain.map_point(x);
    const Point3 pb = lc.map_point(x);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(pa[i] - pb[i]) <= 1e-5);
    fs::remove_all(dir);
}
