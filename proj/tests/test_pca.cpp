#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "bxt/pca.hpp"
#include "bxt/volume_ops.hpp"
#include "oracles.hpp"

using namespace bxt;

TEST_CASE("training intensity normalization anchors the percentiles") {
    const Volume3 v = oracles::random_volume(oracles::grid(12, 12, 12), 1, 50.0, 250.0);
    const double p1 = percentile(v, 1.0), p99 = percentile(v, 99.0);
    const Volume3 n = normalize_training_intensities(v);

    // a voxel sitting exactly at an anchor maps to the anchor value
    auto map_of = [&](double x) { return 0.01 + (x - p1) * 0.98 / (p99 - p1); };
    CHECK(map_of(p1) == doctest::Approx(0.01));
    CHECK(map_of(p99) == doctest::Approx(0.99));
    CHECK(map_of(0.5 * (p1 + p99)) == doctest::Approx(0.5));
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        CHECK(n.data[i] >= 0.0);
        CHECK(n.data[i] <= 1.0);
        CHECK(n.data[i] ==
              doctest::Approx(std::clamp(map_of(v.data[i]), 0.0, 1.0)).epsilon(1e-12));
    }

    Volume3 flat(oracles::grid(4, 4, 4), 7.0);
    CHECK_THROWS_WITH_AS(normalize_training_intensities(flat),
                         doctest::Contains("degenerate intensity range"), Error);
}

TEST_CASE("two-point PCA: mode is the normalized difference") {
    const Grid3 g = oracles::grid(5, 5, 5);
    TrainingSet ts;
    ts.volumes.push_back(oracles::random_volume(g, 2, 0.0, 1.0));
    ts.volumes.push_back(oracles::random_volume(g, 3, 0.0, 1.0));
    const PcaBasis b = build_pca(ts, 1);

    Volume3 diff(g);
    double norm = 0.0;
    for (std::size_t i = 0; i < diff.data.size(); ++i) {
        diff.data[i] = ts.volumes[0].data[i] - ts.volumes[1].data[i];
        norm += diff.data[i] * diff.data[i];
    }
    norm = std::sqrt(norm);
    // sign fixed by first-nonzero-positive convention
    double sign = diff.data[0] > 0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < diff.data.size(); ++i) {
        CHECK(b.modes[0].data[i] == doctest::Approx(sign * diff.data[i] / norm).epsilon(1e-9));
        CHECK(b.mean.data[i] ==
              doctest::Approx(0.5 * (ts.volumes[0].data[i] + ts.volumes[1].data[i])));
    }
}

TEST_CASE("identical training volumes are rank deficient") {
    const Grid3 g = oracles::grid(4, 4, 4);
    TrainingSet ts;
    const Volume3 v = oracles::random_volume(g, 9, 0.0, 1.0);
    for (int i = 0; i < 4; ++i) ts.volumes.push_back(v);
    CHECK_THROWS_WITH_AS(build_pca(ts, 1), doctest::Contains("rank deficiency"), Error);
}

TEST_CASE("mode count out of range") {
    const Grid3 g = oracles::grid(4, 4, 4);
    TrainingSet ts;
    for (std::uint32_t s = 0; s < 3; ++s)
        ts.volumes.push_back(oracles::random_volume(g, 20 + s, 0.0, 1.0));
    CHECK_THROWS_AS(build_pca(ts, 0), Error);
    CHECK_THROWS_AS(build_pca(ts, 3), Error); // k must be <= n-1
}

TEST_CASE("gram-trick build matches a dense covariance eigendecomposition") {
    const Grid3 g = oracles::grid(6, 6, 6);
    const int n = 6, k = 3;
    TrainingSet ts;
    for (int s = 0; s < n; ++s)
        ts.volumes.push_back(oracles::random_volume(g, 100 + s, 0.0, 1.0));
    const PcaBasis b = build_pca(ts, k);

    // dense oracle: eigenvalues of the full sample covariance
    const std::size_t nv = g.voxel_count();
    Eigen::MatrixXd centered(nv, n);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(nv);
    for (int s = 0; s < n; ++s)
        for (std::size_t i = 0; i < nv; ++i) mean(i) += ts.volumes[s].data[i] / n;
    for (int s = 0; s < n; ++s)
        for (std::size_t i = 0; i < nv; ++i) centered(i, s) = ts.volumes[s].data[i] - mean(i);
    const Eigen::MatrixXd cov = centered * centered.transpose() / (n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    std::vector<double> evals(eig.eigenvalues().data(),
                              eig.eigenvalues().data() + eig.eigenvalues().size());
    std::sort(evals.rbegin(), evals.rend());

    double total_mine = 0.0, total_ref = 0.0;
    for (int m = 0; m < n - 1; ++m) total_ref += evals[m];
    // build with the maximum mode count to compare full spectra
    const PcaBasis full = build_pca(ts, n - 1);
    for (double ev : full.explained_variance) total_mine += ev;
    CHECK(total_mine == doctest::Approx(total_ref).epsilon(1e-10));
    for (int m = 0; m < k; ++m) {
        CHECK(std::abs(b.explained_variance[m] - evals[m]) <= 1e-8 * std::max(1.0, evals[0]));
        // explained-variance fractions
        CHECK(b.explained_variance[m] / total_mine ==
              doctest::Approx(evals[m] / total_ref).epsilon(1e-8));
    }

    // spectrum is non-increasing
    for (int m = 1; m < full.mode_count(); ++m)
        CHECK(full.explained_variance[m] <= full.explained_variance[m - 1] + 1e-12);

    CHECK(b.orthonormality_error() <= 1e-8);
}

TEST_CASE("projection and reconstruction identities") {
    const Grid3 g = oracles::grid(6, 6, 6);
    TrainingSet ts;
    for (std::uint32_t s = 0; s < 5; ++s)
        ts.volumes.push_back(oracles::random_volume(g, 200 + s, 0.0, 1.0));
    const PcaBasis b = build_pca(ts, 3);

    SUBCASE("a mode projects to a unit coefficient") {
        const auto alpha = project(b, b.modes[1]);
        CHECK(alpha[0] == doctest::Approx(0.0).epsilon(1e-10));
        CHECK(alpha[1] == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(alpha[2] == doctest::Approx(0.0).epsilon(1e-10));
    }

    SUBCASE("zero coefficients reconstruct the zero volume") {
        const Volume3 z = reconstruct(b, {0.0, 0.0, 0.0});
        for (double x : z.data) CHECK(x == 0.0);
    }

    SUBCASE("projection residual is orthogonal to every mode") {
        const Volume3 v = oracles::random_volume(g, 300, -1.0, 1.0);
        const auto alpha = project(b, v);
        const Volume3 fit = reconstruct(b, alpha);
        for (int m = 0; m < 3; ++m) {
            double dot = 0.0;
            for (std::size_t i = 0; i < v.data.size(); ++i)
                dot += (v.data[i] - fit.data[i]) * b.modes[m].data[i];
            CHECK(std::abs(dot) <= 1e-8);
        }
        // least-squares oracle: alpha solves the normal equations B^T B a = B^T v
        // (B orthonormal, so a = B^T v); perturbing any coefficient increases
        // the residual
        auto resid2 = [&](const std::vector<double>& a) {
            const Volume3 f = reconstruct(b, a);
            double s = 0.0;
            for (std::size_t i = 0; i < v.data.size(); ++i)
                s += (v.data[i] - f.data[i]) * (v.data[i] - f.data[i]);
            return s;
        };
        const double base = resid2(alpha);
        for (int m = 0; m < 3; ++m)
            for (double d : {-0.05, 0.05}) {
                auto perturbed = alpha;
                perturbed[m] += d;
                CHECK(resid2(perturbed) >= base);
            }
    }

    SUBCASE("project(reconstruct(alpha)) == alpha") {
        const std::vector<double> alpha = {0.3, -1.2, 0.07};
        const auto back = project(b, reconstruct(b, alpha));
        for (int m = 0; m < 3; ++m) CHECK(std::abs(back[m] - alpha[m]) <= 1e-10);
    }

    SUBCASE("projector idempotence") {
        const Volume3 v = oracles::random_volume(g, 301, -1.0, 1.0);
        const Volume3 once = reconstruct(b, project(b, v));
        const Volume3 twice = reconstruct(b, project(b, once));
        for (std::size_t i = 0; i < v.data.size(); ++i)
            CHECK(std::abs(once.data[i] - twice.data[i]) <= 1e-10);
    }

    SUBCASE("coefficient length mismatch") {
        CHECK_THROWS_AS(reconstruct(b, {1.0}), Error);
    }
}

TEST_CASE("build is invariant to training order up to the sign convention") {
    const Grid3 g = oracles::grid(5, 5, 5);
    TrainingSet a;
    for (std::uint32_t s = 0; s < 5; ++s)
        a.volumes.push_back(oracles::random_volume(g, 400 + s, 0.0, 1.0));
    TrainingSet b = a;
    std::reverse(b.volumes.begin(), b.volumes.end());
    const PcaBasis ba = build_pca(a, 3);
    const PcaBasis bb = build_pca(b, 3);
    for (int m = 0; m < 3; ++m)
        for (std::size_t i = 0; i < ba.modes[m].data.size(); ++i)
            CHECK(ba.modes[m].data[i] == doctest::Approx(bb.modes[m].data[i]).epsilon(1e-7));
}
