#include "bxt/pca.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "bxt/volume_ops.hpp"

namespace bxt {

double PcaBasis::orthonormality_error() const {
    const int k = mode_count();
    double worst = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = i; j < k; ++j) {
            double dot = 0.0;
            for (std::size_t t = 0; t < modes[i].data.size(); ++t)
                dot += modes[i].data[t] * modes[j].data[t];
            worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    return worst;
}

Volume3 normalize_training_intensities(const Volume3& v) {
    const double p1 = percentile(v, 1.0);
    const double p99 = percentile(v, 99.0);
    if (!(p99 > p1)) throw Error("degenerate intensity range: p99 == p1");
    const double a = (0.99 - 0.01) / (p99 - p1);
    Volume3 out(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        out.data[i] = std::clamp(0.01 + (v.data[i] - p1) * a, 0.0, 1.0);
    return out;
}

PcaBasis build_pca(const TrainingSet& ts, int k) {
    const int n = static_cast<int>(ts.volumes.size());
    if (n < 2) throw Error("training set needs at least 2 volumes");
    const Grid3& g = ts.volumes[0].grid;
    for (const auto& v : ts.volumes) require_same_grid(g, v.grid, "training volumes");
    if (k < 1 || k > n - 1)
        throw Error("mode count out of range: k must satisfy 1 <= k <= n-1, got " +
                    std::to_string(k));

    const std::size_t nvox = g.voxel_count();
    PcaBasis b;
    b.mean = Volume3(g);
    for (const auto& v : ts.volumes)
        for (std::size_t i = 0; i < nvox; ++i) b.mean.data[i] += v.data[i];
    for (double& m : b.mean.data) m /= n;

    // Gram matrix of the centered samples.
    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t t = 0; t < nvox; ++t)
                dot += (ts.volumes[i].data[t] - b.mean.data[t]) *
                       (ts.volumes[j].data[t] - b.mean.data[t]);
            gram(i, j) = dot;
            gram(j, i) = dot;
        }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw Error("eigendecomposition failed");

    // Eigen returns ascending eigenvalues; walk from the top.
    std::vector<int> order;
    const double scale = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    for (int i = n - 1; i >= 0; --i) {
        const double ev = eig.eigenvalues()(i);
        if (ev > std::max(1e-12 * scale, 1e-12)) order.push_back(i);
    }
    const int achievable = static_cast<int>(order.size());
    if (achievable < k)
        throw Error("rank deficiency: only " + std::to_string(achievable) +
                    " nonzero PCA modes are achievable (requested " + std::to_string(k) + ")");

    for (int m = 0; m < k; ++m) {
        const int idx = order[m];
        const double ev = eig.eigenvalues()(idx);
        Volume3 mode(g);
        for (int s = 0; s < n; ++s) {
            const double w = eig.eigenvectors()(s, idx);
            if (w == 0.0) continue;
            for (std::size_t t = 0; t < nvox; ++t)
                mode.data[t] += w * (ts.volumes[s].data[t] - b.mean.data[t]);
        }
        double norm = 0.0;
        for (double x : mode.data) norm += x * x;
        norm = std::sqrt(norm);
        double sign = 1.0;
        for (double x : mode.data)
            if (std::abs(x) > 1e-12 * norm) {
                sign = x > 0 ? 1.0 : -1.0;
                break;
            }
        for (double& x : mode.data) x *= sign / norm;
        b.modes.push_back(std::move(mode));
        b.explained_variance.push_back(ev / (n - 1));
    }
    return b;
}

std::vector<double> project(const PcaBasis& b, const Volume3& v_hat) {
    require_same_grid(b.grid(), v_hat.grid, "project input");
    std::vector<double> alpha(b.mode_count(), 0.0);
    for (int m = 0; m < b.mode_count(); ++m) {
        double dot = 0.0;
        const auto& mode = b.modes[m].data;
        for (std::size_t i = 0; i < mode.size(); ++i) dot += mode[i] * v_hat.data[i];
        alpha[m] = dot;
    }
    return alpha;
}

Volume3 reconstruct(const PcaBasis& b, const std::vector<double>& alpha) {
    if (static_cast<int>(alpha.size()) != b.mode_count())
        throw Error("coefficient length mismatch: expected " + std::to_string(b.mode_count()) +
                    ", got " + std::to_string(alpha.size()));
    Volume3 out(b.grid());
    for (int m = 0; m < b.mode_count(); ++m) {
        const double a = alpha[m];
        if (a == 0.0) continue;
        const auto& mode = b.modes[m].data;
        for (std::size_t i = 0; i < mode.size(); ++i) out.data[i] += a * mode[i];
    }
    return out;
}

} // namespace bxt
