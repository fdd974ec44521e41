#ifndef BXT_PCA_HPP
#define BXT_PCA_HPP

#include <vector>

#include "bxt/volume.hpp"

namespace bxt {

/// Statistical appearance model: mean volume plus k orthonormal modes.
/// Modes are unit vectors in voxel space; B^T B = I to 1e-8.
struct PcaBasis {
    Volume3 mean;
    std::vector<Volume3> modes;
    std::vector<double> explained_variance; // eigenvalues, descending

    int mode_count() const { return static_cast<int>(modes.size()); }
    const Grid3& grid() const { return mean.grid; }

    /// Max |B^T B - I| entry. Loaders and the solver gate on this.
    double orthonormality_error() const;
};

struct TrainingSet {
    std::vector<Volume3> volumes; // shared geometry, intensities in [0,1]
};

/// Anchor the 1st percentile at 0.01 and the 99th at 0.99, then clamp to
/// [0,1]. Throws on a degenerate intensity range (p99 == p1).
Volume3 normalize_training_intensities(const Volume3& v);

/// Top-k PCA via the n-by-n Gram matrix (voxels >> samples). Modes are sorted
/// by descending eigenvalue; each mode's sign is fixed so its first nonzero
/// coefficient is positive. Covariance uses the 1/(n-1) normalization.
PcaBasis build_pca(const TrainingSet& ts, int k);

/// Coefficients of an explicitly mean-subtracted volume: alpha = B^T v_hat.
std::vector<double> project(const PcaBasis& b, const Volume3& v_hat);

/// B alpha. The mean is not added back; callers add it where needed.
Volume3 reconstruct(const PcaBasis& b, const std::vector<double>& alpha);

} // namespace bxt

#endif
