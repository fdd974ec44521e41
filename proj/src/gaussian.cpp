#include "bxt/gaussian.hpp"

#include <cmath>
#include <vector>

namespace bxt {

namespace {

std::vector<double> kernel_1d(double sigma_vox) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_vox)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma_vox * sigma_vox));
        k[i + radius] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

void convolve_axis(std::vector<double>& data, const Grid3& g, int axis,
                   const std::vector<double>& kernel) {
    const int radius = (static_cast<int>(kernel.size()) - 1) / 2;
    const int n = g.dims[axis];
    std::size_t stride = 1;
    for (int a = 0; a < axis; ++a) stride *= static_cast<std::size_t>(g.dims[a]);

    std::vector<double> line(n), out(n);
    // Iterate over all lines along `axis`.
    const std::size_t total = g.voxel_count() / n;
    for (std::size_t li = 0; li < total; ++li) {
        // Compute the flat index of the first voxel of this line.
        std::size_t base;
        if (axis == 0) {
            base = li * static_cast<std::size_t>(n);
        } else if (axis == 1) {
            const std::size_t x = li % g.dims[0];
            const std::size_t z = li / g.dims[0];
            base = x + z * static_cast<std::size_t>(g.dims[0]) * g.dims[1];
        } else {
            base = li;
        }
        for (int i = 0; i < n; ++i) line[i] = data[base + stride * i];
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            const int lo = std::max(0, i - radius), hi = std::min(n - 1, i + radius);
            const double* kp = kernel.data() + (lo - i + radius);
            for (int j = lo; j <= hi; ++j) s += line[j] * (*kp++);
            out[i] = s;
        }
        for (int i = 0; i < n; ++i) data[base + stride * i] = out[i];
    }
}

} // namespace

Volume3 smooth_gaussian(const Volume3& v, double sigma_mm) {
    Volume3 out = v;
    for (int axis = 0; axis < 3; ++axis) {
        if (out.grid.dims[axis] < 2) continue;
        const double sigma_vox = sigma_mm / out.grid.spacing[axis];
        if (sigma_vox < 1e-6) continue;
        convolve_axis(out.data, out.grid, axis, kernel_1d(sigma_vox));
    }
    return out;
}

Volume3 smooth_normalizer(const Grid3& g, double sigma_mm) {
    Volume3 ones(g, 1.0);
    return smooth_gaussian(ones, sigma_mm);
}

Volume3 downsample2(const Volume3& v) {
    const Volume3 smoothed = smooth_gaussian(
        v, 0.5 * std::min({v.grid.spacing[0], v.grid.spacing[1], v.grid.spacing[2]}) * 2.0);
    Grid3 g;
    for (int a = 0; a < 3; ++a) {
        g.dims[a] = (v.grid.dims[a] + 1) / 2;
        g.spacing[a] = v.grid.spacing[a] * 2.0;
        g.origin[a] = v.grid.origin[a];
    }
    Volume3 out(g);
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x)
                out.at(x, y, z) = smoothed.at(std::min(2 * x, v.grid.dims[0] - 1),
                                              std::min(2 * y, v.grid.dims[1] - 1),
                                              std::min(2 * z, v.grid.dims[2] - 1));
    return out;
}

} // namespace bxt
