#include "bxt/distance.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "bxt/errors.hpp"

namespace bxt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance transform along samples spaced h apart:
// out[j] = min_i ((j-i)^2 h^2 + f[i]). Entries with f == inf carry no site.
void dt_1d(const std::vector<double>& f, std::vector<double>& out, double h, int n,
           std::vector<int>& hull, std::vector<double>& boundary) {
    int first = 0;
    while (first < n && f[first] == kInf) ++first;
    if (first == n) {
        for (int q = 0; q < n; ++q) out[q] = kInf;
        return;
    }
    int k = 0;
    hull[0] = first;
    boundary[0] = -kInf;
    boundary[1] = kInf;
    const double h2 = h * h;
    for (int q = first + 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s;
        while (true) {
            const int p = hull[k];
            s = ((f[q] + h2 * q * q) - (f[p] + h2 * p * p)) / (2.0 * h2 * (q - p));
            if (s > boundary[k]) break;
            if (--k < 0) break;
        }
        if (k < 0) {
            k = 0;
            hull[0] = q;
            boundary[0] = -kInf;
        } else {
            ++k;
            hull[k] = q;
            boundary[k] = s;
        }
        boundary[k + 1] = kInf;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (boundary[j + 1] < static_cast<double>(q)) ++j;
        const int p = hull[j];
        const double d = static_cast<double>(q - p);
        out[q] = d * d * h2 + f[p];
    }
}

} // namespace

Volume3 distance_transform(const BinaryMask3& m) {
    if (m.count() == 0) throw Error("empty reference set");
    const auto& g = m.grid;
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    Volume3 sq(g);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        sq.data[i] = m.data[i] ? 0.0 : kInf;

    const int nmax = std::max(nx, std::max(ny, nz));
    std::vector<double> line(nmax), out(nmax), boundary(nmax + 1);
    std::vector<int> hull(nmax);

    // x pass
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < nx; ++x) line[x] = sq.at(x, y, z);
            dt_1d(line, out, g.spacing[0], nx, hull, boundary);
            for (int x = 0; x < nx; ++x) sq.at(x, y, z) = out[x];
        }
    // y pass
    for (int z = 0; z < nz; ++z)
        for (int x = 0; x < nx; ++x) {
            for (int y = 0; y < ny; ++y) line[y] = sq.at(x, y, z);
            dt_1d(line, out, g.spacing[1], ny, hull, boundary);
            for (int y = 0; y < ny; ++y) sq.at(x, y, z) = out[y];
        }
    // z pass
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            for (int z = 0; z < nz; ++z) line[z] = sq.at(x, y, z);
            dt_1d(line, out, g.spacing[2], nz, hull, boundary);
            for (int z = 0; z < nz; ++z) sq.at(x, y, z) = out[z];
        }

    for (double& v : sq.data) v = std::sqrt(v);
    return sq;
}

} // namespace bxt
