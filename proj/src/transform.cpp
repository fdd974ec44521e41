#include "bxt/transform.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bxt/errors.hpp"
#include "bxt/volume_ops.hpp"

namespace bxt {

AffineTransform AffineTransform::translation(double tx, double ty, double tz) {
    AffineTransform t;
    t.m[3] = tx;
    t.m[7] = ty;
    t.m[11] = tz;
    return t;
}

AffineTransform AffineTransform::compose(const AffineTransform& inner) const {
    AffineTransform out;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += m[4 * r + k] * inner.m[4 * k + c];
            out.m[4 * r + c] = s;
        }
    return out;
}

AffineTransform AffineTransform::inverse() const {
    Eigen::Matrix4d a;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) a(r, c) = m[4 * r + c];
    if (std::abs(a.block<3, 3>(0, 0).determinant()) < 1e-12)
        throw Error("singular affine transform");
    const Eigen::Matrix4d inv = a.inverse();
    AffineTransform out;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) out.m[4 * r + c] = inv(r, c);
    return out;
}

namespace {

// Cubic B-spline kernel and derivative, support (-2, 2).
double bspline3(double t) {
    const double a = std::abs(t);
    if (a >= 2.0) return 0.0;
    if (a <= 1.0) return (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0;
    const double b = 2.0 - a;
    return b * b * b / 6.0;
}

double bspline3_deriv(double t) {
    const double a = std::abs(t);
    if (a >= 2.0) return 0.0;
    const double s = t >= 0.0 ? 1.0 : -1.0;
    if (a <= 1.0) return s * (-2.0 * a + 1.5 * a * a);
    const double b = 2.0 - a;
    return s * (-0.5 * b * b);
}

} // namespace

BsplineTransform BsplineTransform::zero_for_domain(const Grid3& domain, double spacing_mm) {
    if (!(spacing_mm > 0.0)) throw Error("B-spline control spacing must be > 0");
    BsplineTransform t;
    t.spacing_mm = spacing_mm;
    for (int a = 0; a < 3; ++a) {
        t.grid_origin[a] = domain.origin[a] - 2.0 * spacing_mm;
        const double extent = (domain.dims[a] - 1) * domain.spacing[a];
        const int imax = static_cast<int>(std::floor((extent + 2.0 * spacing_mm) / spacing_mm));
        t.grid_dims[a] = imax + 3;
    }
    for (auto& c : t.coef) c.assign(t.control_count(), 0.0);
    return t;
}

Point3 BsplineTransform::displacement(const Point3& p) const {
    Point3 u{0, 0, 0};
    double fx[3];
    int base[3];
    for (int a = 0; a < 3; ++a) {
        const double idx = (p[a] - grid_origin[a]) / spacing_mm;
        base[a] = static_cast<int>(std::floor(idx));
        fx[a] = idx - base[a];
    }
    double wx[4], wy[4], wz[4];
    for (int o = -1; o <= 2; ++o) {
        wx[o + 1] = bspline3(fx[0] - o);
        wy[o + 1] = bspline3(fx[1] - o);
        wz[o + 1] = bspline3(fx[2] - o);
    }
    for (int ok = 0; ok < 4; ++ok) {
        const int k = std::clamp(base[2] + ok - 1, 0, grid_dims[2] - 1);
        for (int oj = 0; oj < 4; ++oj) {
            const int j = std::clamp(base[1] + oj - 1, 0, grid_dims[1] - 1);
            const double wyz = wy[oj] * wz[ok];
            for (int oi = 0; oi < 4; ++oi) {
                const int i = std::clamp(base[0] + oi - 1, 0, grid_dims[0] - 1);
                const double w = wx[oi] * wyz;
                const std::size_t ci = control_index(i, j, k);
                u[0] += w * coef[0][ci];
                u[1] += w * coef[1][ci];
                u[2] += w * coef[2][ci];
            }
        }
    }
    return u;
}

std::array<double, 9> BsplineTransform::jacobian(const Point3& p) const {
    std::array<double, 9> jac{1, 0, 0, 0, 1, 0, 0, 0, 1};
    double fx[3];
    int base[3];
    for (int a = 0; a < 3; ++a) {
        const double idx = (p[a] - grid_origin[a]) / spacing_mm;
        base[a] = static_cast<int>(std::floor(idx));
        fx[a] = idx - base[a];
    }
    double w[3][4], dw[3][4];
    for (int a = 0; a < 3; ++a)
        for (int o = -1; o <= 2; ++o) {
            w[a][o + 1] = bspline3(fx[a] - o);
            dw[a][o + 1] = bspline3_deriv(fx[a] - o) / spacing_mm;
        }
    for (int ok = 0; ok < 4; ++ok) {
        const int k = std::clamp(base[2] + ok - 1, 0, grid_dims[2] - 1);
        for (int oj = 0; oj < 4; ++oj) {
            const int j = std::clamp(base[1] + oj - 1, 0, grid_dims[1] - 1);
            for (int oi = 0; oi < 4; ++oi) {
                const int i = std::clamp(base[0] + oi - 1, 0, grid_dims[0] - 1);
                const std::size_t ci = control_index(i, j, k);
                const double gx = dw[0][oi] * w[1][oj] * w[2][ok];
                const double gy = w[0][oi] * dw[1][oj] * w[2][ok];
                const double gz = w[0][oi] * w[1][oj] * dw[2][ok];
                for (int a = 0; a < 3; ++a) {
                    jac[3 * a + 0] += coef[a][ci] * gx;
                    jac[3 * a + 1] += coef[a][ci] * gy;
                    jac[3 * a + 2] += coef[a][ci] * gz;
                }
            }
        }
    }
    return jac;
}

Point3 DenseDisplacementField::apply(const Point3& p) const {
    Point3 out = p;
    const auto f = grid.world_to_voxel(p);
    for (int c = 0; c < 3; ++c) {
        const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
        double fx = f[0], fy = f[1], fz = f[2];
        if (fx < 0 || fy < 0 || fz < 0 || fx > nx - 1 || fy > ny - 1 || fz > nz - 1) continue;
        int x0 = std::min(static_cast<int>(std::floor(fx)), nx - 2 >= 0 ? nx - 2 : 0);
        int y0 = std::min(static_cast<int>(std::floor(fy)), ny - 2 >= 0 ? ny - 2 : 0);
        int z0 = std::min(static_cast<int>(std::floor(fz)), nz - 2 >= 0 ? nz - 2 : 0);
        x0 = std::max(x0, 0);
        y0 = std::max(y0, 0);
        z0 = std::max(z0, 0);
        const double tx = fx - x0, ty = fy - y0, tz = fz - z0;
        const int x1 = std::min(x0 + 1, nx - 1), y1 = std::min(y0 + 1, ny - 1),
                  z1 = std::min(z0 + 1, nz - 1);
        auto v = [&](int x, int y, int z) { return field.comp[c][grid.index(x, y, z)]; };
        const double c00 = v(x0, y0, z0) + tx * (v(x1, y0, z0) - v(x0, y0, z0));
        const double c10 = v(x0, y1, z0) + tx * (v(x1, y1, z0) - v(x0, y1, z0));
        const double c01 = v(x0, y0, z1) + tx * (v(x1, y0, z1) - v(x0, y0, z1));
        const double c11 = v(x0, y1, z1) + tx * (v(x1, y1, z1) - v(x0, y1, z1));
        const double c0 = c00 + ty * (c10 - c00);
        const double c1 = c01 + ty * (c11 - c01);
        out[c] += c0 + tz * (c1 - c0);
    }
    return out;
}

Point3 apply_transform(const AnyTransform& t, const Point3& p) {
    return std::visit([&](const auto& tt) { return tt.apply(p); }, t);
}

Point3 TransformChain::map_point(const Point3& p) const {
    Point3 q = p;
    for (auto it = items.rbegin(); it != items.rend(); ++it) q = apply_transform(*it, q);
    return q;
}

TransformChain compose(TransformChain chain, AnyTransform t) {
    chain.append(std::move(t));
    return chain;
}

void save_affine(const AffineTransform& t, const std::string& path) {
    std::ostringstream ss;
    ss.precision(17);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) ss << t.m[4 * r + c] << (c == 3 ? "" : " ");
        ss << "\n";
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot open file for writing: " + tmp);
        out << ss.str();
    }
    std::filesystem::rename(tmp, path);
}

AffineTransform load_affine(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("transform not found: " + path);
    AffineTransform t;
    for (double& v : t.m)
        if (!(in >> v)) throw IoError("corrupt affine transform: " + path);
    return t;
}

void save_bspline(const BsplineTransform& t, const std::string& base) {
    std::ostringstream mf;
    mf.precision(17);
    mf << "format = bxt-bspline v1\n";
    mf << "grid_dims = " << t.grid_dims[0] << " " << t.grid_dims[1] << " " << t.grid_dims[2]
       << "\n";
    mf << "spacing_mm = " << t.spacing_mm << "\n";
    mf << "grid_origin = " << t.grid_origin[0] << " " << t.grid_origin[1] << " "
       << t.grid_origin[2] << "\n";
    std::vector<unsigned char> payload;
    payload.reserve(t.control_count() * 12);
    for (int c = 0; c < 3; ++c)
        for (double d : t.coef[c]) {
            const float f = static_cast<float>(d);
            unsigned char b[4];
            std::memcpy(b, &f, 4);
            payload.insert(payload.end(), b, b + 4);
        }
    {
        const std::string tmp = base + ".manifest.tmp";
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot open file for writing: " + tmp);
        out << mf.str();
        out.close();
        std::filesystem::rename(tmp, base + ".manifest");
    }
    {
        const std::string tmp = base + ".bin.tmp";
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open file for writing: " + tmp);
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size()));
        out.close();
        std::filesystem::rename(tmp, base + ".bin");
    }
}

BsplineTransform load_bspline(const std::string& base) {
    std::ifstream mf(base + ".manifest");
    if (!mf) throw IoError("transform not found: " + base + ".manifest");
    BsplineTransform t;
    std::string line;
    while (std::getline(mf, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, line.find(' '));
        std::istringstream val(line.substr(eq + 1));
        if (key == "grid_dims")
            val >> t.grid_dims[0] >> t.grid_dims[1] >> t.grid_dims[2];
        else if (key == "spacing_mm")
            val >> t.spacing_mm;
        else if (key == "grid_origin")
            val >> t.grid_origin[0] >> t.grid_origin[1] >> t.grid_origin[2];
    }
    if (t.grid_dims[0] < 1 || t.grid_dims[1] < 1 || t.grid_dims[2] < 1 || !(t.spacing_mm > 0))
        throw IoError("corrupt B-spline transform: " + base);
    std::ifstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw IoError("transform not found: " + base + ".bin");
    std::vector<unsigned char> payload{std::istreambuf_iterator<char>(bin),
                                       std::istreambuf_iterator<char>()};
    if (payload.size() != t.control_count() * 12)
        throw IoError("corrupt B-spline transform: payload length mismatch");
    const unsigned char* p = payload.data();
    for (int c = 0; c < 3; ++c) {
        t.coef[c].resize(t.control_count());
        for (std::size_t i = 0; i < t.control_count(); ++i) {
            float f;
            std::memcpy(&f, p, 4);
            p += 4;
            t.coef[c][i] = f;
        }
    }
    return t;
}

void save_chain(const TransformChain& chain, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json index;
    index["format"] = "bxt-transform-chain v1";
    index["items"] = nlohmann::json::array();
    int n = 0;
    for (const auto& item : chain.items) {
        const std::string tag = std::to_string(n++);
        if (std::holds_alternative<AffineTransform>(item)) {
            const std::string name = "affine_" + tag + ".txt";
            save_affine(std::get<AffineTransform>(item), dir + "/" + name);
            index["items"].push_back({{"type", "affine"}, {"file", name}});
        } else if (std::holds_alternative<BsplineTransform>(item)) {
            const std::string name = "bspline_" + tag;
            save_bspline(std::get<BsplineTransform>(item), dir + "/" + name);
            index["items"].push_back({{"type", "bspline"}, {"base", name}});
        } else {
            throw Error("dense displacement fields are not serialized in chains");
        }
    }
    const std::string tmp = dir + "/chain.json.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot open file for writing: " + tmp);
        out << index.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, dir + "/chain.json");
}

TransformChain load_chain(const std::string& dir) {
    std::ifstream in(dir + "/chain.json");
    if (!in) throw IoError("transform chain not found: " + dir);
    nlohmann::json index;
    try {
        in >> index;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("corrupt transform chain: ") + e.what());
    }
    TransformChain chain;
    for (const auto& item : index.at("items")) {
        const std::string type = item.at("type").get<std::string>();
        if (type == "affine")
            chain.append(load_affine(dir + "/" + item.at("file").get<std::string>()));
        else if (type == "bspline")
            chain.append(load_bspline(dir + "/" + item.at("base").get<std::string>()));
        else
            throw IoError("corrupt transform chain: unknown item type " + type);
    }
    return chain;
}

} // namespace bxt
