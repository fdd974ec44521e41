#include "bxt/model_io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "bxt/errors.hpp"

namespace bxt {

namespace {

void append_volume_f32(std::vector<unsigned char>& out, const Volume3& v) {
    for (double d : v.data) {
        const float f = static_cast<float>(d);
        unsigned char b[4];
        std::memcpy(b, &f, 4);
        out.insert(out.end(), b, b + 4);
    }
}

void write_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open file for writing: " + tmp);
        out << text;
        if (!out) {
            std::filesystem::remove(tmp);
            throw IoError("write failed: " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_atomic(const std::string& path, const std::vector<unsigned char>& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open file for writing: " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            std::filesystem::remove(tmp);
            throw IoError("write failed: " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

void save_model(const PcaBasis& b, const std::string& base) {
    if (b.mode_count() < 1) throw Error("model must contain at least one mode");
    const Grid3& g = b.grid();
    std::ostringstream manifest;
    manifest.precision(17);
    manifest << "format = bxt-pca-model v1\n";
    manifest << "dims = " << g.dims[0] << " " << g.dims[1] << " " << g.dims[2] << "\n";
    manifest << "spacing = " << g.spacing[0] << " " << g.spacing[1] << " " << g.spacing[2] << "\n";
    manifest << "origin = " << g.origin[0] << " " << g.origin[1] << " " << g.origin[2] << "\n";
    manifest << "modes = " << b.mode_count() << "\n";
    manifest << "explained_variance =";
    for (double ev : b.explained_variance) manifest << " " << ev;
    manifest << "\n";

    std::vector<unsigned char> payload;
    payload.reserve((b.mode_count() + 1) * g.voxel_count() * 4);
    append_volume_f32(payload, b.mean);
    for (const auto& mode : b.modes) {
        require_same_grid(g, mode.grid, "model modes");
        append_volume_f32(payload, mode);
    }

    write_atomic(base + ".manifest", manifest.str());
    write_atomic(base + ".bin", payload);
}

PcaBasis load_model(const std::string& base) {
    std::ifstream mf(base + ".manifest");
    if (!mf) throw IoError("model not found: " + base + ".manifest");

    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(mf, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("corrupt model container: bad manifest line");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto z = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, z - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    for (const char* key : {"format", "dims", "spacing", "origin", "modes"})
        if (!kv.count(key))
            throw IoError(std::string("corrupt model container: missing manifest key '") + key +
                          "'");
    if (kv["format"] != "bxt-pca-model v1")
        throw IoError("corrupt model container: unknown format '" + kv["format"] + "'");

    Grid3 g;
    {
        std::istringstream d(kv["dims"]), s(kv["spacing"]), o(kv["origin"]);
        if (!(d >> g.dims[0] >> g.dims[1] >> g.dims[2]) ||
            !(s >> g.spacing[0] >> g.spacing[1] >> g.spacing[2]) ||
            !(o >> g.origin[0] >> g.origin[1] >> g.origin[2]))
            throw IoError("corrupt model container: bad geometry fields");
    }
    g.validate();
    int k = 0;
    {
        std::istringstream m(kv["modes"]);
        if (!(m >> k) || k < 1) throw IoError("corrupt model container: bad mode count");
    }

    std::ifstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw IoError("model not found: " + base + ".bin");
    std::vector<unsigned char> payload{std::istreambuf_iterator<char>(bin),
                                       std::istreambuf_iterator<char>()};
    const std::size_t expected = static_cast<std::size_t>(k + 1) * g.voxel_count() * 4;
    if (payload.size() != expected)
        throw IoError("corrupt model container: payload length " +
                      std::to_string(payload.size()) + " != expected " +
                      std::to_string(expected));

    auto read_volume_at = [&](std::size_t vol_idx) {
        Volume3 v(g);
        const unsigned char* p = payload.data() + vol_idx * g.voxel_count() * 4;
        for (std::size_t i = 0; i < g.voxel_count(); ++i) {
            float f;
            std::memcpy(&f, p + 4 * i, 4);
            v.data[i] = f;
        }
        return v;
    };

    PcaBasis b;
    b.mean = read_volume_at(0);
    for (int m = 0; m < k; ++m) b.modes.push_back(read_volume_at(m + 1));
    if (kv.count("explained_variance")) {
        std::istringstream ev(kv["explained_variance"]);
        double x;
        while (ev >> x) b.explained_variance.push_back(x);
    }

    if (b.orthonormality_error() > 1e-5)
        throw IoError("corrupt model container: basis not orthonormal");
    return b;
}

} // namespace bxt
