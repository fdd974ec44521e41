#include "bxt/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "bxt/errors.hpp"

namespace bxt {

namespace {

#pragma pack(push, 1)
struct Nifti1Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

bool is_gzip(const std::vector<unsigned char>& bytes) {
    return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("zlib init failed");
    std::vector<unsigned char> out;
    out.reserve(in.size() * 4);
    std::vector<unsigned char> buf(1 << 16);
    zs.next_in = const_cast<unsigned char*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw IoError("corrupt gzip stream");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

std::vector<unsigned char> gzip(const std::vector<unsigned char>& in) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                     Z_DEFAULT_STRATEGY) != Z_OK)
        throw IoError("zlib init failed");
    // Pin the gzip header fields (mtime in particular) so repeated writes of
    // the same volume produce identical bytes.
    gz_header gh{};
    gh.os = 255;
    deflateSetHeader(&zs, &gh);
    std::vector<unsigned char> out(deflateBound(&zs, static_cast<uLong>(in.size())));
    zs.next_in = const_cast<unsigned char*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    if (deflate(&zs, Z_FINISH) != Z_STREAM_END) {
        deflateEnd(&zs);
        throw IoError("gzip compression failed");
    }
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

void write_file_atomic(const std::string& path, const std::vector<unsigned char>& bytes) {
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

Volume3 read_volume(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (is_gzip(bytes)) bytes = gunzip(bytes);
    if (bytes.size() < sizeof(Nifti1Header)) throw IoError("unrecognized format: " + path);

    Nifti1Header hdr{};
    std::memcpy(&hdr, bytes.data(), sizeof(hdr));
    if (hdr.sizeof_hdr != 348 || std::strncmp(hdr.magic, "n+1", 3) != 0)
        throw IoError("unrecognized format: " + path);
    if (hdr.dim[0] < 3 || hdr.dim[0] > 4 || (hdr.dim[0] == 4 && hdr.dim[4] > 1))
        throw IoError("unrecognized format: only single-frame 3D volumes are supported");

    const short dt = hdr.datatype;
    std::size_t elem = 0;
    switch (static_cast<NiftiDatatype>(dt)) {
        case NiftiDatatype::Uint8: elem = 1; break;
        case NiftiDatatype::Int16: elem = 2; break;
        case NiftiDatatype::Float32: elem = 4; break;
        case NiftiDatatype::Float64: elem = 8; break;
        default: throw IoError("unsupported datatype: code " + std::to_string(dt));
    }

    Grid3 g;
    g.dims = {hdr.dim[1], hdr.dim[2], hdr.dim[3]};
    g.spacing = {hdr.pixdim[1], hdr.pixdim[2], hdr.pixdim[3]};
    if (hdr.sform_code > 0) {
        const float* rows[3] = {hdr.srow_x, hdr.srow_y, hdr.srow_z};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                if (r == c) continue;
                if (std::abs(rows[r][c]) > 1e-3 * (std::abs(g.spacing[c]) + 1e-6))
                    throw IoError("unsupported non-axis-aligned affine in header");
            }
        for (int a = 0; a < 3; ++a) {
            const double d = rows[a][a];
            if (d <= 0.0) throw IoError("unsupported non-axis-aligned affine in header");
            g.spacing[a] = d;
            g.origin[a] = rows[a][3];
        }
    }
    g.validate();

    const std::size_t n = g.voxel_count();
    const std::size_t offset = static_cast<std::size_t>(hdr.vox_offset);
    if (offset < sizeof(Nifti1Header) || bytes.size() < offset + n * elem)
        throw IoError("payload length mismatch: " + path);

    const unsigned char* p = bytes.data() + offset;
    Volume3 v(g);
    const bool has_scl = hdr.scl_slope != 0.0f && !(hdr.scl_slope == 1.0f && hdr.scl_inter == 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        double raw = 0.0;
        switch (static_cast<NiftiDatatype>(dt)) {
            case NiftiDatatype::Uint8: raw = p[i]; break;
            case NiftiDatatype::Int16: {
                std::int16_t s;
                std::memcpy(&s, p + 2 * i, 2);
                raw = s;
                break;
            }
            case NiftiDatatype::Float32: {
                float f;
                std::memcpy(&f, p + 4 * i, 4);
                raw = f;
                break;
            }
            case NiftiDatatype::Float64: {
                double d;
                std::memcpy(&d, p + 8 * i, 8);
                raw = d;
                break;
            }
        }
        v.data[i] = has_scl ? hdr.scl_slope * raw + hdr.scl_inter : raw;
    }
    return v;
}

void write_volume(const Volume3& v, const std::string& path, NiftiDatatype datatype) {
    v.validate();
    const auto& g = v.grid;

    Nifti1Header hdr{};
    hdr.sizeof_hdr = 348;
    hdr.regular = 'r';
    hdr.dim[0] = 3;
    hdr.dim[1] = static_cast<std::int16_t>(g.dims[0]);
    hdr.dim[2] = static_cast<std::int16_t>(g.dims[1]);
    hdr.dim[3] = static_cast<std::int16_t>(g.dims[2]);
    for (int i = 4; i < 8; ++i) hdr.dim[i] = 1;
    hdr.datatype = static_cast<std::int16_t>(datatype);
    switch (datatype) {
        case NiftiDatatype::Uint8: hdr.bitpix = 8; break;
        case NiftiDatatype::Int16: hdr.bitpix = 16; break;
        case NiftiDatatype::Float32: hdr.bitpix = 32; break;
        case NiftiDatatype::Float64: hdr.bitpix = 64; break;
    }
    hdr.pixdim[0] = 1.0f;
    for (int a = 0; a < 3; ++a) hdr.pixdim[a + 1] = static_cast<float>(g.spacing[a]);
    hdr.vox_offset = 352.0f;
    hdr.scl_slope = 1.0f;
    hdr.scl_inter = 0.0f;
    hdr.xyzt_units = 2; // mm
    std::strncpy(hdr.descrip, "bxt volume", sizeof(hdr.descrip) - 1);
    hdr.sform_code = 1;
    hdr.srow_x[0] = static_cast<float>(g.spacing[0]);
    hdr.srow_y[1] = static_cast<float>(g.spacing[1]);
    hdr.srow_z[2] = static_cast<float>(g.spacing[2]);
    hdr.srow_x[3] = static_cast<float>(g.origin[0]);
    hdr.srow_y[3] = static_cast<float>(g.origin[1]);
    hdr.srow_z[3] = static_cast<float>(g.origin[2]);
    hdr.qform_code = 0;
    std::memcpy(hdr.magic, "n+1", 4);

    const std::size_t n = g.voxel_count();
    std::size_t elem = hdr.bitpix / 8;
    std::vector<unsigned char> bytes(352 + n * elem, 0);
    std::memcpy(bytes.data(), &hdr, sizeof(hdr));
    unsigned char* p = bytes.data() + 352;
    for (std::size_t i = 0; i < n; ++i) {
        const double val = v.data[i];
        switch (datatype) {
            case NiftiDatatype::Uint8: {
                const double c = std::clamp(std::round(val), 0.0, 255.0);
                p[i] = static_cast<unsigned char>(c);
                break;
            }
            case NiftiDatatype::Int16: {
                const double c = std::clamp(std::round(val), -32768.0, 32767.0);
                const std::int16_t s = static_cast<std::int16_t>(c);
                std::memcpy(p + 2 * i, &s, 2);
                break;
            }
            case NiftiDatatype::Float32: {
                const float f = static_cast<float>(val);
                std::memcpy(p + 4 * i, &f, 4);
                break;
            }
            case NiftiDatatype::Float64: {
                std::memcpy(p + 8 * i, &val, 8);
                break;
            }
        }
    }

    if (path.size() > 3 && path.substr(path.size() - 3) == ".gz") bytes = gzip(bytes);
    write_file_atomic(path, bytes);
}

Volume3 mask_to_volume(const BinaryMask3& m) {
    Volume3 v(m.grid);
    for (std::size_t i = 0; i < m.data.size(); ++i) v.data[i] = m.data[i] ? 1.0 : 0.0;
    return v;
}

BinaryMask3 volume_to_mask(const Volume3& v, double threshold) {
    BinaryMask3 m(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i) m.data[i] = v.data[i] >= threshold ? 1 : 0;
    return m;
}

BinaryMask3 read_mask(const std::string& path, double threshold) {
    return volume_to_mask(read_volume(path), threshold);
}

void write_mask(const BinaryMask3& m, const std::string& path) {
    write_volume(mask_to_volume(m), path, NiftiDatatype::Uint8);
}

} // namespace bxt
