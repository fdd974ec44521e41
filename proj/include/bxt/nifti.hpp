#ifndef BXT_NIFTI_HPP
#define BXT_NIFTI_HPP

#include <string>

#include "bxt/volume.hpp"

namespace bxt {

enum class NiftiDatatype : short {
    Uint8 = 2,
    Int16 = 4,
    Float32 = 16,
    Float64 = 64,
};

/// Read a single-file NIfTI-1 volume (.nii or .nii.gz). Supported datatypes:
/// uint8, int16, float32, float64; scl_slope/scl_inter are applied on read.
/// Error categories: "unrecognized format", "unsupported datatype",
/// "payload length mismatch".
Volume3 read_volume(const std::string& path);

/// Write a single-file NIfTI-1 volume. Files are written to a temporary name
/// and renamed, so a failed write leaves no partial file. A ".gz" suffix
/// selects gzip stream compression (with deterministic header bytes).
void write_volume(const Volume3& v, const std::string& path,
                  NiftiDatatype datatype = NiftiDatatype::Float32);

Volume3 mask_to_volume(const BinaryMask3& m);
BinaryMask3 volume_to_mask(const Volume3& v, double threshold = 0.5);

BinaryMask3 read_mask(const std::string& path, double threshold = 0.5);
void write_mask(const BinaryMask3& m, const std::string& path);

} // namespace bxt

#endif
