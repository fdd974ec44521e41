#ifndef BXT_MODEL_IO_HPP
#define BXT_MODEL_IO_HPP

#include <string>

#include "bxt/pca.hpp"

namespace bxt {

/// PCA model container: `<base>.manifest` (UTF-8 key/value text) plus
/// `<base>.bin` holding the mean volume followed by the k mode volumes as
/// little-endian float32, in that fixed order. `base` is the path without
/// either suffix. Load validates payload size and basis orthonormality
/// (1e-5); violations raise "corrupt model container".
void save_model(const PcaBasis& b, const std::string& base);
PcaBasis load_model(const std::string& base);

} // namespace bxt

#endif
