#pragma once

#include <string>

namespace qivc {

/// Shortest round-trip decimal form of a double (std::to_chars), used for
/// every CSV cell so reruns produce byte-identical files.
std::string fmt_real(double v);

}  // namespace qivc
