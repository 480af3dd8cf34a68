#pragma once

#include <cstdio>
#include <string>

namespace ftlab {

/// Deterministic float formatting for CSV output: shortest-ish fixed format
/// that round-trips doubles ("%.17g") is noisy, so metrics use 12 significant
/// digits, which is stable and well beyond any tolerance asserted on them.
inline std::string csv_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace ftlab
