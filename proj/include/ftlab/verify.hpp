#pragma once

#include <string>
#include <vector>

namespace ftlab::verify {

struct PropertyResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Runs every module's invariant suite. Each property is self-contained and
/// deterministic; `detail` carries the measured quantity for the report line.
std::vector<PropertyResult> run_all();

}  // namespace ftlab::verify
