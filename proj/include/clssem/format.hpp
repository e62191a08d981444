#pragma once

#include <string>

namespace clssem {

/// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace clssem
