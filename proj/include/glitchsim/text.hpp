#pragma once

#include <string>

namespace glitchsim {

// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

// Fixed notation with the given number of decimals.
std::string format_fixed(double value, int decimals);

}  // namespace glitchsim
