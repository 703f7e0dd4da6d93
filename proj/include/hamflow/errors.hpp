#pragma once

#include <stdexcept>
#include <string>

namespace hamflow {

// Bad arguments, dimension mismatches, malformed files.
struct input_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Point outside the covered region of a mesh or quadrature domain.
struct range_error : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Point on a closed-cube face; measure zero, caller decides.
struct boundary_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A trajectory left the safety box: the completeness assumption failed
// operationally.  Carries the escape time.
struct escape_error : std::runtime_error {
    double time;
    explicit escape_error(const std::string& what, double t)
        : std::runtime_error(what), time(t) {}
};

// Supports or tubes of localized profiles collide.
struct geometry_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Densities are not signature-equivalent (not in the same orbit closure).
struct not_equivalent_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requested construction is not available on this space.
struct unsupported_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exact rational arithmetic left the representable range.
struct coefficient_overflow : std::overflow_error {
    using std::overflow_error::overflow_error;
};

} // namespace hamflow
