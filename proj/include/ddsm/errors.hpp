#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ddsm {

// Invalid arguments or configuration values.
class parameter_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Mismatched tensor / field / trace shapes.
class shape_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Pure-Neumann problem (mu == 0) driven with a flux of nonzero boundary mean.
class incompatible_flux_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Iterative solver stopped before reaching the requested tolerance.
class convergence_error : public std::runtime_error {
public:
    convergence_error(const std::string& msg, std::size_t iterations)
        : std::runtime_error(msg + " after " + std::to_string(iterations) + " iterations"),
          iterations(iterations) {}
    std::size_t iterations;
};

// Numerical degeneracy: zero probing norm, empty spectrum, and similar.
class degeneracy_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Persistence: unrecognized magic / version.
class format_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Persistence: header arithmetic does not match the payload.
class corruption_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ddsm
