#pragma once

#include <stdexcept>
#include <string>

namespace ncd {

// Base error for everything the library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input data or configuration (CLI exit code 2).
struct InputError : Error {
    using Error::Error;
};

// Data failed validation checks (CLI exit code 3).
struct ValidationError : Error {
    using Error::Error;
};

} // namespace ncd
