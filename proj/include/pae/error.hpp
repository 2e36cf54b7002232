#pragma once

#include <stdexcept>
#include <string>

namespace pae {

// Error taxonomy mapped to CLI exit codes: ConfigError/UsageError -> 1,
// NumericError -> 2. Everything else is a programming bug.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ContractError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct DegenerateInputError : Error {
    using Error::Error;
};

}  // namespace pae
