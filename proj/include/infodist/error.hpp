#pragma once

#include <stdexcept>
#include <string>

namespace infodist {

// Raised for malformed inputs and failed pipeline stages. Precondition
// violations by the caller use std::invalid_argument instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace infodist
