#pragma once

#include <stdexcept>
#include <string>

namespace affectdyn {

// Malformed or inconsistent input data. The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A backend is unusable (missing credential, bad endpoint). Exit code 3.
struct ProviderError : std::runtime_error {
    explicit ProviderError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace affectdyn
