#pragma once

#include <stdexcept>
#include <string>

namespace talsc {

// Bad shapes, bad topology, bad config values.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad runtime inputs (non-finite data, malformed labels, oversized requests).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation called out of order (backward without a recorded forward, stale record).
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical solver could not produce a usable result.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Formula preconditions violated (e.g. closed-form update with momentum enabled).
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// |h| below the usable threshold; the batch is skipped.
struct DeepFadeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace talsc
