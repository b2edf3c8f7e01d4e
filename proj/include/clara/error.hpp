#pragma once

#include <stdexcept>
#include <string>

namespace clara {

// Shape/dimension disagreement between tensors or file payloads.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values, degenerate norms, zero likelihoods.
struct NumericError : std::domain_error {
    using std::domain_error::domain_error;
};

// Out-of-range token ids, unknown document ids.
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Selection request larger than the candidate pool.
struct CapacityError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Unreadable, truncated or corrupt on-disk artifacts.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad command-line invocations and invalid configurations.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace clara
