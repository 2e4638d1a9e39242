#pragma once

#include <stdexcept>
#include <string>

namespace fewfont {

// Thrown when tensor shapes or dimensions do not line up.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Contract violations: bad arguments, non-finite values in checked mode.
struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input files (decomposition tables, checkpoints, PNGs).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Missing or inconsistent datasets, paths, mappings.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training diverged (non-finite loss); carries the iteration in the message.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fewfont
