#pragma once

#include <stdexcept>
#include <string>

namespace rkflow {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Kernel smoothness parameter outside the admissible range (nu must exceed 2).
struct invalid_kernel_error : error {
    using error::error;
};

// Zero or negative dimensions, or shapes that cannot be combined.
struct invalid_dimension_error : error {
    using error::error;
};

struct invalid_input_error : error {
    using error::error;
};

// Forward integration produced a non-finite or exploding state.
struct divergence_error : error {
    divergence_error(const std::string& what, int step_index)
        : error(what), step(step_index) {}
    int step;
};

// Dataset with coincident inputs where separation is required.
struct degenerate_data_error : error {
    using error::error;
};

struct config_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

}  // namespace rkflow
