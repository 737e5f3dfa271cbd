#pragma once

#include <stdexcept>
#include <string>

namespace xrid {

// Domain error codes. Every throwing operation in the library reports one of
// these; the CLI maps them to exit code 1.
enum class Errc {
    malformed_row,
    non_monotonic_time,
    empty_recording,
    io_failure,
    degenerate_quaternion,
    too_short,
    window_too_long,
    shape_mismatch,
    non_finite_value,
    non_scalar_loss,
    index_out_of_range,
    degenerate_batch,
    empty_training_set,
    empty_store,
    insufficient_span,
    roster_too_small,
    recording_too_short,
    no_windows,
    missing_app,
    incomplete_matrix,
    invalid_argument,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, Errc code, const std::string& message) {
    if (!condition) {
        fail(code, message);
    }
}

} // namespace xrid
