#include "xrid/error.hpp"

namespace xrid {

const char* errc_name(Errc code) {
    switch (code) {
    case Errc::malformed_row: return "MalformedRow";
    case Errc::non_monotonic_time: return "NonMonotonicTime";
    case Errc::empty_recording: return "EmptyRecording";
    case Errc::io_failure: return "IoFailure";
    case Errc::degenerate_quaternion: return "DegenerateQuaternion";
    case Errc::too_short: return "TooShort";
    case Errc::window_too_long: return "WindowTooLong";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::non_finite_value: return "NonFiniteValue";
    case Errc::non_scalar_loss: return "NonScalarLoss";
    case Errc::index_out_of_range: return "IndexOutOfRange";
    case Errc::degenerate_batch: return "DegenerateBatch";
    case Errc::empty_training_set: return "EmptyTrainingSet";
    case Errc::empty_store: return "EmptyStore";
    case Errc::insufficient_span: return "InsufficientSpan";
    case Errc::roster_too_small: return "RosterTooSmall";
    case Errc::recording_too_short: return "RecordingTooShort";
    case Errc::no_windows: return "NoWindows";
    case Errc::missing_app: return "MissingApp";
    case Errc::incomplete_matrix: return "IncompleteMatrix";
    case Errc::invalid_argument: return "InvalidArgument";
    }
    return "UnknownError";
}

} // namespace xrid
