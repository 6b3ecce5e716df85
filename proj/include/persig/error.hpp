#pragma once

#include <stdexcept>
#include <string>

namespace persig {

enum class Errc {
    bad_magic,
    truncated,
    bad_shape,
    label_out_of_range,
    count_mismatch,
    shape_mismatch,
    non_finite_value,
    missing_activations,
    empty_dataset,
    oracle_failure,
    empty_batch,
    dataset_too_small,
    stats_missing,
    direction_set_mismatch,
    length_mismatch,
    connection_lost,
    malformed_frame,
    version_mismatch,
    missing_artifact,
    io_failure,
    bad_config,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::bad_magic: return "BadMagic";
        case Errc::truncated: return "Truncated";
        case Errc::bad_shape: return "BadShape";
        case Errc::label_out_of_range: return "LabelOutOfRange";
        case Errc::count_mismatch: return "CountMismatch";
        case Errc::shape_mismatch: return "ShapeMismatch";
        case Errc::non_finite_value: return "NonFiniteValue";
        case Errc::missing_activations: return "MissingActivations";
        case Errc::empty_dataset: return "EmptyDataset";
        case Errc::oracle_failure: return "OracleFailure";
        case Errc::empty_batch: return "EmptyBatch";
        case Errc::dataset_too_small: return "DatasetTooSmall";
        case Errc::stats_missing: return "StatsMissing";
        case Errc::direction_set_mismatch: return "DirectionSetMismatch";
        case Errc::length_mismatch: return "LengthMismatch";
        case Errc::connection_lost: return "ConnectionLost";
        case Errc::malformed_frame: return "MalformedFrame";
        case Errc::version_mismatch: return "VersionMismatch";
        case Errc::missing_artifact: return "MissingArtifact";
        case Errc::io_failure: return "IoFailure";
        case Errc::bad_config: return "BadConfig";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

} // namespace persig
