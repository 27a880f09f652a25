#include "carbonfl/errors.hpp"

namespace carbonfl {

const char* errc_name(Errc c) {
    switch (c) {
        case Errc::file_not_found: return "FileNotFound";
        case Errc::schema: return "SchemaError";
        case Errc::gap: return "GapError";
        case Errc::unknown_region: return "UnknownRegion";
        case Errc::horizon_too_long: return "HorizonTooLong";
        case Errc::window_too_short: return "WindowTooShort";
        case Errc::zero_baseline: return "ZeroBaseline";
        case Errc::bad_n: return "BadN";
        case Errc::offset_out_of_range: return "OffsetOutOfRange";
        case Errc::dimension_mismatch: return "DimensionMismatch";
        case Errc::bad_alpha: return "BadAlpha";
        case Errc::bad_config: return "BadConfig";
        case Errc::instance_too_large: return "InstanceTooLarge";
        case Errc::no_feasible_placement: return "NoFeasiblePlacement";
        case Errc::bad_shape: return "BadShape";
        case Errc::partition_failure: return "PartitionFailure";
        case Errc::empty_active_set: return "EmptyActiveSet";
        case Errc::zero_frequency_active: return "ZeroFrequencyActive";
        case Errc::non_finite_loss: return "NonFiniteLoss";
        case Errc::empty_test_set: return "EmptyTestSet";
        case Errc::schedule_cost_mismatch: return "ScheduleCostMismatch";
        case Errc::io: return "IoError";
    }
    return "Error";
}

int errc_exit_code(Errc c) {
    switch (c) {
        case Errc::file_not_found:
            return 3;
        case Errc::schema:
            return 4;
        case Errc::gap:
            return 5;
        case Errc::unknown_region:
            return 6;
        case Errc::horizon_too_long:
        case Errc::window_too_short:
        case Errc::bad_n:
        case Errc::offset_out_of_range:
        case Errc::dimension_mismatch:
        case Errc::bad_alpha:
        case Errc::bad_config:
        case Errc::bad_shape:
        case Errc::schedule_cost_mismatch:
            return 7;
        case Errc::no_feasible_placement:
            return 8;
        case Errc::instance_too_large:
            return 9;
        case Errc::zero_baseline:
        case Errc::partition_failure:
        case Errc::empty_active_set:
        case Errc::zero_frequency_active:
        case Errc::non_finite_loss:
        case Errc::empty_test_set:
            return 10;
        case Errc::io:
            return 11;
    }
    return 1;
}

}  // namespace carbonfl
