#pragma once

#include <stdexcept>
#include <string>

namespace carbonfl {

enum class Errc {
    file_not_found,
    schema,
    gap,
    unknown_region,
    horizon_too_long,
    window_too_short,
    zero_baseline,
    bad_n,
    offset_out_of_range,
    dimension_mismatch,
    bad_alpha,
    bad_config,
    instance_too_large,
    no_feasible_placement,
    bad_shape,
    partition_failure,
    empty_active_set,
    zero_frequency_active,
    non_finite_loss,
    empty_test_set,
    schedule_cost_mismatch,
    io,
};

const char* errc_name(Errc c);

/// Exit code family used by the CLI (documented in the README).
int errc_exit_code(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace carbonfl
