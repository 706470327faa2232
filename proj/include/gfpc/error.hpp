#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gfpc {

enum class Errc {
    invalid_argument,
    degenerate_loop,
    pole_on_grid,
    power_angle_limit,
    numerical,
    wrong_regime,
    degenerate_order,
    no_crossover,
    invalid_operating_point,
    infeasible_margin,
    self_check,
    incomparable_runs,
    unstable_loop,
    config,
};

constexpr std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::invalid_argument: return "invalid-argument";
        case Errc::degenerate_loop: return "degenerate-loop";
        case Errc::pole_on_grid: return "pole-on-grid";
        case Errc::power_angle_limit: return "power-angle-limit";
        case Errc::numerical: return "numerical";
        case Errc::wrong_regime: return "wrong-regime";
        case Errc::degenerate_order: return "degenerate-order";
        case Errc::no_crossover: return "no-crossover";
        case Errc::invalid_operating_point: return "invalid-operating-point";
        case Errc::infeasible_margin: return "infeasible-margin";
        case Errc::self_check: return "self-check";
        case Errc::incomparable_runs: return "incomparable-runs";
        case Errc::unstable_loop: return "unstable-loop";
        case Errc::config: return "config";
    }
    return "unknown";
}

/// Every failure raised by the library. `code()` identifies the failure class.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace gfpc
