#pragma once

#include <span>

namespace habitmfg {

// OLS fit of log(y) = intercept + slope log(x).
struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    int points = 0;
    // Every y was exactly zero: nothing to fit, the errors vanish identically.
    bool exact_match = false;
    bool valid = false;
};

// Points with y <= 0 are dropped unless all of them are zero. Needs at least
// two usable points for a slope and three for a standard error.
LogLogFit fit_log_log(std::span<const double> x, std::span<const double> y);

}  // namespace habitmfg
