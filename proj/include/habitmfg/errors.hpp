#pragma once

#include <stdexcept>
#include <string>

namespace habitmfg {

// Invalid configuration or parameter value. `field` names the offending
// entry, e.g. "distribution[0].p".
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// A function evaluated outside its mathematical domain (nonpositive habit
// under a negative power, time outside [0,T], ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class GridMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonConvergence : public std::runtime_error {
public:
    NonConvergence(const std::string& what, int iterations, double residual)
        : std::runtime_error(what + " (iterations=" + std::to_string(iterations) +
                             ", residual=" + std::to_string(residual) + ")"),
          iterations_(iterations),
          residual_(residual) {}

    int iterations() const noexcept { return iterations_; }
    double residual() const noexcept { return residual_; }

private:
    int iterations_;
    double residual_;
};

class BracketFailure : public std::runtime_error {
public:
    BracketFailure(const std::string& what, double lo, double hi, double f_lo, double f_hi)
        : std::runtime_error(what + " [lo=" + std::to_string(lo) + ", hi=" + std::to_string(hi) +
                             ", f(lo)=" + std::to_string(f_lo) +
                             ", f(hi)=" + std::to_string(f_hi) + "]"),
          lo_(lo),
          hi_(hi),
          f_lo_(f_lo),
          f_hi_(f_hi) {}

    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    double f_lo() const noexcept { return f_lo_; }
    double f_hi() const noexcept { return f_hi_; }

private:
    double lo_, hi_, f_lo_, f_hi_;
};

}  // namespace habitmfg
