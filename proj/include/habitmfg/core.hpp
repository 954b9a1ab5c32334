#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "habitmfg/errors.hpp"

namespace habitmfg {

enum class Regime { exponential, power };

std::string to_string(Regime regime);
Regime regime_from_string(const std::string& name);

// Market and preference constants shared by every agent: horizon T, habit
// persistence delta, initial wealth x0 and initial habit z0.
struct MarketParams {
    double horizon = 1.0;
    double delta = 0.1;
    double x0 = 5.0;
    double z0 = 1.0;

    void validate(Regime regime) const;
};

// One agent type. `risk` is the absolute risk tolerance beta in the
// exponential regime and the power exponent p in the power regime.
// `terminal_theta` overrides the competition weight applied to the terminal
// wealth benchmark; when unset it equals `theta`.
struct AgentClass {
    double mu = 0.2;
    double sigma = 0.2;
    double risk = 1.0;
    double theta = 1.0;
    std::optional<double> terminal_theta;

    double theta_terminal() const { return terminal_theta.value_or(theta); }
    double sharpe_sq() const { return (mu / sigma) * (mu / sigma); }

    void validate(Regime regime, const std::string& field_prefix = "class") const;
};

// Finite type law: classes with probabilities F({k}).
class TypeDistribution {
public:
    TypeDistribution() = default;
    TypeDistribution(std::vector<AgentClass> classes, std::vector<double> weights);

    static TypeDistribution single(const AgentClass& cls) { return {{cls}, {1.0}}; }

    std::size_t size() const noexcept { return classes_.size(); }
    const AgentClass& cls(std::size_t k) const { return classes_.at(k); }
    double weight(std::size_t k) const { return weights_.at(k); }
    const std::vector<AgentClass>& classes() const noexcept { return classes_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

    // E_m[h(o)] over the type law.
    double expect(const std::function<double(const AgentClass&)>& h) const;

    void validate(Regime regime) const;

private:
    std::vector<AgentClass> classes_;
    std::vector<double> weights_;
};

// Uniform grid t_j = j T / N, j = 0..N.
class TimeGrid {
public:
    TimeGrid(double horizon, int n_steps);

    int n_steps() const noexcept { return n_steps_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(n_steps_) + 1; }
    double horizon() const noexcept { return horizon_; }
    double step() const noexcept { return step_; }
    double node(std::size_t j) const;
    std::vector<double> nodes() const;

    // Index of the cell [t_j, t_{j+1}] containing t (the last cell for t = T).
    std::size_t cell_of(double t) const;

    bool operator==(const TimeGrid& other) const noexcept {
        return n_steps_ == other.n_steps_ && horizon_ == other.horizon_;
    }

private:
    double horizon_;
    int n_steps_;
    double step_;
};

// Real function sampled on a TimeGrid.
class GridPath {
public:
    GridPath(TimeGrid grid, std::vector<double> values);
    GridPath(TimeGrid grid, double constant);
    static GridPath from_function(const TimeGrid& grid, const std::function<double(double)>& f);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t j) const { return values_[j]; }
    std::span<const double> values() const noexcept { return values_; }
    double front() const { return values_.front(); }
    double back() const { return values_.back(); }

    // Piecewise-linear interpolation between nodes.
    double at(double t) const;

private:
    TimeGrid grid_;
    std::vector<double> values_;
};

double sup_norm_diff(const GridPath& a, const GridPath& b);
void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* context);

// Trapezoid rule over [t_from, t_to]; exact for piecewise-linear integrands.
double trapezoid_integral(const GridPath& path, std::size_t from_index, std::size_t to_index);

// value_j = integral of the path over [t_j, T]; value_N = 0.
GridPath cumulative_tail_integral(const GridPath& path);

// value_j = integral of the path over [0, t_j]; value_0 = 0.
GridPath cumulative_integral(const GridPath& path);

// Raw-array form used on hot paths; `out` must not alias `values`.
void cumulative_trapezoid(std::span<const double> values, double step, std::span<double> out);

// Integral of the interpolant over [t, T] for arbitrary t in [0, T], given the
// precomputed node tails of `path`.
double tail_integral_at(const GridPath& path, const GridPath& tail, double t);

}  // namespace habitmfg
