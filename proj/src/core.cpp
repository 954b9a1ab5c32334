#include "habitmfg/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace habitmfg {

std::string to_string(Regime regime) {
    return regime == Regime::exponential ? "exponential" : "power";
}

Regime regime_from_string(const std::string& name) {
    if (name == "exponential" || name == "exp") return Regime::exponential;
    if (name == "power") return Regime::power;
    throw ValidationError("regime", "expected 'exponential' or 'power', got '" + name + "'");
}

namespace {

void require(bool ok, const std::string& field, const std::string& message) {
    if (!ok) throw ValidationError(field, message);
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

void MarketParams::validate(Regime regime) const {
    require(finite(horizon) && horizon > 0.0, "market.T", "horizon must be finite and > 0");
    require(finite(delta) && delta > 0.0, "market.delta", "habit persistence must be > 0");
    require(finite(z0) && z0 > 0.0, "market.z0", "initial habit must be > 0");
    require(finite(x0), "market.x0", "initial wealth must be finite");
    if (regime == Regime::power) {
        require(x0 > 0.0, "market.x0", "initial wealth must be > 0 in the power regime");
    }
}

void AgentClass::validate(Regime regime, const std::string& field_prefix) const {
    require(finite(mu) && mu > 0.0, field_prefix + ".mu", "drift must be > 0");
    require(finite(sigma) && sigma > 0.0, field_prefix + ".sigma", "volatility must be > 0");
    if (regime == Regime::exponential) {
        require(finite(risk) && risk > 0.0, field_prefix + ".beta", "risk tolerance must be > 0");
    } else {
        require(finite(risk) && risk > 0.0 && risk < 1.0, field_prefix + ".p",
                "power exponent must lie in (0,1)");
    }
    require(finite(theta) && theta >= 0.0 && theta <= 1.0, field_prefix + ".theta",
            "competition weight must lie in [0,1]");
    if (terminal_theta) {
        const double tt = *terminal_theta;
        require(finite(tt) && tt >= 0.0 && tt <= 1.0, field_prefix + ".terminal_theta",
                "terminal competition weight must lie in [0,1]");
    }
}

TypeDistribution::TypeDistribution(std::vector<AgentClass> classes, std::vector<double> weights)
    : classes_(std::move(classes)), weights_(std::move(weights)) {
    require(!classes_.empty(), "distribution", "at least one class is required");
    require(classes_.size() == weights_.size(), "distribution.weights",
            "one weight per class is required");
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        require(finite(weights_[k]) && weights_[k] >= 0.0,
                "distribution[" + std::to_string(k) + "].weight", "weight must be >= 0");
    }
    const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
    require(std::abs(total - 1.0) <= 1e-12, "distribution.weights",
            "weights must sum to 1 (got " + std::to_string(total) + ")");
}

double TypeDistribution::expect(const std::function<double(const AgentClass&)>& h) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < classes_.size(); ++k) acc += weights_[k] * h(classes_[k]);
    return acc;
}

void TypeDistribution::validate(Regime regime) const {
    for (std::size_t k = 0; k < classes_.size(); ++k) {
        classes_[k].validate(regime, "distribution[" + std::to_string(k) + "]");
    }
}

TimeGrid::TimeGrid(double horizon, int n_steps)
    : horizon_(horizon), n_steps_(n_steps), step_(horizon / n_steps) {
    require(finite(horizon) && horizon > 0.0, "grid.T", "horizon must be > 0");
    require(n_steps >= 2, "grid.n_steps", "at least 2 steps are required");
}

double TimeGrid::node(std::size_t j) const {
    if (j > static_cast<std::size_t>(n_steps_)) throw std::out_of_range("grid node index");
    // Exact endpoints, uniform interior.
    if (j == static_cast<std::size_t>(n_steps_)) return horizon_;
    return horizon_ * static_cast<double>(j) / n_steps_;
}

std::vector<double> TimeGrid::nodes() const {
    std::vector<double> t(size());
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = node(j);
    return t;
}

std::size_t TimeGrid::cell_of(double t) const {
    if (!(t >= 0.0 && t <= horizon_)) {
        throw DomainError("time " + std::to_string(t) + " outside [0, " +
                          std::to_string(horizon_) + "]");
    }
    auto j = static_cast<std::size_t>(std::floor(t / step_));
    return std::min<std::size_t>(j, static_cast<std::size_t>(n_steps_) - 1);
}

GridPath::GridPath(TimeGrid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
        throw GridMismatch("path has " + std::to_string(values_.size()) + " values, grid needs " +
                           std::to_string(grid_.size()));
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw DomainError("grid path contains a non-finite value");
    }
}

GridPath::GridPath(TimeGrid grid, double constant)
    : GridPath(grid, std::vector<double>(grid.size(), constant)) {}

GridPath GridPath::from_function(const TimeGrid& grid, const std::function<double(double)>& f) {
    std::vector<double> v(grid.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = f(grid.node(j));
    return {grid, std::move(v)};
}

double GridPath::at(double t) const {
    const std::size_t j = grid_.cell_of(t);
    const double w = (t - grid_.node(j)) / grid_.step();
    return (1.0 - w) * values_[j] + w * values_[j + 1];
}

double sup_norm_diff(const GridPath& a, const GridPath& b) {
    require_same_grid(a.grid(), b.grid(), "sup_norm_diff");
    double m = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
    return m;
}

void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* context) {
    if (!(a == b)) {
        throw GridMismatch(std::string(context) + ": paths live on different grids");
    }
}

double trapezoid_integral(const GridPath& path, std::size_t from_index, std::size_t to_index) {
    if (from_index > to_index || to_index >= path.size()) {
        throw std::out_of_range("trapezoid_integral: index range [" + std::to_string(from_index) +
                                ", " + std::to_string(to_index) + "] invalid for " +
                                std::to_string(path.size()) + " nodes");
    }
    double acc = 0.0;
    for (std::size_t j = from_index; j < to_index; ++j) acc += path[j] + path[j + 1];
    return 0.5 * path.grid().step() * acc;
}

void cumulative_trapezoid(std::span<const double> values, double step, std::span<double> out) {
    out[0] = 0.0;
    for (std::size_t j = 1; j < values.size(); ++j) {
        out[j] = out[j - 1] + 0.5 * step * (values[j - 1] + values[j]);
    }
}

GridPath cumulative_tail_integral(const GridPath& path) {
    const std::size_t n = path.size();
    std::vector<double> tail(n);
    tail[n - 1] = 0.0;
    const double h = path.grid().step();
    for (std::size_t j = n - 1; j-- > 0;) tail[j] = tail[j + 1] + 0.5 * h * (path[j] + path[j + 1]);
    return {path.grid(), std::move(tail)};
}

GridPath cumulative_integral(const GridPath& path) {
    std::vector<double> out(path.size());
    cumulative_trapezoid(path.values(), path.grid().step(), out);
    return {path.grid(), std::move(out)};
}

double tail_integral_at(const GridPath& path, const GridPath& tail, double t) {
    const TimeGrid& g = path.grid();
    const std::size_t j = g.cell_of(t);
    const double right = g.node(j + 1);
    // Integral of the linear interpolant over [t, t_{j+1}].
    const double piece = 0.5 * (right - t) * (path.at(t) + path[j + 1]);
    return piece + tail[j + 1];
}

}  // namespace habitmfg
