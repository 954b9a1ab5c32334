#include "habitmfg/regression.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace habitmfg {

LogLogFit fit_log_log(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_log_log: size mismatch");
    LogLogFit fit;
    bool all_zero = !y.empty();
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (y[i] != 0.0) all_zero = false;
        if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(y[i])) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    }
    if (all_zero) {
        fit.exact_match = true;
        fit.slope = fit.intercept = fit.slope_stderr = std::nan("");
        return fit;
    }
    const std::size_t n = lx.size();
    fit.points = static_cast<int>(n);
    if (n < 2) {
        fit.slope = fit.intercept = fit.slope_stderr = std::nan("");
        return fit;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx == 0.0) {
        fit.slope = fit.intercept = fit.slope_stderr = std::nan("");
        return fit;
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (n > 2) {
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = ly[i] - fit.intercept - fit.slope * lx[i];
            sse += r * r;
        }
        fit.slope_stderr = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
    } else {
        fit.slope_stderr = std::nan("");
    }
    fit.valid = true;
    return fit;
}

}  // namespace habitmfg
