#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "habitmfg/errors.hpp"
#include "habitmfg/nagent.hpp"

using namespace habitmfg;

namespace {

AgentClass exp_class(double theta) {
    AgentClass c;
    c.mu = 0.2;
    c.sigma = 0.2;
    c.risk = 1.0;
    c.theta = theta;
    return c;
}

AgentClass pow_class(double p, double theta) {
    AgentClass c;
    c.mu = 0.2;
    c.sigma = 0.3;
    c.risk = p;
    c.theta = theta;
    return c;
}

MarketParams market() {
    MarketParams m;
    m.horizon = 1.0;
    m.delta = 0.1;
    m.x0 = 5.0;
    m.z0 = 1.0;
    return m;
}

}  // namespace

TEST_CASE("largest remainder assignment") {
    TypeDistribution d({exp_class(1.0), exp_class(0.5)}, {0.7, 0.3});
    auto a10 = assign_classes(10, d);
    CHECK(std::count(a10.labels.begin(), a10.labels.end(), 0u) == 7);
    CHECK(a10.epsilon_n == doctest::Approx(0.0).epsilon(1e-15));

    auto a4 = assign_classes(4, d);
    CHECK(a4.labels == std::vector<std::size_t>{0, 0, 0, 1});
    CHECK(a4.epsilon_n == doctest::Approx(0.05));

    auto single = TypeDistribution::single(exp_class(1.0));
    for (int n : {1, 7, 64}) {
        auto a = assign_classes(n, single);
        CHECK(a.size() == static_cast<std::size_t>(n));
        CHECK(a.epsilon_n == 0.0);
    }
    // eps_n <= K/n for an awkward three-class law
    TypeDistribution d3({exp_class(1.0), exp_class(0.5), exp_class(0.2)}, {0.45, 0.35, 0.2});
    for (int n = 1; n < 50; ++n) {
        auto a = assign_classes(n, d3);
        CHECK(a.size() == static_cast<std::size_t>(n));
        CHECK(std::is_sorted(a.labels.begin(), a.labels.end()));
        CHECK(a.epsilon_n <= 3.0 / n);
    }
    CHECK_THROWS_AS(assign_classes(0, d), ValidationError);
}

TEST_CASE("zero noise reproduces the mean paths") {
    MarketParams m = market();
    TimeGrid g(1.0, 1000);

    SUBCASE("exponential") {
        auto dist = TypeDistribution::single(exp_class(1.0));
        const auto eq = solve_exp_mfe(dist, m, g);
        CandidateModel model(dist, m, eq);
        auto s = simulate_cohort(model, assign_classes(1, dist), zero_increments(), true);
        const GridPath f = exp_mean_wealth_path(dist.cls(0), m, eq.zbar, eq.xbar_T);
        double worst = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            worst = std::max(worst, std::abs(s.wealth[0][j] - f[j]));
            const auto st = exp_strategy(g.node(j), s.wealth[0][j], dist.cls(0), m, eq.zbar, eq.xbar_T);
            CHECK(s.spending[0][j] == doctest::Approx(st.c_star).epsilon(1e-12));
        }
        CHECK(worst < 1e-12);
        CHECK(s.xbar_n_T == doctest::Approx(eq.xbar_T).epsilon(1e-10));
        // habit from the realised consumption matches the fixed point to O(h^2)
        CHECK(sup_norm_diff(s.zbar_n, eq.zbar) < 1e-6);
    }
    SUBCASE("power") {
        auto dist = TypeDistribution::single(pow_class(0.3, 1.0));
        const auto eq = solve_power_mfe(dist, m, g);
        CandidateModel model(dist, m, eq);
        auto s = simulate_cohort(model, assign_classes(1, dist), zero_increments(), true);
        const GridPath lw = power_mean_log_wealth_path(dist.cls(0), m, eq.zbar, eq.xbar_T);
        double worst = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            worst = std::max(worst, std::abs(std::log(s.wealth[0][j]) - lw[j]));
        }
        CHECK(worst < 1e-12);
        CHECK(model.class_terminal_mean(0) == doctest::Approx(lw.back()).epsilon(1e-14));
        // zero noise gives exp(E log X) < E X, so the habit sits below the mean-field one
        for (std::size_t j = 1; j < g.size(); ++j) CHECK(s.zbar_n[j] < eq.zbar[j]);
    }
}

TEST_CASE("habit identity of a simulated agent") {
    MarketParams m = market();
    auto dist = TypeDistribution::single(exp_class(1.0));
    for (int N : {100, 200}) {
        TimeGrid g(1.0, N);
        CandidateModel model(dist, m, solve_exp_mfe(dist, m, g));
        auto s = simulate_cohort(model, assign_classes(3, dist), philox_increments(7, 0), true);
        // integral form vs trapezoid of dZ = -delta (Z - C) dt
        const auto zint = habit_from_spending(s.spending[1], g, m);
        double z = m.z0, worst = 0.0;
        const double a = 0.5 * m.delta * g.step();
        for (std::size_t j = 1; j < g.size(); ++j) {
            z = ((1.0 - a) * z + a * (s.spending[1][j - 1] + s.spending[1][j])) / (1.0 + a);
            worst = std::max(worst, std::abs(z - zint[j]));
        }
        MESSAGE("N=" << N << " habit discretisation gap " << worst);
        CHECK(worst < 1e-4 * 100.0 / N * 100.0 / N);
    }
}

TEST_CASE("cohort terminal mean is unbiased") {
    MarketParams m = market();
    TimeGrid g(1.0, 100);
    TypeDistribution dist({exp_class(1.0), exp_class(0.5)}, {0.5, 0.5});
    const auto eq = solve_exp_mfe(dist, m, g);
    CandidateModel model(dist, m, eq);
    auto a = assign_classes(20, dist);
    double target = 0.0;
    for (auto k : a.labels) target += model.class_terminal_mean(k) / a.size();
    double sum = 0.0, sq = 0.0;
    const int R = 400;
    for (int r = 0; r < R; ++r) {
        const double x = simulate_cohort(model, a, philox_increments(11, r)).xbar_n_T;
        sum += x;
        sq += x * x;
    }
    const double mean = sum / R;
    const double se = std::sqrt((sq / R - mean * mean) / (R - 1));
    CHECK(std::abs(mean - target) < 3.0 * se);
}

TEST_CASE("power cohort stays positive") {
    MarketParams m = market();
    TimeGrid g(1.0, 50);
    auto dist = TypeDistribution::single(pow_class(0.5, 1.0));
    CandidateModel model(dist, m, solve_power_mfe(dist, m, g));
    auto s = simulate_cohort(model, assign_classes(64, dist), philox_increments(3, 1), true);
    for (const auto& w : s.wealth) {
        for (double v : w) CHECK(v > 0.0);
    }
    for (double z : s.zbar_n.values()) CHECK(z > 0.0);
    CHECK(s.xbar_n_T > 0.0);
    CHECK(std::isfinite(std::pow(s.xbar_n_T, -0.5)));
}

TEST_CASE("exchangeable within a class") {
    MarketParams m = market();
    TimeGrid g(1.0, 50);
    auto dist = TypeDistribution::single(exp_class(1.0));
    CandidateModel model(dist, m, solve_exp_mfe(dist, m, g));
    auto a = assign_classes(8, dist);
    auto base = philox_increments(5, 2);
    IncrementSource reversed = [&](std::size_t i, std::span<double> out) { base(7 - i, out); };
    auto s1 = simulate_cohort(model, a, base);
    auto s2 = simulate_cohort(model, a, reversed);
    CHECK(sup_norm_diff(s1.zbar_n, s2.zbar_n) < 1e-12);
    CHECK(s1.xbar_n_T == doctest::Approx(s2.xbar_n_T).epsilon(1e-13));
}

TEST_CASE("utility functional on constant arguments") {
    MarketParams m = market();
    TimeGrid g(2.0, 40);
    m.horizon = 2.0;
    std::vector<double> wealth(g.size(), 3.0), spend(g.size(), 0.7), zb(g.size(), 1.0);

    auto ed = TypeDistribution::single(exp_class(0.0));
    CandidateModel em(ed, m, solve_exp_mfe(ed, m, g));
    const double beta = 1.0;
    CHECK(em.path_objective(0, wealth, spend, zb, 1.0) ==
          doctest::Approx(-2.0 * std::exp(-0.7 / beta) - std::exp(-3.0 / beta)));

    auto pd = TypeDistribution::single(pow_class(0.5, 0.0));
    CandidateModel pm(pd, m, solve_power_mfe(pd, m, g));
    CHECK(pm.path_objective(0, wealth, spend, zb, 1.0) ==
          doctest::Approx(2.0 * std::sqrt(0.7) / 0.5 + std::sqrt(3.0) / 0.5));
    spend[3] = -1.0;
    CHECK_THROWS_AS(pm.path_objective(0, wealth, spend, zb, 1.0), DomainError);

    auto est = estimate_objective(pm, 0, Deviation{}, pm.zbar(), pm.xbar_T(), 50, 1);
    CHECK(est.samples == 50);
    CHECK(est.domain_errors == 0);
    CHECK(est.std_error > 0.0);
}

TEST_CASE("nash probe basics") {
    MarketParams m = market();
    TimeGrid g(1.0, 100);
    auto dist = TypeDistribution::single(exp_class(1.0));
    CandidateModel model(dist, m, solve_exp_mfe(dist, m, g));
    const auto fam = default_deviation_family();
    CHECK(fam.size() == 25);
    auto res = nash_gap_probe(model, 16, fam, 64, 9, 2);
    for (std::size_t d = 0; d < fam.size(); ++d) {
        if (fam[d].is_candidate()) {
            CHECK(res.gain[d] == 0.0);
            CHECK(res.gain_raw[d] == 0.0);
            CHECK(res.gain_mf[d] == 0.0);
        } else {
            // the closed-form control is optimal against the frozen benchmark
            CHECK(res.gain_mf[d] < 0.0);
        }
    }
    CHECK(res.max_gain >= 0.0);
    CHECK(res.max_gain <= res.decomposition_bound + 1e-12);
}

TEST_CASE("closed-form objective against Monte Carlo") {
    MarketParams m = market();
    TimeGrid g(1.0, 100);
    auto ed = TypeDistribution::single(exp_class(1.0));
    auto pd = TypeDistribution::single(pow_class(0.3, 1.0));
    CandidateModel em(ed, m, solve_exp_mfe(ed, m, g));
    CandidateModel pm(pd, m, solve_power_mfe(pd, m, g));
    for (const CandidateModel* model : {&em, &pm}) {
        for (Deviation dev : {Deviation{}, Deviation{1.25, 0.1}, Deviation{0.5, -0.2}}) {
            const double exact =
                model->expected_objective(0, dev, model->zbar().values(), model->xbar_T());
            auto mc = estimate_objective(*model, 0, dev, model->zbar(), model->xbar_T(), 20000, 4);
            CHECK(std::abs(mc.mean - exact) < 4.0 * mc.std_error);
        }
    }
}

TEST_CASE("log-log regression") {
    std::vector<double> n{16, 64, 256, 1024}, e;
    for (double v : n) e.push_back(3.0 / v);
    auto fit = fit_log_log(n, e);
    CHECK(fit.valid);
    CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::exp(fit.intercept) == doctest::Approx(3.0));
    CHECK(std::abs(fit.slope_stderr) < 1e-10);

    std::vector<double> zeros(4, 0.0);
    auto z = fit_log_log(n, zeros);
    CHECK(z.exact_match);
    CHECK_FALSE(z.valid);
    CHECK(std::isnan(z.slope));
}

TEST_CASE("convergence study") {
    MarketParams m = market();
    TimeGrid g(1.0, 50);
    auto dist = TypeDistribution::single(exp_class(0.0));
    CandidateModel model(dist, m, solve_exp_mfe(dist, m, g));
    const std::vector<int> ns{16, 64, 256};
    auto r1 = convergence_study(model, ns, 40, 21, 1);
    auto r4 = convergence_study(model, ns, 40, 21, 4);
    // bit-identical regardless of workers
    CHECK(r1.sup_z_mse == r4.sup_z_mse);
    CHECK(r1.x_mse == r4.x_mse);
    CHECK(r1.gap_estimates == r4.gap_estimates);
    MESSAGE("theta=0 slope " << r1.slope << " +- " << r1.slope_stderr);
    CHECK(r1.slope > -1.4);
    CHECK(r1.slope < -0.6);
    for (double v : r1.sup_z_mse) CHECK((v > 0.0 && std::isfinite(v)));

    CHECK_THROWS_AS(convergence_study(model, {16, 64}, 40, 1), ValidationError);
    CHECK_THROWS_AS(convergence_study(model, ns, 10, 1), ValidationError);
    CHECK_THROWS_AS(convergence_study(model, {64, 16, 256}, 40, 1), ValidationError);
}
