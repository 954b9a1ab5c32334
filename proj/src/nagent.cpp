#include "habitmfg/nagent.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

#include "habitmfg/errors.hpp"

namespace habitmfg {

ClassAssignment assign_classes(int n, const TypeDistribution& dist) {
    if (n < 1) throw ValidationError("n", "cohort size must be at least 1, got " + std::to_string(n));
    const std::size_t K = dist.size();
    if (K == 0) throw ValidationError("classes", "type distribution is empty");
    std::vector<std::size_t> count(K);
    std::vector<double> frac(K);
    std::size_t used = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const double target = n * dist.weight(k);
        count[k] = static_cast<std::size_t>(std::floor(target));
        frac[k] = target - static_cast<double>(count[k]);
        used += count[k];
    }
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; used < static_cast<std::size_t>(n); ++i, ++used) {
        ++count[order[i % K]];
    }

    ClassAssignment out;
    out.labels.reserve(n);
    out.empirical_weights.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        out.labels.insert(out.labels.end(), count[k], k);
        out.empirical_weights[k] = static_cast<double>(count[k]) / n;
        out.epsilon_n = std::max(out.epsilon_n, std::abs(out.empirical_weights[k] - dist.weight(k)));
    }
    return out;
}

std::vector<Deviation> default_deviation_family() {
    std::vector<Deviation> fam;
    for (double m : {0.5, 0.8, 1.0, 1.25, 2.0}) {
        for (double tilt : {-0.2, -0.1, 0.0, 0.1, 0.2}) fam.push_back({m, tilt});
    }
    return fam;
}

// ---------------------------------------------------------------------------

CandidateModel::CandidateModel(const TypeDistribution& dist, const MarketParams& params,
                               const ExpEquilibrium& eq)
    : regime_(Regime::exponential), dist_(dist), params_(params), zbar_(eq.zbar),
      xbar_T_(eq.xbar_T) {
    const TimeGrid& g = zbar_.grid();
    const double T = params.horizon;
    remaining_.resize(g.size());
    log_remaining_ratio_.resize(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
        remaining_[j] = T + 1.0 - g.node(j);
        log_remaining_ratio_[j] = std::log((T + 1.0) / remaining_[j]);
    }
    for (const AgentClass& cls : dist.classes()) {
        ExpClassSchedule s = exp_class_schedule(cls, params, zbar_, xbar_T_);
        ClassPlan p;
        p.base = std::move(s.mean_wealth);
        p.aux = std::move(s.consumption_offset);
        p.rate.resize(g.size());
        for (std::size_t j = 0; j < g.size(); ++j) p.rate[j] = 1.0 / remaining_[j];
        const double sharpe = cls.mu / cls.sigma;
        p.noise = cls.risk * sharpe;
        p.excess = cls.risk * sharpe * sharpe;
        // |C*(0, x0)|; a dead-flat start falls back to unit tilts
        const double c0 = std::abs(params.x0 / (T + 1.0) + p.aux[0]);
        p.tilt_unit = c0 > 1e-12 ? c0 : 1.0;
        plans_.push_back(std::move(p));
    }
}

CandidateModel::CandidateModel(const TypeDistribution& dist, const MarketParams& params,
                               const PowerEquilibrium& eq)
    : regime_(Regime::power), dist_(dist), params_(params), zbar_(eq.zbar), xbar_T_(eq.xbar_T) {
    const TimeGrid& g = zbar_.grid();
    for (const AgentClass& cls : dist.classes()) {
        const auto k = power_class_constants(cls, params);
        ClassPlan p;
        const GridPath c = power_consumption_path(cls, params, zbar_, xbar_T_);
        p.rate.assign(c.values().begin(), c.values().end());
        p.aux.resize(g.size());
        cumulative_trapezoid(p.rate, g.step(), p.aux);
        p.base.resize(g.size());
        for (std::size_t j = 0; j < g.size(); ++j) p.base[j] = std::log(params.x0);
        p.noise = k.pi_star * cls.sigma;
        p.excess = k.pi_star * cls.mu;
        plans_.push_back(std::move(p));
    }
}

void CandidateModel::agent_path(std::size_t cls, std::span<const double> normals,
                                const Deviation& dev, std::span<double> wealth,
                                std::span<double> spending) const {
    const TimeGrid& g = grid();
    const std::size_t N = static_cast<std::size_t>(g.n_steps());
    if (normals.size() < N || wealth.size() != g.size() || spending.size() != g.size()) {
        throw std::invalid_argument("agent_path: buffer sizes do not match the grid");
    }
    const ClassPlan& p = plans_.at(cls);
    const double sq = std::sqrt(g.step());
    const double m = dev.investment_multiplier;
    double W = 0.0;
    if (regime_ == Regime::exponential) {
        // X/u = f/u + (m-1) beta (mu/sigma)^2 t - tilt log((T+1)/u) + m beta (mu/sigma) W
        const double shift = dev.consumption_tilt * p.tilt_unit;
        for (std::size_t j = 0; j <= N; ++j) {
            if (j > 0) W += sq * normals[j - 1];
            const double t = g.node(j);
            const double scaled = p.base[j] * p.rate[j] + (m - 1.0) * p.excess * t -
                                  shift * log_remaining_ratio_[j] + m * p.noise * W;
            wealth[j] = scaled * remaining_[j];
            spending[j] = scaled + p.aux[j] + shift;
        }
    } else {
        const double drift = m * p.excess - 0.5 * m * m * p.noise * p.noise;
        const double scale = 1.0 + dev.consumption_tilt;
        for (std::size_t j = 0; j <= N; ++j) {
            if (j > 0) W += sq * normals[j - 1];
            const double logx = p.base[j] + drift * g.node(j) - scale * p.aux[j] + m * p.noise * W;
            wealth[j] = std::exp(logx);
            spending[j] = scale * p.rate[j] * wealth[j];
        }
    }
}

double CandidateModel::path_objective(std::size_t cls, std::span<const double> wealth,
                                      std::span<const double> spending,
                                      std::span<const double> zbench, double xbench) const {
    const AgentClass& c = dist_.cls(cls);
    const double h = grid().step();
    const std::size_t n = spending.size();
    double running = 0.0;
    double terminal = 0.0;
    if (regime_ == Regime::exponential) {
        auto u = [&](double y) { return -std::exp(-y / c.risk); };
        for (std::size_t j = 0; j < n; ++j) {
            const double w = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
            running += w * u(spending[j] - c.theta * zbench[j]);
        }
        terminal = u(wealth.back() - c.theta_terminal() * xbench);
    } else {
        const double p = c.risk;
        auto u = [&](double y) {
            if (!(y > 0.0) || !std::isfinite(y)) {
                throw DomainError("power utility evaluated at a nonpositive argument");
            }
            return std::pow(y, p) / p;
        };
        for (std::size_t j = 0; j < n; ++j) {
            const double w = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
            running += w * u(spending[j] / std::pow(zbench[j], c.theta));
        }
        terminal = u(wealth.back() / std::pow(xbench, c.theta_terminal()));
    }
    return h * running + terminal;
}

double CandidateModel::expected_objective(std::size_t cls, const Deviation& dev,
                                          std::span<const double> zbench, double xbench) const {
    const TimeGrid& g = grid();
    const AgentClass& c = dist_.cls(cls);
    const ClassPlan& p = plans_.at(cls);
    std::vector<double> zeros(g.n_steps(), 0.0), wealth(g.size()), spending(g.size());
    agent_path(cls, zeros, dev, wealth, spending);
    // variance of the noise term at t: (m * noise)^2 t
    const double vol2 = std::pow(dev.investment_multiplier * p.noise, 2);
    const std::size_t n = g.size();
    const double T = g.horizon();
    double running = 0.0, terminal = 0.0;
    if (regime_ == Regime::exponential) {
        const double b = c.risk;
        for (std::size_t j = 0; j < n; ++j) {
            const double w = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
            const double mean = spending[j] - c.theta * zbench[j];
            running += w * -std::exp(-mean / b + 0.5 * vol2 * g.node(j) / (b * b));
        }
        terminal = -std::exp(-(wealth.back() - c.theta_terminal() * xbench) / b +
                             0.5 * vol2 * T / (b * b));
    } else {
        // zero-noise wealth is exp(E log X)
        const double q = c.risk;
        for (std::size_t j = 0; j < n; ++j) {
            const double w = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
            const double y = spending[j] / std::pow(zbench[j], c.theta);
            running += w * std::pow(y, q) * std::exp(0.5 * q * q * vol2 * g.node(j)) / q;
        }
        const double y = wealth.back() / std::pow(xbench, c.theta_terminal());
        terminal = std::pow(y, q) * std::exp(0.5 * q * q * vol2 * T) / q;
    }
    return g.step() * running + terminal;
}

double CandidateModel::class_terminal_mean(std::size_t cls) const {
    const ClassPlan& p = plans_.at(cls);
    if (regime_ == Regime::exponential) return p.base.back();
    const auto k = power_class_constants(dist_.cls(cls), params_);
    return p.base.back() + k.log_drift * params_.horizon - p.aux.back();
}

// ---------------------------------------------------------------------------

std::vector<double> habit_from_spending(std::span<const double> spending, const TimeGrid& grid,
                                        const MarketParams& params) {
    const double d = params.delta;
    std::vector<double> weighted(spending.size()), cum(spending.size());
    for (std::size_t j = 0; j < spending.size(); ++j) {
        weighted[j] = d * std::exp(d * grid.node(j)) * spending[j];
    }
    cumulative_trapezoid(weighted, grid.step(), cum);
    for (std::size_t j = 0; j < cum.size(); ++j) {
        cum[j] = std::exp(-d * grid.node(j)) * (params.z0 + cum[j]);
    }
    return cum;
}

namespace {

// Aggregate of a whole cohort playing the candidate, plus agent 0's pieces.
struct CohortPass {
    std::vector<double> mean_spending;
    double terminal_stat = 0.0;  // arithmetic mean of X_T (exp) or of log X_T (power)
    std::vector<double> normals0;
    std::vector<double> wealth0;
    std::vector<double> spending0;
};

CohortPass run_cohort(const CandidateModel& model, const ClassAssignment& a,
                      const IncrementSource& inc, CohortSample* record) {
    const TimeGrid& g = model.grid();
    const std::size_t n = a.size();
    CohortPass out;
    out.mean_spending.assign(g.size(), 0.0);
    std::vector<double> normals(g.n_steps()), wealth(g.size()), spending(g.size());
    const bool power = model.regime() == Regime::power;
    const Deviation cand{};
    double term = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        inc(i, normals);
        model.agent_path(a.labels[i], normals, cand, wealth, spending);
        for (std::size_t j = 0; j < g.size(); ++j) out.mean_spending[j] += spending[j];
        term += power ? std::log(wealth.back()) : wealth.back();
        if (i == 0) {
            out.normals0 = normals;
            out.wealth0 = wealth;
            out.spending0 = spending;
        }
        if (record) {
            record->wealth.push_back(wealth);
            record->spending.push_back(spending);
        }
    }
    for (double& v : out.mean_spending) v /= static_cast<double>(n);
    out.terminal_stat = term / static_cast<double>(n);
    return out;
}

double cohort_xbar(const CandidateModel& model, double terminal_stat) {
    return model.regime() == Regime::power ? std::exp(terminal_stat) : terminal_stat;
}

void require_assignment(const CandidateModel& model, const ClassAssignment& a) {
    if (a.size() == 0) throw ValidationError("n", "empty cohort");
    for (std::size_t label : a.labels) {
        if (label >= model.distribution().size()) {
            throw ValidationError("labels", "class label out of range");
        }
    }
}

}  // namespace

CohortSample simulate_cohort(const CandidateModel& model, const ClassAssignment& assignment,
                             const IncrementSource& increments, bool record_agents) {
    require_assignment(model, assignment);
    CohortSample s{GridPath(model.grid(), 0.0), 0.0, {}, {}};
    const CohortPass pass = run_cohort(model, assignment, increments, record_agents ? &s : nullptr);
    s.zbar_n = GridPath(model.grid(),
                        habit_from_spending(pass.mean_spending, model.grid(), model.params()));
    s.xbar_n_T = cohort_xbar(model, pass.terminal_stat);
    return s;
}

CohortSample simulate_exp_cohort(const ClassAssignment& assignment, const TypeDistribution& dist,
                                 const ExpEquilibrium& eq, const MarketParams& params,
                                 std::uint64_t seed, std::uint64_t replication,
                                 bool record_agents) {
    return simulate_cohort(CandidateModel(dist, params, eq), assignment,
                           philox_increments(seed, replication), record_agents);
}

CohortSample simulate_power_cohort(const ClassAssignment& assignment,
                                   const TypeDistribution& dist, const PowerEquilibrium& eq,
                                   const MarketParams& params, std::uint64_t seed,
                                   std::uint64_t replication, bool record_agents) {
    return simulate_cohort(CandidateModel(dist, params, eq), assignment,
                           philox_increments(seed, replication), record_agents);
}

// ---------------------------------------------------------------------------

void parallel_for(int count, unsigned threads, const std::function<void(int)>& body) {
    if (count <= 0) return;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(count));
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (int i = next++; i < count; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

namespace {

struct MeanAcc {
    double sum = 0.0, sum_sq = 0.0;
    int n = 0;
    void add(double v) {
        sum += v;
        sum_sq += v * v;
        ++n;
    }
    double mean() const { return n ? sum / n : 0.0; }
    double stderr_() const {
        if (n < 2) return 0.0;
        const double m = mean();
        const double var = std::max(0.0, (sum_sq - n * m * m) / (n - 1));
        return std::sqrt(var / n);
    }
};

}  // namespace

ObjectiveEstimate estimate_objective(const CandidateModel& model, std::size_t cls,
                                     const Deviation& dev, const GridPath& zbench, double xbench,
                                     int replications, std::uint64_t seed) {
    if (replications < 1) throw ValidationError("replications", "must be at least 1");
    require_same_grid(model.grid(), zbench.grid(), "estimate_objective");
    const TimeGrid& g = model.grid();
    std::vector<double> normals(g.n_steps()), wealth(g.size()), spending(g.size());
    MeanAcc acc;
    ObjectiveEstimate est;
    for (int r = 0; r < replications; ++r) {
        rng_stream(seed, r, 0).fill(normals);
        model.agent_path(cls, normals, dev, wealth, spending);
        try {
            acc.add(model.path_objective(cls, wealth, spending, zbench.values(), xbench));
        } catch (const DomainError&) {
            ++est.domain_errors;
        }
    }
    est.mean = acc.mean();
    est.std_error = acc.stderr_();
    est.samples = acc.n;
    return est;
}

NashProbeResult nash_gap_probe(const CandidateModel& model, int n,
                               const std::vector<Deviation>& family, int replications,
                               std::uint64_t seed, unsigned threads) {
    if (replications < 2) throw ValidationError("replications", "need at least 2 replications");
    if (family.empty()) throw ValidationError("family", "deviation family is empty");
    const ClassAssignment a = assign_classes(n, model.distribution());
    const TimeGrid& g = model.grid();
    const std::size_t D = family.size();
    const std::size_t cls0 = a.labels[0];
    const bool power = model.regime() == Regime::power;
    const double dn = static_cast<double>(n);

    struct Rep {
        bool ok = true;
        double cand_emp = 0.0, cand_mf = 0.0;
        std::vector<double> dev_emp, dev_mf;
    };
    std::vector<Rep> reps(replications);

    parallel_for(replications, threads, [&](int r) {
        Rep& rep = reps[r];
        const CohortPass pass = run_cohort(model, a, philox_increments(seed, r), nullptr);
        const std::vector<double> zn = habit_from_spending(pass.mean_spending, g, model.params());
        const double xn = cohort_xbar(model, pass.terminal_stat);
        const std::vector<double> z0_cand = habit_from_spending(pass.spending0, g, model.params());
        const double term0 = power ? std::log(pass.wealth0.back()) : pass.wealth0.back();
        rep.dev_emp.resize(D);
        rep.dev_mf.resize(D);
        std::vector<double> wealth(g.size()), spending(g.size()), zdev(g.size());
        try {
            rep.cand_emp = model.path_objective(cls0, pass.wealth0, pass.spending0, zn, xn);
            rep.cand_mf = model.path_objective(cls0, pass.wealth0, pass.spending0,
                                               model.zbar().values(), model.xbar_T());
            for (std::size_t d = 0; d < D; ++d) {
                model.agent_path(cls0, pass.normals0, family[d], wealth, spending);
                const std::vector<double> z0_dev = habit_from_spending(spending, g, model.params());
                for (std::size_t j = 0; j < g.size(); ++j) {
                    zdev[j] = zn[j] + (z0_dev[j] - z0_cand[j]) / dn;
                }
                const double dterm = (power ? std::log(wealth.back()) : wealth.back()) - term0;
                const double xdev = cohort_xbar(model, pass.terminal_stat + dterm / dn);
                rep.dev_emp[d] = model.path_objective(cls0, wealth, spending, zdev, xdev);
                rep.dev_mf[d] = model.path_objective(cls0, wealth, spending,
                                                     model.zbar().values(), model.xbar_T());
            }
        } catch (const DomainError&) {
            rep.ok = false;
        }
    });

    NashProbeResult res;
    res.n = n;
    res.family = family;
    std::vector<MeanAcc> raw(D), corr(D), drift(D);
    MeanAcc cand_gap;
    for (const Rep& rep : reps) {
        if (!rep.ok) {
            ++res.domain_errors;
            continue;
        }
        cand_gap.add(rep.cand_mf - rep.cand_emp);
        for (std::size_t d = 0; d < D; ++d) {
            raw[d].add(rep.dev_emp[d] - rep.cand_emp);
            corr[d].add((rep.dev_emp[d] - rep.dev_mf[d]) - (rep.cand_emp - rep.cand_mf));
            drift[d].add(rep.dev_emp[d] - rep.dev_mf[d]);
        }
    }
    const double j_cand = model.expected_objective(cls0, Deviation{}, model.zbar().values(),
                                                   model.xbar_T());
    res.objective_gap = std::abs(cand_gap.mean());
    res.max_gain_unclipped = -std::numeric_limits<double>::infinity();
    double worst_drift = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
        const double mf = family[d].is_candidate()
                              ? 0.0
                              : model.expected_objective(cls0, family[d], model.zbar().values(),
                                                         model.xbar_T()) -
                                    j_cand;
        res.gain_mf.push_back(mf);
        res.gain.push_back(mf + corr[d].mean());
        res.gain_stderr.push_back(corr[d].stderr_());
        res.gain_raw.push_back(raw[d].mean());
        res.gain_raw_stderr.push_back(raw[d].stderr_());
        worst_drift = std::max(worst_drift, std::abs(drift[d].mean()));
        if (!family[d].is_candidate()) res.max_gain_unclipped = std::max(res.max_gain_unclipped, res.gain[d]);
    }
    res.max_gain = std::max(0.0, res.max_gain_unclipped);
    res.decomposition_bound = worst_drift + res.objective_gap;
    return res;
}

SimReport convergence_study(const CandidateModel& model, const std::vector<int>& n_values,
                            int replications, std::uint64_t seed, unsigned threads) {
    if (n_values.size() < 3) {
        throw ValidationError("n_values", "need at least 3 distinct cohort sizes");
    }
    for (std::size_t i = 1; i < n_values.size(); ++i) {
        if (n_values[i] <= n_values[i - 1]) {
            throw ValidationError("n_values", "cohort sizes must be strictly increasing");
        }
    }
    if (replications < 30) {
        throw ValidationError("replications",
                              "need at least 30 replications, got " + std::to_string(replications));
    }
    for (int n : n_values) {
        if (n < 1) throw ValidationError("n_values", "cohort sizes must be positive");
    }
    const TimeGrid& g = model.grid();
    const TypeDistribution& dist = model.distribution();
    const bool power = model.regime() == Regime::power;
    const double xbar = model.xbar_T();

    SimReport rep;
    rep.regime = model.regime();
    rep.n_values = n_values;
    rep.replications = replications;
    rep.seed = seed;

    for (int n : n_values) {
        const ClassAssignment a = assign_classes(n, dist);
        rep.epsilon_n.push_back(a.epsilon_n);
        struct Out {
            std::vector<double> zsq;
            double xsq = 0.0, xgsq = 0.0, gap = 0.0;
        };
        std::vector<Out> outs(replications);
        parallel_for(replications, threads, [&](int r) {
            Out& o = outs[r];
            const CohortPass pass = run_cohort(model, a, philox_increments(seed, r), nullptr);
            const std::vector<double> zn =
                habit_from_spending(pass.mean_spending, g, model.params());
            o.zsq.resize(g.size());
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double e = zn[j] - model.zbar()[j];
                o.zsq[j] = e * e;
            }
            const double xn = cohort_xbar(model, pass.terminal_stat);
            o.xsq = (xn - xbar) * (xn - xbar);
            if (power) {
                for (std::size_t k = 0; k < dist.size(); ++k) {
                    const double gam = -dist.cls(k).theta * dist.cls(k).risk;
                    const double e = std::pow(xn, gam) - std::pow(xbar, gam);
                    o.xgsq += dist.weight(k) * e * e;
                }
            }
            const std::size_t c0 = a.labels[0];
            o.gap = model.path_objective(c0, pass.wealth0, pass.spending0, zn, xn) -
                    model.path_objective(c0, pass.wealth0, pass.spending0, model.zbar().values(),
                                         xbar);
        });
        std::vector<double> zmean(g.size(), 0.0);
        double xs = 0.0, xgs = 0.0, gap = 0.0;
        for (const Out& o : outs) {
            for (std::size_t j = 0; j < g.size(); ++j) zmean[j] += o.zsq[j];
            xs += o.xsq;
            xgs += o.xgsq;
            gap += std::abs(o.gap);
        }
        const double R = replications;
        rep.sup_z_mse.push_back(*std::max_element(zmean.begin(), zmean.end()) / R);
        rep.x_mse.push_back(xs / R);
        if (power) rep.x_gamma_mse.push_back(xgs / R);
        rep.gap_estimates.push_back(gap / R);
    }

    std::vector<double> ns(n_values.begin(), n_values.end());
    rep.z_fit = fit_log_log(ns, rep.sup_z_mse);
    rep.x_fit = fit_log_log(ns, rep.x_mse);
    if (power) rep.x_gamma_fit = fit_log_log(ns, rep.x_gamma_mse);
    rep.slope = rep.z_fit.slope;
    rep.slope_stderr = rep.z_fit.slope_stderr;
    return rep;
}

}  // namespace habitmfg
