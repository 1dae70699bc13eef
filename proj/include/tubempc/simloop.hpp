#pragma once

#include "tubempc/controller.hpp"
#include "tubempc/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <string>
#include <thread>
#include <vector>

namespace tubempc {

enum class DisturbanceMode { Zero, Uniform, Vertex };

inline std::string to_string(DisturbanceMode m)
{
    switch (m) {
        case DisturbanceMode::Zero: return "zero";
        case DisturbanceMode::Uniform: return "uniform";
        case DisturbanceMode::Vertex: return "vertex";
    }
    return "?";
}

inline DisturbanceMode disturbance_mode_from(const std::string& s)
{
    if (s == "zero") return DisturbanceMode::Zero;
    if (s == "uniform") return DisturbanceMode::Uniform;
    if (s == "vertex") return DisturbanceMode::Vertex;
    throw std::invalid_argument("unknown disturbance mode: " + s);
}

/// Monte-Carlo ensemble protocol: horizon, repetitions, seeded disturbance
/// stream, and the controllers the ensemble is run for.
struct SimConfig {
    int steps = 50;
    int runs = 1;
    std::uint64_t seed = 0;
    DisturbanceMode mode = DisturbanceMode::Uniform;
    Vector initial_state;
    std::vector<std::string> controllers = {"proposed"};

    void validate() const
    {
        require(steps >= 1 && runs >= 1, "SimConfig: steps and runs must be positive");
    }
};

/// One bounded disturbance draw: box preimage mapped by the generators.
inline Vector sample_disturbance(const Zonotope& w, DisturbanceMode mode, Rng& rng)
{
    const int m = w.num_generators();
    if (mode == DisturbanceMode::Zero || m == 0) return Vector::Zero(w.dim());
    Vector v(m);
    if (mode == DisturbanceMode::Uniform) {
        for (int j = 0; j < m; ++j) v[j] = rng.uniform_sym();
    } else {
        for (int j = 0; j < m; ++j) v[j] = rng.sign();
    }
    return w.generators() * v;
}

/// Pre-drawn disturbance sequence for one run (column per step), so the
/// same realization can be replayed against several controllers.
inline Matrix sample_realization(const Zonotope& w, DisturbanceMode mode, std::uint64_t seed,
                                 int run_index, int steps)
{
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(run_index));
    Matrix out(w.dim(), steps);
    for (int k = 0; k < steps; ++k) out.col(k) = sample_disturbance(w, mode, rng);
    return out;
}

struct StepLog {
    Vector state;
    Vector input;
    Vector disturbance;
    double cost = 0.0;
    int iterations = 0;
    double margin_min = 0.0;
    double solve_ms = 0.0;
};

struct RunLog {
    std::vector<StepLog> steps;
    bool feasible = true;
    int failed_step = -1;
    int violations = 0;
};

/// Closed loop from x0 under a fixed disturbance realization. A failed
/// solve ends the run and flags it (expected for nominal designs under
/// disturbance; a certification failure for robust ones).
inline RunLog run_closed_loop(const DesignBundle& bundle, const Vector& x0,
                              const Matrix& realization, QpOptions qopts = {})
{
    RunLog log;
    Controller ctrl(bundle, qopts);
    const ConstraintPolytope& x_true = bundle.schedule.x_tight[0];
    const ConstraintPolytope& u_true = bundle.schedule.u_tight[0];
    Vector x = x0;
    const int steps = static_cast<int>(realization.cols());
    log.steps.reserve(steps);
    for (int k = 0; k < steps; ++k) {
        StepLog sl;
        sl.state = x;
        sl.disturbance = realization.col(k);
        auto t0 = std::chrono::steady_clock::now();
        StepResult st;
        try {
            st = ctrl.step(x, sl.disturbance);
        } catch (const std::runtime_error&) {
            log.feasible = false;
            log.failed_step = k;
            break;
        }
        auto t1 = std::chrono::steady_clock::now();
        sl.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        sl.input = st.input;
        sl.cost = st.solution.cost;
        sl.iterations = st.solution.iterations;
        sl.margin_min = std::min(x_true.margin(x), u_true.margin(st.input));
        if (sl.margin_min < -1e-9) ++log.violations;
        x = st.next_state;
        log.steps.push_back(std::move(sl));
    }
    return log;
}

/// Ensemble with per-run substreams; runs execute in parallel and reduce
/// in run order.
inline std::vector<RunLog> run_ensemble(const DesignBundle& bundle, const SimConfig& cfg,
                                        QpOptions qopts = {})
{
    cfg.validate();
    require(cfg.initial_state.size() == bundle.model.state_dim(),
            "run_ensemble: initial state dimension mismatch");
    std::vector<RunLog> logs(cfg.runs);
    const std::size_t batch = std::max(1u, std::thread::hardware_concurrency());
    for (int start = 0; start < cfg.runs; start += static_cast<int>(batch)) {
        int end = std::min(cfg.runs, start + static_cast<int>(batch));
        std::vector<std::future<RunLog>> futs;
        for (int r = start; r < end; ++r) {
            futs.push_back(std::async(std::launch::async, [&, r] {
                Matrix w = sample_realization(bundle.model.w, cfg.mode, cfg.seed, r, cfg.steps);
                return run_closed_loop(bundle, cfg.initial_state, w, qopts);
            }));
        }
        for (int r = start; r < end; ++r) logs[r] = futs[r - start].get();
    }
    return logs;
}

struct EnsembleSummary {
    int runs = 0;
    int steps = 0;
    int total_violations = 0;
    int infeasible_runs = 0;
    Matrix state_min, state_max, state_mean;  // n x steps over completed steps
    double iters_mean = 0, iters_min = 0, iters_max = 0;
    double time_mean_ms = 0, time_min_ms = 0, time_max_ms = 0;
    double cost_max = 0;
    double state_norm_max = 0;
};

inline EnsembleSummary aggregate_metrics(const std::vector<RunLog>& logs)
{
    require(!logs.empty(), "aggregate_metrics: no runs");
    EnsembleSummary s;
    s.runs = static_cast<int>(logs.size());
    int steps = 0;
    for (const auto& log : logs) steps = std::max(steps, static_cast<int>(log.steps.size()));
    s.steps = steps;
    const int n = steps > 0 && !logs[0].steps.empty()
                      ? static_cast<int>(logs[0].steps[0].state.size())
                      : 0;
    s.state_min = Matrix::Constant(n, steps, std::numeric_limits<double>::infinity());
    s.state_max = Matrix::Constant(n, steps, -std::numeric_limits<double>::infinity());
    s.state_mean = Matrix::Zero(n, steps);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(steps);
    double it_sum = 0, t_sum = 0;
    long total_steps = 0;
    s.iters_min = std::numeric_limits<double>::infinity();
    s.time_min_ms = std::numeric_limits<double>::infinity();
    for (const auto& log : logs) {
        s.total_violations += log.violations;
        if (!log.feasible) ++s.infeasible_runs;
        for (std::size_t k = 0; k < log.steps.size(); ++k) {
            const StepLog& sl = log.steps[k];
            s.state_min.col(k) = s.state_min.col(k).cwiseMin(sl.state);
            s.state_max.col(k) = s.state_max.col(k).cwiseMax(sl.state);
            s.state_mean.col(k) += sl.state;
            counts[static_cast<int>(k)] += 1;
            it_sum += sl.iterations;
            t_sum += sl.solve_ms;
            s.iters_min = std::min(s.iters_min, double(sl.iterations));
            s.iters_max = std::max(s.iters_max, double(sl.iterations));
            s.time_min_ms = std::min(s.time_min_ms, sl.solve_ms);
            s.time_max_ms = std::max(s.time_max_ms, sl.solve_ms);
            s.cost_max = std::max(s.cost_max, sl.cost);
            s.state_norm_max = std::max(s.state_norm_max, sl.state.norm());
            ++total_steps;
        }
    }
    for (int k = 0; k < steps; ++k)
        if (counts[k] > 0) s.state_mean.col(k) /= counts[k];
    if (total_steps > 0) {
        s.iters_mean = it_sum / double(total_steps);
        s.time_mean_ms = t_sum / double(total_steps);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Bulk output: trajectory CSV and summary JSON.
// ---------------------------------------------------------------------------

inline std::string format_g9(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline void write_trajectory_csv(const std::string& path, const std::vector<RunLog>& logs,
                                 int state_dim, int input_dim)
{
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "write_trajectory_csv: cannot open " + path);
    out << "run,step";
    for (int i = 1; i <= state_dim; ++i) out << ",x_" << i;
    for (int i = 1; i <= input_dim; ++i) out << ",u_" << i;
    for (int i = 1; i <= state_dim; ++i) out << ",w_" << i;
    out << ",cost,iters,margin_min\n";
    for (std::size_t r = 0; r < logs.size(); ++r) {
        for (std::size_t k = 0; k < logs[r].steps.size(); ++k) {
            const StepLog& sl = logs[r].steps[k];
            out << r << ',' << k;
            for (int i = 0; i < state_dim; ++i) out << ',' << format_g9(sl.state[i]);
            for (int i = 0; i < input_dim; ++i) out << ',' << format_g9(sl.input[i]);
            for (int i = 0; i < state_dim; ++i) out << ',' << format_g9(sl.disturbance[i]);
            out << ',' << format_g9(sl.cost) << ',' << sl.iterations << ','
                << format_g9(sl.margin_min) << '\n';
        }
    }
}

inline nlohmann::json summary_to_json(const EnsembleSummary& s, const SimConfig& cfg)
{
    nlohmann::json j;
    j["rng"] = kRngId;
    j["seed"] = cfg.seed;
    j["runs"] = s.runs;
    j["steps"] = s.steps;
    j["disturbance"] = to_string(cfg.mode);
    j["violations"] = s.total_violations;
    j["infeasible_runs"] = s.infeasible_runs;
    j["iterations"] = {{"mean", s.iters_mean}, {"min", s.iters_min}, {"max", s.iters_max}};
    j["solve_ms"] = {{"mean", s.time_mean_ms}, {"min", s.time_min_ms}, {"max", s.time_max_ms}};
    j["cost_max"] = s.cost_max;
    j["state_norm_max"] = s.state_norm_max;
    return j;
}

inline void write_summary_json(const std::string& path, const nlohmann::json& j)
{
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "write_summary_json: cannot open " + path);
    out << j.dump(2) << '\n';
}

}  // namespace tubempc
