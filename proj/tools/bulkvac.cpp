#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "bulkvac/compare.hpp"
#include "bulkvac/config.hpp"
#include "bulkvac/output.hpp"

using namespace bulkvac;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kParse = 2, kUnstable = 3, kSolver = 4, kCompare = 5 };

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("bulkvac");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("BULKVAC_LOG")) {
        const auto lvl = spdlog::level::from_str(env);
        if (lvl == spdlog::level::off && std::string(env) != "off")
            spdlog::warn("BULKVAC_LOG={} not recognized; keeping warn", env);
        else
            spdlog::set_level(lvl);
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs `body`, mapping exceptions to the exit-code contract.
template <class F>
int guarded(F&& body) {
    try {
        return body();
    } catch (const ModelError& e) {
        spdlog::error("invalid input: {}", e.what());
        return kParse;
    } catch (const InstabilityError& e) {
        spdlog::error("{}", e.what());
        return kUnstable;
    } catch (const std::exception& e) {
        spdlog::error("solver failure: {}", e.what());
        return kSolver;
    }
}

Solution run_solver(const ModelConfig& cfg) {
    spdlog::info("solving {} model: m={} h={} H={} rho={:.6f}", policy_name(cfg.model.policy), cfg.model.m(),
                 cfg.model.h, cfg.model.H, cfg.model.rho());
    Solution sol = solve(cfg.model, cfg.solver);
    for (const auto& w : sol.warnings) spdlog::warn("{}", w);
    spdlog::info("solved in {:.3f}s: N_trunc={} condition={:.3g} embedded total={:.12f}", sol.seconds,
                 sol.embedded.n_trunc, sol.boundary.condition, sol.embedded_total);
    return sol;
}

SimEstimates run_sim(const ModelConfig& cfg) {
    spdlog::info("simulating {} events (seed {})", cfg.simulation.events, cfg.simulation.seed);
    SimEstimates sim = simulate(cfg.model, cfg.simulation);
    if (sim.low_precision)
        spdlog::warn("low precision: {} events is too few for reliable standard errors", sim.events);
    return sim;
}

struct SweepRow {
    double l = 0.0;
    Schedule schedule = Schedule::QSDV;
    double lambda = 0.0, rho = 0.0, L_q = 0.0, L_s = 0.0, W_q = 0.0;
    std::string status = "ok";
};

std::string sweep_line(const SweepRow& r) {
    return fmt::format("{:.6f},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", r.l, schedule_name(r.schedule), r.lambda,
                       r.rho, r.L_q, r.L_s, r.W_q, r.status);
}

const char* kSweepHeader = "l,schedule,lambda,rho,L_q,L_s,W_q,status\n";

int run_sweep(const std::string& path, const fs::path& out, int jobs) {
    const SweepConfig sw = load_sweep(path);
    std::vector<std::pair<double, Schedule>> points;
    for (double l : sw.scales)
        for (Schedule s : sw.schedules) points.push_back({l, s});
    fs::create_directories(out / "points");

    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next++; i < points.size(); i = next++) {
            SweepRow row;
            row.l = points[i].first;
            row.schedule = points[i].second;
            try {
                const QueueModel q = sweep_point(sw, row.l, row.schedule);
                row.lambda = q.arrivals.lambda;
                row.rho = q.rho();
                const Solution sol = solve(q, sw.base.solver);
                row.L_q = sol.report.L_q;
                row.L_s = sol.report.L_s;
                row.W_q = sol.report.W_q;
            } catch (const InstabilityError& e) {
                row.status = "unstable";
                spdlog::warn("l={} {}: {}", row.l, schedule_name(row.schedule), e.what());
            } catch (const std::exception& e) {
                row.status = "solver_failure";
                spdlog::warn("l={} {}: {}", row.l, schedule_name(row.schedule), e.what());
            }
            std::ofstream f(out / "points" / fmt::format("point_{:04d}.csv", i));
            f << kSweepHeader << sweep_line(row);
        }
    };
    std::vector<std::jthread> pool;
    for (int t = 0; t < std::max(1, jobs); ++t) pool.emplace_back(worker);
    pool.clear();

    std::ofstream merged(out / "sweep.csv");
    merged << kSweepHeader;
    for (size_t i = 0; i < points.size(); ++i) {
        std::ifstream f(out / "points" / fmt::format("point_{:04d}.csv", i));
        std::string line;
        std::getline(f, line);
        while (std::getline(f, line)) merged << line << "\n";
    }
    spdlog::info("sweep wrote {} points", points.size());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Steady-state solver and simulator for MAP batch-service queues with queue-size-dependent vacations"};
    app.require_subcommand(1);

    std::string config, out, policy;
    int trunc = -1, jobs = 1, bins = 16;
    std::uint64_t seed = 0;
    long long events = 0;

    auto* solve_cmd = app.add_subcommand("solve", "solve a model and write its distribution tables");
    solve_cmd->add_option("--config", config, "model JSON")->required();
    solve_cmd->add_option("--out", out, "output directory")->required();
    solve_cmd->add_option("--policy", policy, "override the vacation policy")->check(CLI::IsMember({"sv", "mv"}));
    solve_cmd->add_option("--trunc", trunc, "fixed truncation level N_trunc")->check(CLI::NonNegativeNumber);

    auto* sim_cmd = app.add_subcommand("simulate", "simulate a model and write empirical tables");
    sim_cmd->add_option("--config", config, "model JSON")->required();
    sim_cmd->add_option("--out", out, "output directory")->required();
    sim_cmd->add_option("--seed", seed, "random seed");
    sim_cmd->add_option("--events", events, "number of simulated events")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--policy", policy, "override the vacation policy")->check(CLI::IsMember({"sv", "mv"}));

    auto* cmp_cmd = app.add_subcommand("compare", "solve and simulate, then report z-scores");
    cmp_cmd->add_option("--config", config, "model JSON")->required();
    cmp_cmd->add_option("--seed", seed, "random seed");
    cmp_cmd->add_option("--events", events, "number of simulated events")->check(CLI::PositiveNumber);
    cmp_cmd->add_option("--trunc", trunc, "fixed truncation level N_trunc")->check(CLI::NonNegativeNumber);
    cmp_cmd->add_option("--policy", policy, "override the vacation policy")->check(CLI::IsMember({"sv", "mv"}));
    cmp_cmd->add_option("--bins", bins, "groups for queue-length marginals")->check(CLI::PositiveNumber);
    cmp_cmd->add_option("--out", out, "also write the report as JSON into this directory");

    auto* sweep_cmd = app.add_subcommand("sweep", "solve a grid of scaled models under two vacation schedules");
    sweep_cmd->add_option("--config", config, "sweep JSON")->required();
    sweep_cmd->add_option("--out", out, "output directory")->required();
    sweep_cmd->add_option("--jobs", jobs, "parallel solves")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kParse;
    }

    auto load = [&]() {
        ModelConfig cfg = load_config(config);
        if (policy == "sv") cfg.model.policy = Policy::SV;
        if (policy == "mv") cfg.model.policy = Policy::MV;
        if (trunc >= 0) cfg.solver.n_trunc = trunc;
        if (sim_cmd->count("--seed") || cmp_cmd->count("--seed")) cfg.simulation.seed = seed;
        if (events > 0) cfg.simulation.events = events;
        return cfg;
    };

    if (*solve_cmd)
        return guarded([&] {
            const ModelConfig cfg = load();
            const Solution sol = run_solver(cfg);
            write_solution(out, cfg, sol, content_hash(read_file(config)));
            const auto& r = sol.report;
            std::cout << fmt::format("L_q={:.6f} L_s={:.6f} W_q={:.6f} W_s={:.6f} L_ser={:.6f} L_vac={:.6f} "
                                     "P_dor={:.6f} P_busy={:.6f} P_idle={:.6f}\n",
                                     r.L_q, r.L_s, r.W_q, r.W_s, r.L_ser, r.L_vac, r.P_dor, r.P_busy, r.P_idle);
            return int(kOk);
        });
    if (*sim_cmd)
        return guarded([&] {
            const ModelConfig cfg = load();
            const SimEstimates sim = run_sim(cfg);
            write_simulation(out, cfg, sim, content_hash(read_file(config)));
            std::cout << fmt::format("L_q={:.6f}({:.6f}) P_busy={:.6f}({:.6f}) lambda={:.6f}({:.6f})\n", sim.L_q.mean,
                                     sim.L_q.se, sim.P_busy.mean, sim.P_busy.se, sim.arrival_rate.mean,
                                     sim.arrival_rate.se);
            return int(kOk);
        });
    if (*cmp_cmd)
        return guarded([&] {
            const ModelConfig cfg = load();
            const Solution sol = run_solver(cfg);
            const SimEstimates sim = run_sim(cfg);
            const CompareReport rep = compare(cfg.model, sol, sim, bins);
            std::cout << fmt::format("{:<28} {:>14} {:>14} {:>12} {:>8}\n", "quantity", "solver", "simulation",
                                     "stderr", "z");
            for (const auto& c : rep.rows)
                std::cout << fmt::format("{:<28} {:>14.6f} {:>14.6f} {:>12.6f} {:>8}\n", c.name, c.solver, c.sim, c.se,
                                         c.skipped ? std::string("-") : fmt::format("{:.2f}", c.z));
            std::cout << fmt::format("max |z| = {:.3f} ({})\n", rep.max_abs_z, rep.worst);
            if (!out.empty()) {
                fs::create_directories(out);
                std::ofstream(fs::path(out) / "compare.json") << comparison_json(rep).dump(2) << "\n";
            }
            if (!rep.pass(4.0)) {
                spdlog::error("comparison failed: |z| = {:.3f} on {}", rep.max_abs_z, rep.worst);
                return int(kCompare);
            }
            return int(kOk);
        });
    if (*sweep_cmd) return guarded([&] { return run_sweep(config, out, jobs); });
    return kParse;
}
