#include "bulkvac/output.hpp"

#include <fstream>

#include <fmt/format.h>

namespace bulkvac {

using nlohmann::json;
namespace fs = std::filesystem;

std::string content_hash(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return fmt::format("{:016x}", h);
}

namespace {

class CsvWriter {
public:
    CsvWriter(const fs::path& path, bool with_se) : out_(path), se_(with_se) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        out_ << (se_ ? "n,index,phase,value,stderr\n" : "n,index,phase,value\n");
    }
    void row(long long n, int index, int phase, double v) { out_ << fmt::format("{},{},{},{:.6f}\n", n, index, phase, v); }
    void row(long long n, int index, int phase, const Estimate& e) {
        out_ << fmt::format("{},{},{},{:.6f},{:.6f}\n", n, index, phase, e.mean, e.se);
    }
    void total(int index, int phase, double v) { out_ << fmt::format("total,{},{},{:.6f}\n", index, phase, v); }
    void total(int index, int phase, const Estimate& e) {
        out_ << fmt::format("total,{},{},{:.6f},{:.6f}\n", index, phase, e.mean, e.se);
    }

private:
    std::ofstream out_;
    bool se_;
};

// vectors [index][n] of m-rows
void write_joint(const fs::path& path, const std::vector<std::vector<RowVec>>& t, int first, int n_max) {
    CsvWriter w(path, false);
    for (size_t i = 0; i < t.size(); ++i) {
        const int m = static_cast<int>(t[i].front().size());
        RowVec tot = RowVec::Zero(m);
        for (int n = 0; n <= n_max && n < static_cast<int>(t[i].size()); ++n) {
            for (int p = 0; p < m; ++p) w.row(n, first + static_cast<int>(i), p + 1, t[i][n](p));
            tot += t[i][n];
        }
        for (int p = 0; p < m; ++p) w.total(first + static_cast<int>(i), p + 1, tot(p));
    }
}

void write_marginal(const fs::path& path, const std::vector<double>& v) {
    CsvWriter w(path, false);
    double tot = 0.0;
    for (size_t n = 0; n < v.size(); ++n) {
        w.row(static_cast<long long>(n), 0, 0, v[n]);
        tot += v[n];
    }
    w.total(0, 0, tot);
}

void write_joint_se(const fs::path& path, const JointTable& t, int first) {
    CsvWriter w(path, true);
    for (size_t i = 0; i < t.size(); ++i) {
        if (t[i].empty()) continue;
        const int m = static_cast<int>(t[i].front().size());
        std::vector<double> tot(m, 0.0);
        for (size_t n = 0; n < t[i].size(); ++n)
            for (int p = 0; p < m; ++p) {
                w.row(static_cast<long long>(n), first + static_cast<int>(i), p + 1, t[i][n][p]);
                tot[p] += t[i][n][p].mean;
            }
        for (int p = 0; p < m; ++p) w.total(first + static_cast<int>(i), p + 1, tot[p]);
    }
}

void write_marginal_se(const fs::path& path, const std::vector<Estimate>& v) {
    CsvWriter w(path, true);
    double tot = 0.0;
    for (size_t n = 0; n < v.size(); ++n) {
        w.row(static_cast<long long>(n), 0, 0, v[n]);
        tot += v[n].mean;
    }
    w.total(0, 0, tot);
}

json est_json(const Estimate& e) { return {{"mean", e.mean}, {"stderr", e.se}}; }

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json roots_json(const RootSet& rs) {
    json a = json::array();
    for (const auto& r : rs.roots) {
        const char* where = r.location == Location::Inside ? "inside" : r.location == Location::OnCircle ? "on_circle" : "outside";
        a.push_back({{"re", r.value.real()}, {"im", r.value.imag()}, {"multiplicity", r.multiplicity}, {"location", where}});
    }
    return a;
}

}  // namespace

json solution_summary(const ModelConfig& cfg, const Solution& sol, const std::string& config_hash) {
    const auto& q = cfg.model;
    const auto& r = sol.report;
    json server = json::object(), vacation = json::object();
    for (int k = q.h; k <= q.H; ++k) server[std::to_string(k)] = r.server[k - q.h];
    for (int k = 0; k < q.h; ++k) vacation[std::to_string(k)] = r.vacation[k];
    const int closed_M = sol.ch.roots_M.count(Location::Inside) + sol.ch.roots_M.count(Location::OnCircle);
    return {
        {"policy", policy_name(q.policy)},
        {"measures",
         {{"lambda", r.lambda},
          {"rho", q.rho()},
          {"L_q", r.L_q},
          {"L_s", r.L_s},
          {"W_q", r.W_q},
          {"W_s", r.W_s},
          {"L_ser", r.L_ser},
          {"L_vac", r.L_vac},
          {"P_dor", r.P_dor},
          {"P_busy", r.P_busy},
          {"P_vac", r.P_vac},
          {"P_idle", r.P_idle},
          {"sigma_inverse", sol.sigma.sigma_inverse},
          {"E", sol.sigma.E},
          {"w_hat", sol.sigma.w_hat}}},
        {"marginals", {{"server", server}, {"vacation", vacation}}},
        {"diagnostics",
         {{"characteristic_degree", sol.ch.P.degree()},
          {"closed_disk_roots_M", closed_M},
          {"roots", roots_json(sol.ch.roots_P)},
          {"condition", sol.boundary.condition},
          {"boundary_residual", sol.boundary.residual},
          {"component_gap", sol.boundary.component_gap},
          {"n_trunc", sol.embedded.n_trunc},
          {"truncation_residual", sol.embedded.truncation_residual},
          {"dominant_pole", sol.embedded.dominant_pole},
          {"reconstruction_error", sol.embedded.reconstruction_error},
          {"divisibility_residual", sol.embedded.divisibility_residual},
          {"embedded_total", sol.embedded_total},
          {"arbitrary_total", sol.arbitrary.total},
          {"clamped", sol.boundary.clamped + sol.embedded.clamped + sol.arbitrary.clamped},
          {"warnings", sol.warnings}}},
        {"provenance", {{"config_hash", config_hash}, {"version", kVersion}}},
    };
}

void write_solution(const fs::path& dir, const ModelConfig& cfg, const Solution& sol, const std::string& config_hash) {
    fs::create_directories(dir);
    const auto& q = cfg.model;
    const int N = sol.embedded.n_trunc;
    write_joint(dir / "xi_plus.csv", sol.embedded.xi_plus, q.h, N);
    write_joint(dir / "gamma_plus.csv", sol.embedded.gamma_plus, 0, N);
    write_marginal(dir / "queue_plus.csv", sol.report.queue_plus);
    if (q.policy == Policy::SV) write_joint(dir / "dormant.csv", {sol.arbitrary.R_dormant}, 0, N);
    write_joint(dir / "xi.csv", sol.arbitrary.xi, q.h, N);
    write_joint(dir / "gamma.csv", sol.arbitrary.gamma, 0, N);
    write_marginal(dir / "queue.csv", sol.report.queue);
    write_json(dir / "summary.json", solution_summary(cfg, sol, config_hash));
}

json simulation_summary(const ModelConfig& cfg, const SimEstimates& sim, const std::string& config_hash) {
    const auto& q = cfg.model;
    json server = json::object(), vacation = json::object();
    for (int k = q.h; k <= q.H; ++k) server[std::to_string(k)] = est_json(sim.server[k - q.h]);
    for (int k = 0; k < q.h; ++k) vacation[std::to_string(k)] = est_json(sim.vacation[k]);
    return {
        {"policy", policy_name(q.policy)},
        {"measures",
         {{"lambda", est_json(sim.arrival_rate)},
          {"L_q", est_json(sim.L_q)},
          {"L_s", est_json(sim.L_s)},
          {"W_q", est_json(sim.W_q)},
          {"W_s", est_json(sim.W_s)},
          {"L_ser", est_json(sim.L_ser)},
          {"L_vac", est_json(sim.L_vac)},
          {"P_dor", est_json(sim.P_dor)},
          {"P_busy", est_json(sim.P_busy)},
          {"P_vac", est_json(sim.P_vac)},
          {"P_idle", est_json(sim.P_idle)},
          {"sigma_inverse", est_json(sim.epoch_rate)}}},
        {"marginals", {{"server", server}, {"vacation", vacation}}},
        {"run",
         {{"seed", sim.seed},
          {"events", sim.events},
          {"warmup", sim.warmup_fraction},
          {"batches", sim.batches},
          {"simulated_time", sim.sim_time},
          {"embedded_epochs", sim.embedded_epochs},
          {"low_precision", sim.low_precision}}},
        {"provenance", {{"config_hash", config_hash}, {"version", kVersion}}},
    };
}

void write_simulation(const fs::path& dir, const ModelConfig& cfg, const SimEstimates& sim,
                      const std::string& config_hash) {
    fs::create_directories(dir);
    const auto& q = cfg.model;
    write_joint_se(dir / "xi_plus.csv", sim.xi_plus, q.h);
    write_joint_se(dir / "gamma_plus.csv", sim.gamma_plus, 0);
    write_marginal_se(dir / "queue_plus.csv", sim.queue_plus);
    if (q.policy == Policy::SV) write_joint_se(dir / "dormant.csv", {sim.dormant}, 0);
    write_joint_se(dir / "xi.csv", sim.xi, q.h);
    write_joint_se(dir / "gamma.csv", sim.gamma, 0);
    write_marginal_se(dir / "queue.csv", sim.queue);
    write_json(dir / "summary.json", simulation_summary(cfg, sim, config_hash));
}

json comparison_json(const CompareReport& rep) {
    json rows = json::array();
    for (const auto& c : rep.rows)
        rows.push_back({{"quantity", c.name},
                        {"solver", c.solver},
                        {"simulation", c.sim},
                        {"stderr", c.se},
                        {"z", c.skipped ? json(nullptr) : json(c.z)}});
    return {{"rows", rows}, {"max_abs_z", rep.max_abs_z}, {"worst", rep.worst}};
}

}  // namespace bulkvac
