#include "bulkvac/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace bulkvac {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) { throw ConfigError(path + ": " + why); }

const json& field(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) fail(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) fail(path.empty() ? key : path + "." + key, "missing");
    return *it;
}

double number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

int integer(const json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<int>();
}

Mat matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "expected a nonempty array of rows");
    const size_t rows = j.size();
    if (!j[0].is_array() || j[0].empty()) fail(path + "[0]", "expected a nonempty row");
    const size_t cols = j[0].size();
    Mat M(rows, cols);
    for (size_t i = 0; i < rows; ++i) {
        const std::string rp = path + "[" + std::to_string(i) + "]";
        if (!j[i].is_array() || j[i].size() != cols) fail(rp, "rows must have equal length");
        for (size_t c = 0; c < cols; ++c) M(i, c) = number(j[i][c], rp + "[" + std::to_string(c) + "]");
    }
    return M;
}

RowVec row(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "expected a nonempty array");
    RowVec v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], path + "[" + std::to_string(i) + "]");
    return v;
}

PhaseType phase_type(const json& j, const std::string& path) {
    try {
        if (j.contains("erlang")) {
            const json& e = j["erlang"];
            return erlang(integer(field(e, "phases", path + ".erlang"), path + ".erlang.phases"),
                          number(field(e, "rate", path + ".erlang"), path + ".erlang.rate"));
        }
        if (j.contains("exponential")) {
            return erlang(1, number(field(j["exponential"], "rate", path + ".exponential"), path + ".exponential.rate"));
        }
        return validate_ph(row(field(j, "alpha", path), path + ".alpha"), matrix(field(j, "T", path), path + ".T"));
    } catch (const ConfigError&) {
        throw;
    } catch (const ModelError& e) {
        fail(path, e.what());
    }
}

std::vector<PhaseType> law_list(const json& j, const std::string& name, const char* key, int first, int count) {
    if (!j.is_array()) fail(name, "expected an array");
    if (static_cast<int>(j.size()) != count)
        fail(name, "expected " + std::to_string(count) + " entries, got " + std::to_string(j.size()));
    std::vector<PhaseType> out(count);
    std::vector<bool> seen(count, false);
    for (size_t i = 0; i < j.size(); ++i) {
        const std::string p = name + "[" + std::to_string(i) + "]";
        int idx = first + static_cast<int>(i);
        if (j[i].contains(key)) idx = integer(j[i][key], p + "." + key);
        if (idx < first || idx >= first + count) fail(p + "." + key, "index out of range");
        if (seen[idx - first]) fail(p + "." + key, "duplicate index");
        seen[idx - first] = true;
        out[idx - first] = phase_type(j[i], p);
    }
    return out;
}

void solver_overrides(const json& j, SolverOptions& o) {
    const std::string p = "solver";
    if (!j.is_object()) fail(p, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string k = it.key();
        const std::string kp = p + "." + k;
        if (k == "truncation") o.n_trunc = integer(*it, kp);
        else if (k == "n_cap") o.n_cap = integer(*it, kp);
        else if (k == "tail_mass") o.tail_mass = number(*it, kp);
        else if (k == "kernel_cap") o.kernel_cap = integer(*it, kp);
        else if (k == "kernel_residual") o.kernel_residual = number(*it, kp);
        else if (k == "cluster_tol") o.roots.cluster_tol = number(*it, kp);
        else if (k == "circle_tol") o.roots.circle_tol = number(*it, kp);
        else if (k == "cond_limit") o.cond_limit = number(*it, kp);
        else if (k == "component") o.component = integer(*it, kp);
        else if (k == "component_tol") o.component_tol = number(*it, kp);
        else if (k == "clamp_tol") o.clamp_tol = number(*it, kp);
        else fail(kp, "unknown option");
    }
    if (o.n_trunc < 0) fail(p + ".truncation", "must be nonnegative");
    if (o.n_cap < 1) fail(p + ".n_cap", "must be positive");
}

void simulation_overrides(const json& j, SimOptions& o) {
    const std::string p = "simulation";
    if (!j.is_object()) fail(p, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string k = it.key();
        const std::string kp = p + "." + k;
        if (k == "seed") {
            if (!it->is_number_integer() || it->get<long long>() < 0) fail(kp, "expected a nonnegative integer");
            o.seed = it->get<std::uint64_t>();
        } else if (k == "events") {
            if (!it->is_number_integer() || it->get<long long>() < 1) fail(kp, "expected a positive integer");
            o.events = it->get<long long>();
        } else if (k == "warmup") {
            o.warmup_fraction = number(*it, kp);
            if (o.warmup_fraction < 0 || o.warmup_fraction >= 1) fail(kp, "must lie in [0, 1)");
        } else if (k == "batches") {
            o.batches = integer(*it, kp);
            if (o.batches < 2) fail(kp, "need at least two batches");
        } else if (k == "queue_guard") {
            if (!it->is_number_integer() || it->get<long long>() < 1) fail(kp, "expected a positive integer");
            o.queue_guard = it->get<long long>();
        } else {
            fail(kp, "unknown option");
        }
    }
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

json matrix_json(const Mat& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
        rows.push_back(r);
    }
    return rows;
}

json law_json(const PhaseType& ph) {
    json a = json::array();
    for (Eigen::Index i = 0; i < ph.alpha.size(); ++i) a.push_back(ph.alpha(i));
    return {{"alpha", a}, {"T", matrix_json(ph.T)}};
}

}  // namespace

ModelConfig parse_config(const json& j) {
    if (!j.is_object()) fail("(root)", "expected an object");
    ModelConfig cfg;
    const json& arr = field(j, "arrivals", "");
    const Mat C = matrix(field(arr, "C", "arrivals"), "arrivals.C");
    const Mat D = matrix(field(arr, "D", "arrivals"), "arrivals.D");
    MarkovianArrivalProcess map;
    try {
        map = validate_map(C, D);
    } catch (const ModelError& e) {
        const std::string msg = e.what();
        throw ConfigError(msg.rfind("arrivals", 0) == 0 ? msg : "arrivals: " + msg);
    }

    const json& th = field(j, "thresholds", "");
    const int h = integer(field(th, "h", "thresholds"), "thresholds.h");
    const int H = integer(field(th, "H", "thresholds"), "thresholds.H");
    if (h < 1 || H < h) fail("thresholds", "need 1 <= h <= H (got h=" + std::to_string(h) + ", H=" + std::to_string(H) + ")");

    auto services = law_list(field(j, "services", ""), "services", "r", h, H - h + 1);
    auto vacations = law_list(field(j, "vacations", ""), "vacations", "k", 0, h);

    Policy policy = Policy::SV;
    if (j.contains("policy")) {
        const json& p = j["policy"];
        if (!p.is_string()) fail("policy", "expected \"sv\" or \"mv\"");
        const std::string s = p.get<std::string>();
        if (s == "sv" || s == "SV") policy = Policy::SV;
        else if (s == "mv" || s == "MV") policy = Policy::MV;
        else fail("policy", "expected \"sv\" or \"mv\", got \"" + s + "\"");
    }
    try {
        cfg.model = make_model(h, H, std::move(services), std::move(vacations), policy, map);
    } catch (const ModelError& e) {
        throw ConfigError(e.what());
    }
    if (j.contains("solver")) solver_overrides(j["solver"], cfg.solver);
    if (j.contains("simulation")) simulation_overrides(j["simulation"], cfg.simulation);
    return cfg;
}

ModelConfig load_config(const std::string& path) { return parse_config(read_json(path)); }

json emit_config(const ModelConfig& cfg) {
    const QueueModel& q = cfg.model;
    json services = json::array();
    for (int r = q.h; r <= q.H; ++r) {
        json e = law_json(q.service(r));
        e["r"] = r;
        services.push_back(e);
    }
    json vacations = json::array();
    for (int k = 0; k < q.h; ++k) {
        json e = law_json(q.vacation(k));
        e["k"] = k;
        vacations.push_back(e);
    }
    const SolverOptions& s = cfg.solver;
    const SimOptions& m = cfg.simulation;
    return {
        {"arrivals", {{"C", matrix_json(q.arrivals.C)}, {"D", matrix_json(q.arrivals.D)}}},
        {"thresholds", {{"h", q.h}, {"H", q.H}}},
        {"services", services},
        {"vacations", vacations},
        {"policy", q.policy == Policy::SV ? "sv" : "mv"},
        {"solver",
         {{"truncation", s.n_trunc},
          {"n_cap", s.n_cap},
          {"tail_mass", s.tail_mass},
          {"kernel_cap", s.kernel_cap},
          {"kernel_residual", s.kernel_residual},
          {"cluster_tol", s.roots.cluster_tol},
          {"circle_tol", s.roots.circle_tol},
          {"cond_limit", s.cond_limit},
          {"component", s.component},
          {"component_tol", s.component_tol},
          {"clamp_tol", s.clamp_tol}}},
        {"simulation",
         {{"seed", m.seed}, {"events", m.events}, {"warmup", m.warmup_fraction}, {"batches", m.batches},
          {"queue_guard", m.queue_guard}}},
    };
}

const char* schedule_name(Schedule s) { return s == Schedule::QSDV ? "qsdv" : "qsiv"; }

SweepConfig parse_sweep(const json& j, const std::string& dir) {
    if (!j.is_object()) fail("(root)", "expected an object");
    SweepConfig sw;
    const json& base = field(j, "base", "");
    if (base.is_string()) {
        std::filesystem::path p(base.get<std::string>());
        if (p.is_relative()) p = std::filesystem::path(dir) / p;
        try {
            sw.base = load_config(p.string());
        } catch (const ConfigError& e) {
            fail("base", e.what());
        }
    } else {
        try {
            sw.base = parse_config(base);
        } catch (const ConfigError& e) {
            fail("base", e.what());
        }
    }
    const json& sc = field(j, "scales", "");
    if (!sc.is_array() || sc.empty()) fail("scales", "expected a nonempty array");
    for (size_t i = 0; i < sc.size(); ++i) {
        const double l = number(sc[i], "scales[" + std::to_string(i) + "]");
        if (!(l > 0)) fail("scales[" + std::to_string(i) + "]", "must be positive");
        sw.scales.push_back(l);
    }
    const json& vac = field(j, "vacation", "");
    sw.vacation_phases = integer(field(vac, "phases", "vacation"), "vacation.phases");
    sw.vacation_rate = number(field(vac, "rate", "vacation"), "vacation.rate");
    if (sw.vacation_phases < 1) fail("vacation.phases", "must be positive");
    if (!(sw.vacation_rate > 0)) fail("vacation.rate", "must be positive");
    if (j.contains("schedules")) {
        sw.schedules.clear();
        const json& s = j["schedules"];
        if (!s.is_array()) fail("schedules", "expected an array");
        for (size_t i = 0; i < s.size(); ++i) {
            const std::string sp = "schedules[" + std::to_string(i) + "]";
            if (!s[i].is_string()) fail(sp, "expected \"qsdv\" or \"qsiv\"");
            const std::string name = s[i].get<std::string>();
            if (name == "qsdv") sw.schedules.push_back(Schedule::QSDV);
            else if (name == "qsiv") sw.schedules.push_back(Schedule::QSIV);
            else fail(sp, "expected \"qsdv\" or \"qsiv\"");
        }
    }
    return sw;
}

SweepConfig load_sweep(const std::string& path) {
    return parse_sweep(read_json(path), std::filesystem::path(path).parent_path().string());
}

QueueModel sweep_point(const SweepConfig& sw, double l, Schedule s) {
    const QueueModel& b = sw.base.model;
    std::vector<PhaseType> vac;
    for (int k = 0; k < b.h; ++k) {
        const double rate = s == Schedule::QSDV ? sw.vacation_rate * (k + 1) * (k + 1) : sw.vacation_rate;
        vac.push_back(erlang(sw.vacation_phases, rate));
    }
    return make_model(b.h, b.H, b.services, vac, b.policy, validate_map(l * b.arrivals.C, l * b.arrivals.D));
}

}  // namespace bulkvac
