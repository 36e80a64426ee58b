#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "bulkvac/core.hpp"
#include "bulkvac/des.hpp"
#include "bulkvac/solver.hpp"

namespace bulkvac {

// Parse failure; the message starts with the offending field path.
class ConfigError : public ModelError {
public:
    using ModelError::ModelError;
};

struct ModelConfig {
    QueueModel model;
    SolverOptions solver;
    SimOptions simulation;
};

ModelConfig parse_config(const nlohmann::json& j);
ModelConfig load_config(const std::string& path);
// Re-emits the model with every law written out as (alpha, T).
nlohmann::json emit_config(const ModelConfig& cfg);

enum class Schedule { QSDV, QSIV };
const char* schedule_name(Schedule s);

struct SweepConfig {
    ModelConfig base;
    std::vector<double> scales;
    std::vector<Schedule> schedules{Schedule::QSDV, Schedule::QSIV};
    int vacation_phases = 2;
    double vacation_rate = 1.0;  // QSDV: rate (k+1)^2, QSIV: rate for every k
};

// "base" is an inline model object or a path relative to the sweep file.
SweepConfig parse_sweep(const nlohmann::json& j, const std::string& dir = ".");
SweepConfig load_sweep(const std::string& path);

// Base model with (C, D) scaled by l and the vacation schedule applied.
QueueModel sweep_point(const SweepConfig& sw, double l, Schedule s);

}  // namespace bulkvac
