#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "bulkvac/compare.hpp"
#include "bulkvac/config.hpp"

namespace bulkvac {

inline constexpr const char* kVersion = "1.0.0";

// 64-bit FNV-1a, hex.
std::string content_hash(const std::string& bytes);

// Tables: n,index,phase,value with phase 1..m (0 for sums over phases) and a trailing
// "total" row per (index, phase).
nlohmann::json solution_summary(const ModelConfig& cfg, const Solution& sol, const std::string& config_hash);
void write_solution(const std::filesystem::path& dir, const ModelConfig& cfg, const Solution& sol,
                    const std::string& config_hash);

nlohmann::json simulation_summary(const ModelConfig& cfg, const SimEstimates& sim, const std::string& config_hash);
void write_simulation(const std::filesystem::path& dir, const ModelConfig& cfg, const SimEstimates& sim,
                      const std::string& config_hash);

nlohmann::json comparison_json(const CompareReport& rep);

}  // namespace bulkvac
