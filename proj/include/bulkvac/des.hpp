#pragma once

#include <cstdint>
#include <vector>

#include "bulkvac/core.hpp"

namespace bulkvac {

struct SimOptions {
    std::uint64_t seed = 1;
    long long events = 1000000;
    double warmup_fraction = 0.2;
    int batches = 32;
    long long queue_guard = 1000000;
};

struct Estimate {
    double mean = 0.0;
    double se = 0.0;
};

enum class ServerMode { Dormant, Busy, Vacation };

struct SimState {
    long long queue = 0;
    ServerMode mode = ServerMode::Vacation;
    int index = 0;  // batch size r when busy, vacation type k on vacation
    int phase = 0;  // service or vacation phase
    int arrival_phase = 0;
    double clock = 0.0;
};

// Joint tables are [index][n][phase]; index is r - h for service, k for vacation.
using JointTable = std::vector<std::vector<std::vector<Estimate>>>;

struct SimEstimates {
    std::uint64_t seed = 0;
    long long events = 0;
    double warmup_fraction = 0.0;
    int batches = 0;
    double sim_time = 0.0;  // after warmup
    bool low_precision = false;

    // counts of embedded epochs, normalized over all embedded epochs
    JointTable xi_plus;
    JointTable gamma_plus;
    // time-weighted occupancy
    std::vector<std::vector<Estimate>> dormant;  // [n][phase]
    JointTable xi;
    JointTable gamma;

    Estimate L_q, L_s, W_q, W_s, L_ser, L_vac;
    Estimate P_dor, P_busy, P_vac, P_idle;
    std::vector<Estimate> queue, queue_plus, server, vacation;
    std::vector<Estimate> xi_plus_total, gamma_plus_total;  // embedded mass per r and per k
    // per-batch marginals [batch][n], for statistics over groups of n
    std::vector<std::vector<double>> queue_by_batch, queue_plus_by_batch;
    Estimate arrival_rate;
    Estimate epoch_rate;  // embedded epochs per unit time
    long long embedded_epochs = 0;
};

SimEstimates simulate(const QueueModel& model, const SimOptions& opts = {});

// Measured arrival rate, to be compared with xi D e.
Estimate effective_rate_check(const SimEstimates& est);

}  // namespace bulkvac
