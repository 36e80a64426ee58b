#include "bulkvac/compare.hpp"

#include <cmath>
#include <limits>

namespace bulkvac {

namespace {

void add(CompareReport& rep, const std::string& name, double solver, const Estimate& e) {
    Comparison c{name, solver, e.mean, e.se, 0.0, false};
    const double diff = e.mean - solver;
    if (e.se > 0) c.z = diff / e.se;
    else if (std::abs(diff) <= 1e-12) c.skipped = true;
    else c.z = std::copysign(std::numeric_limits<double>::infinity(), diff);
    if (!c.skipped && std::abs(c.z) > rep.max_abs_z) {
        rep.max_abs_z = std::abs(c.z);
        rep.worst = name;
    }
    rep.rows.push_back(c);
}

// Group n into ranges of roughly equal probability under `law`; the last range is open.
std::vector<long long> edges_for(const std::vector<double>& law, int bins) {
    std::vector<long long> edges{0};
    double cum = 0.0;
    int next = 1;
    for (size_t n = 0; n < law.size(); ++n) {
        cum += law[n];
        if (next < bins && cum >= static_cast<double>(next) / bins) {
            if (static_cast<long long>(n) + 1 > edges.back()) edges.push_back(static_cast<long long>(n) + 1);
            while (next < bins && cum >= static_cast<double>(next) / bins) ++next;
        }
    }
    return edges;
}

void binned(CompareReport& rep, const std::string& label, const std::vector<double>& law,
            const std::vector<std::vector<double>>& by_batch, const std::vector<Estimate>& pooled, int bins) {
    const auto edges = edges_for(law, bins);
    const double B = static_cast<double>(by_batch.size());
    for (size_t i = 0; i < edges.size(); ++i) {
        const long long lo = edges[i];
        const long long hi = i + 1 < edges.size() ? edges[i + 1] : std::numeric_limits<long long>::max();
        double solver = 0.0;
        if (i + 1 < edges.size()) {
            for (long long n = lo; n < hi; ++n) solver += law[n];
        } else {
            double below = 0.0;
            for (long long n = 0; n < lo && n < static_cast<long long>(law.size()); ++n) below += law[n];
            solver = 1.0 - below;
        }
        Estimate e;
        for (long long n = lo; n < hi && n < static_cast<long long>(pooled.size()); ++n) e.mean += pooled[n].mean;
        double s1 = 0.0, s2 = 0.0;
        for (const auto& b : by_batch) {
            double v = 0.0;
            for (long long n = lo; n < hi && n < static_cast<long long>(b.size()); ++n) v += b[n];
            s1 += v;
            s2 += v * v;
        }
        const double mean = s1 / B;
        e.se = std::sqrt(std::max(0.0, (s2 - B * mean * mean) / (B - 1.0)) / B);
        const std::string range = i + 1 < edges.size() ? std::to_string(lo) + ".." + std::to_string(hi - 1)
                                                       : std::to_string(lo) + "..";
        add(rep, label + "[" + range + "]", solver, e);
    }
}

}  // namespace

CompareReport compare(const QueueModel& model, const Solution& sol, const SimEstimates& sim, int bins) {
    CompareReport rep;
    const auto& r = sol.report;
    add(rep, "lambda", r.lambda, sim.arrival_rate);
    add(rep, "sigma_inverse", sol.sigma.sigma_inverse, sim.epoch_rate);
    add(rep, "L_q", r.L_q, sim.L_q);
    add(rep, "L_s", r.L_s, sim.L_s);
    add(rep, "W_q", r.W_q, sim.W_q);
    add(rep, "W_s", r.W_s, sim.W_s);
    add(rep, "L_ser", r.L_ser, sim.L_ser);
    add(rep, "L_vac", r.L_vac, sim.L_vac);
    add(rep, "P_dor", r.P_dor, sim.P_dor);
    add(rep, "P_busy", r.P_busy, sim.P_busy);
    add(rep, "P_vac", r.P_vac, sim.P_vac);
    add(rep, "P_idle", r.P_idle, sim.P_idle);
    for (int k = model.h; k <= model.H; ++k)
        add(rep, "P_ser[" + std::to_string(k) + "]", r.server[k - model.h], sim.server[k - model.h]);
    for (int k = 0; k < model.h; ++k) add(rep, "P_vac[" + std::to_string(k) + "]", r.vacation[k], sim.vacation[k]);

    const auto& emb = sol.embedded;
    for (int k = model.h; k <= model.H; ++k) {
        double t = 0.0;
        for (const auto& v : emb.xi_plus[k - model.h]) t += v.sum();
        add(rep, "xi_plus_total[" + std::to_string(k) + "]", t, sim.xi_plus_total[k - model.h]);
    }
    for (int k = 0; k < model.h; ++k) {
        double t = 0.0;
        for (const auto& v : emb.gamma_plus[k]) t += v.sum();
        add(rep, "gamma_plus_total[" + std::to_string(k) + "]", t, sim.gamma_plus_total[k]);
    }
    binned(rep, "P_queue", r.queue, sim.queue_by_batch, sim.queue, bins);
    binned(rep, "P_queue_plus", r.queue_plus, sim.queue_plus_by_batch, sim.queue_plus, bins);
    return rep;
}

}  // namespace bulkvac
