#pragma once

#include <string>
#include <vector>

#include "bulkvac/des.hpp"
#include "bulkvac/solver.hpp"

namespace bulkvac {

struct Comparison {
    std::string name;
    double solver = 0.0;
    double sim = 0.0;
    double se = 0.0;
    double z = 0.0;
    bool skipped = false;  // both the difference and the standard error vanish
};

struct CompareReport {
    std::vector<Comparison> rows;
    double max_abs_z = 0.0;
    std::string worst;

    bool pass(double limit = 4.0) const { return max_abs_z <= limit; }
};

// Measures, marginals and embedded totals side by side.  Queue-length marginals are grouped into
// about `bins` ranges of equal solver probability.
CompareReport compare(const QueueModel& model, const Solution& sol, const SimEstimates& sim, int bins = 16);

}  // namespace bulkvac
