#include "bulkvac/des.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>

namespace bulkvac {

namespace {

struct Jump {
    double rate;
    int target;  // next phase, or -1 for absorption
    bool arrival;
};

struct Table {
    std::vector<std::vector<Jump>> rows;
    std::vector<double> total;
};

Table map_table(const MarkovianArrivalProcess& map) {
    Table t;
    const int m = map.m();
    for (int i = 0; i < m; ++i) {
        std::vector<Jump> row;
        for (int j = 0; j < m; ++j) {
            if (j != i && map.C(i, j) > 0) row.push_back({map.C(i, j), j, false});
            if (map.D(i, j) > 0) row.push_back({map.D(i, j), j, true});
        }
        t.rows.push_back(row);
        t.total.push_back(-map.C(i, i));
    }
    return t;
}

Table ph_table(const PhaseType& ph) {
    Table t;
    for (int i = 0; i < ph.n(); ++i) {
        std::vector<Jump> row;
        for (int j = 0; j < ph.n(); ++j)
            if (j != i && ph.T(i, j) > 0) row.push_back({ph.T(i, j), j, false});
        if (ph.t0(i) > 0) row.push_back({ph.t0(i), -1, false});
        t.rows.push_back(row);
        t.total.push_back(-ph.T(i, i));
    }
    return t;
}

const Jump& pick(const std::vector<Jump>& row, double u) {
    for (const auto& j : row) {
        if (u < j.rate) return j;
        u -= j.rate;
    }
    return row.back();
}

// flat storage [n * m + phase]
using Flat = std::vector<double>;

void bump(Flat& v, long long n, int phase, int m, double w) {
    const size_t at = static_cast<size_t>(n) * m + phase;
    if (at >= v.size()) v.resize(std::max(at + 1, v.size() * 2), 0.0);
    v[at] += w;
}

double get(const Flat& v, long long n, int phase, int m) {
    const size_t at = static_cast<size_t>(n) * m + phase;
    return at < v.size() ? v[at] : 0.0;
}

struct Batch {
    double time = 0.0;
    long long arrivals = 0;
    long long epochs = 0;
    Flat dor;
    std::vector<Flat> busy, vac, busy_plus, vac_plus;

    Batch(int nserv, int nvac) : busy(nserv), vac(nvac), busy_plus(nserv), vac_plus(nvac) {}

    void merge(const Batch& o) {
        time += o.time;
        arrivals += o.arrivals;
        epochs += o.epochs;
        auto add = [](Flat& a, const Flat& b) {
            if (a.size() < b.size()) a.resize(b.size(), 0.0);
            for (size_t i = 0; i < b.size(); ++i) a[i] += b[i];
        };
        add(dor, o.dor);
        for (size_t i = 0; i < busy.size(); ++i) {
            add(busy[i], o.busy[i]);
            add(busy_plus[i], o.busy_plus[i]);
        }
        for (size_t i = 0; i < vac.size(); ++i) {
            add(vac[i], o.vac[i]);
            add(vac_plus[i], o.vac_plus[i]);
        }
    }
};

int sample_start(const PhaseType& ph, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double u = U(rng) * ph.alpha.sum();
    for (int i = 0; i < ph.n(); ++i) {
        if (u < ph.alpha(i)) return i;
        u -= ph.alpha(i);
    }
    return ph.n() - 1;
}

}  // namespace

SimEstimates simulate(const QueueModel& model, const SimOptions& opts) {
    if (opts.events < 1) throw ModelError("simulation: events must be positive");
    if (opts.batches < 2) throw ModelError("simulation: need at least two batches");
    if (!(opts.warmup_fraction >= 0.0 && opts.warmup_fraction < 1.0))
        throw ModelError("simulation: warmup fraction must lie in [0, 1)");
    for (int r = model.h; r <= model.H; ++r)
        if (std::abs(model.service(r).alpha.sum() - 1.0) > 1e-9)
            throw ModelError("simulation: service alpha must sum to one");
    for (int k = 0; k < model.h; ++k)
        if (std::abs(model.vacation(k).alpha.sum() - 1.0) > 1e-9)
            throw ModelError("simulation: vacation alpha must sum to one");

    const int m = model.m();
    const int h = model.h;
    const int H = model.H;
    const bool single = model.policy == Policy::SV;
    const Table arr = map_table(model.arrivals);
    std::vector<Table> serv, vac;
    for (int r = h; r <= H; ++r) serv.push_back(ph_table(model.service(r)));
    for (int k = 0; k < h; ++k) vac.push_back(ph_table(model.vacation(k)));

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);

    SimState s;
    {
        double u = U(rng);
        s.arrival_phase = m - 1;
        for (int i = 0; i < m; ++i) {
            if (u < model.arrivals.xi(i)) {
                s.arrival_phase = i;
                break;
            }
            u -= model.arrivals.xi(i);
        }
    }
    auto start_service = [&](int r) {
        s.queue -= r;
        s.mode = ServerMode::Busy;
        s.index = r;
        s.phase = sample_start(model.service(r), rng);
    };
    auto start_vacation = [&](int k) {
        s.mode = ServerMode::Vacation;
        s.index = k;
        s.phase = sample_start(model.vacation(k), rng);
    };
    start_vacation(0);

    const long long warm = static_cast<long long>(opts.warmup_fraction * static_cast<double>(opts.events));
    const long long measured = opts.events - warm;
    std::vector<Batch> batches(opts.batches, Batch(H - h + 1, h));

    for (long long ev = 0; ev < opts.events; ++ev) {
        const bool record = ev >= warm;
        Batch* b = nullptr;
        if (record) {
            const long long slot = (ev - warm) * opts.batches / std::max(1LL, measured);
            b = &batches[static_cast<size_t>(std::min<long long>(slot, opts.batches - 1))];
        }
        const double a_rate = arr.total[s.arrival_phase];
        const Table* srv = nullptr;
        if (s.mode == ServerMode::Busy) srv = &serv[s.index - h];
        else if (s.mode == ServerMode::Vacation) srv = &vac[s.index];
        const double s_rate = srv ? srv->total[s.phase] : 0.0;
        const double total = a_rate + s_rate;
        const double dt = -std::log1p(-U(rng)) / total;

        if (b) {
            b->time += dt;
            if (s.mode == ServerMode::Dormant) bump(b->dor, s.queue, s.arrival_phase, m, dt);
            else if (s.mode == ServerMode::Busy) bump(b->busy[s.index - h], s.queue, s.arrival_phase, m, dt);
            else bump(b->vac[s.index], s.queue, s.arrival_phase, m, dt);
        }
        s.clock += dt;

        double u = U(rng) * total;
        if (u < a_rate) {
            const Jump& j = pick(arr.rows[s.arrival_phase], u);
            s.arrival_phase = j.target;
            if (j.arrival) {
                ++s.queue;
                if (b) ++b->arrivals;
                if (s.queue > opts.queue_guard)
                    throw InstabilityError("simulation: queue exceeded guard " + std::to_string(opts.queue_guard));
                if (s.mode == ServerMode::Dormant && s.queue >= h) start_service(h);
            }
            continue;
        }
        const Jump& j = pick(srv->rows[s.phase], u - a_rate);
        if (j.target >= 0) {
            s.phase = j.target;
            continue;
        }
        if (s.mode == ServerMode::Busy) {
            if (b) {
                bump(b->busy_plus[s.index - h], s.queue, s.arrival_phase, m, 1.0);
                ++b->epochs;
            }
            if (s.queue >= h) start_service(static_cast<int>(std::min<long long>(s.queue, H)));
            else start_vacation(static_cast<int>(s.queue));
        } else {
            if (b) {
                bump(b->vac_plus[s.index], s.queue, s.arrival_phase, m, 1.0);
                ++b->epochs;
            }
            if (s.queue >= h) start_service(static_cast<int>(std::min<long long>(s.queue, H)));
            else if (single) s.mode = ServerMode::Dormant;
            else start_vacation(static_cast<int>(s.queue));
        }
    }

    Batch pooled(H - h + 1, h);
    for (const auto& b : batches) pooled.merge(b);

    SimEstimates est;
    est.seed = opts.seed;
    est.events = opts.events;
    est.warmup_fraction = opts.warmup_fraction;
    est.batches = opts.batches;
    est.sim_time = pooled.time;
    est.embedded_epochs = pooled.epochs;
    for (const auto& b : batches)
        if (b.time <= 0.0 || b.epochs == 0) est.low_precision = true;
    if (opts.events < 10000) est.low_precision = true;

    const double B = static_cast<double>(batches.size());
    auto estimate = [&](const std::function<double(const Batch&)>& f) {
        Estimate e;
        e.mean = f(pooled);
        double s1 = 0.0, s2 = 0.0;
        for (const auto& b : batches) {
            const double v = f(b);
            s1 += v;
            s2 += v * v;
        }
        const double mean = s1 / B;
        e.se = std::sqrt(std::max(0.0, (s2 - B * mean * mean) / (B - 1.0)) / B);
        return e;
    };
    auto safe = [](double num, double den) { return den > 0 ? num / den : 0.0; };

    size_t maxlen = pooled.dor.size();
    for (const auto* group : {&pooled.busy, &pooled.vac, &pooled.busy_plus, &pooled.vac_plus})
        for (const auto& f : *group) maxlen = std::max(maxlen, f.size());
    const long long nmax = static_cast<long long>((maxlen + m - 1) / m);

    auto joint = [&](std::vector<Flat> Batch::*member, size_t count, bool embedded) {
        JointTable t(count);
        for (size_t i = 0; i < count; ++i) {
            t[i].assign(nmax, std::vector<Estimate>(m));
            for (long long n = 0; n < nmax; ++n)
                for (int p = 0; p < m; ++p)
                    t[i][n][p] = estimate([&](const Batch& b) {
                        const double w = get((b.*member)[i], n, p, m);
                        return embedded ? safe(w, static_cast<double>(b.epochs)) : safe(w, b.time);
                    });
        }
        return t;
    };
    est.xi_plus = joint(&Batch::busy_plus, H - h + 1, true);
    est.gamma_plus = joint(&Batch::vac_plus, h, true);
    est.xi = joint(&Batch::busy, H - h + 1, false);
    est.gamma = joint(&Batch::vac, h, false);
    est.dormant.assign(nmax, std::vector<Estimate>(m));
    for (long long n = 0; n < nmax; ++n)
        for (int p = 0; p < m; ++p)
            est.dormant[n][p] = estimate([&](const Batch& b) { return safe(get(b.dor, n, p, m), b.time); });

    auto row_mass = [m](const Flat& f, long long n) {
        double s = 0.0;
        for (int p = 0; p < m; ++p) s += get(f, n, p, m);
        return s;
    };
    auto flat_sum = [](const Flat& f) {
        double s = 0.0;
        for (double v : f) s += v;
        return s;
    };
    auto flat_moment = [m](const Flat& f) {
        double s = 0.0;
        for (size_t i = 0; i < f.size(); ++i) s += static_cast<double>(i / m) * f[i];
        return s;
    };
    auto queue_at = [&](const Batch& b, long long n) {
        double s = row_mass(b.dor, n);
        for (const auto& f : b.busy) s += row_mass(f, n);
        for (const auto& f : b.vac) s += row_mass(f, n);
        return safe(s, b.time);
    };
    auto lq = [&](const Batch& b) {
        double s = flat_moment(b.dor);
        for (const auto& f : b.busy) s += flat_moment(f);
        for (const auto& f : b.vac) s += flat_moment(f);
        return safe(s, b.time);
    };
    auto in_service = [&](const Batch& b) {
        double s = 0.0;
        for (int r = h; r <= H; ++r) s += r * flat_sum(b.busy[r - h]);
        return safe(s, b.time);
    };
    auto busy = [&](const Batch& b) {
        double s = 0.0;
        for (const auto& f : b.busy) s += flat_sum(f);
        return safe(s, b.time);
    };
    auto vacn = [&](const Batch& b) {
        double s = 0.0;
        for (const auto& f : b.vac) s += flat_sum(f);
        return safe(s, b.time);
    };
    auto vac_index = [&](const Batch& b) {
        double s = 0.0;
        for (int k = 0; k < h; ++k) s += k * flat_sum(b.vac[k]);
        return safe(s, b.time);
    };
    auto rate = [&](const Batch& b) { return safe(static_cast<double>(b.arrivals), b.time); };

    est.arrival_rate = estimate(rate);
    est.epoch_rate = estimate([&](const Batch& b) { return safe(static_cast<double>(b.epochs), b.time); });
    est.L_q = estimate(lq);
    est.L_s = estimate([&](const Batch& b) { return lq(b) + in_service(b); });
    est.W_q = estimate([&](const Batch& b) { return safe(lq(b), rate(b)); });
    est.W_s = estimate([&](const Batch& b) { return safe(lq(b) + in_service(b), rate(b)); });
    est.L_ser = estimate([&](const Batch& b) { return safe(in_service(b), busy(b)); });
    est.L_vac = estimate([&](const Batch& b) { return safe(vac_index(b), vacn(b)); });
    est.P_dor = estimate([&](const Batch& b) { return safe(flat_sum(b.dor), b.time); });
    est.P_busy = estimate(busy);
    est.P_vac = estimate(vacn);
    est.P_idle = estimate([&](const Batch& b) { return safe(flat_sum(b.dor), b.time) + vacn(b); });

    for (long long n = 0; n < nmax; ++n) {
        est.queue.push_back(estimate([&](const Batch& b) { return queue_at(b, n); }));
        est.queue_plus.push_back(estimate([&](const Batch& b) {
            double s = 0.0;
            for (const auto& f : b.busy_plus) s += row_mass(f, n);
            for (const auto& f : b.vac_plus) s += row_mass(f, n);
            return safe(s, static_cast<double>(b.epochs));
        }));
    }
    for (const auto& b : batches) {
        std::vector<double> qb(nmax), qpb(nmax);
        for (long long n = 0; n < nmax; ++n) {
            double s = row_mass(b.dor, n), sp = 0.0;
            for (const auto& f : b.busy) s += row_mass(f, n);
            for (const auto& f : b.vac) s += row_mass(f, n);
            for (const auto& f : b.busy_plus) sp += row_mass(f, n);
            for (const auto& f : b.vac_plus) sp += row_mass(f, n);
            qb[n] = safe(s, b.time);
            qpb[n] = safe(sp, static_cast<double>(b.epochs));
        }
        est.queue_by_batch.push_back(std::move(qb));
        est.queue_plus_by_batch.push_back(std::move(qpb));
    }
    for (int r = h; r <= H; ++r)
        est.server.push_back(estimate([&](const Batch& b) { return safe(flat_sum(b.busy[r - h]), b.time); }));
    for (int r = h; r <= H; ++r)
        est.xi_plus_total.push_back(
            estimate([&](const Batch& b) { return safe(flat_sum(b.busy_plus[r - h]), static_cast<double>(b.epochs)); }));
    for (int k = 0; k < h; ++k)
        est.gamma_plus_total.push_back(
            estimate([&](const Batch& b) { return safe(flat_sum(b.vac_plus[k]), static_cast<double>(b.epochs)); }));
    for (int k = 0; k < h; ++k)
        est.vacation.push_back(estimate([&](const Batch& b) { return safe(flat_sum(b.vac[k]), b.time); }));
    return est;
}

Estimate effective_rate_check(const SimEstimates& est) { return est.arrival_rate; }

}  // namespace bulkvac
