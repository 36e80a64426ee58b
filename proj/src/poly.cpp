#include "bulkvac/poly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace bulkvac {

Polynomial::Polynomial(std::initializer_list<cplx> coeffs) : c_(static_cast<Eigen::Index>(coeffs.size())) {
    Eigen::Index i = 0;
    for (cplx c : coeffs) c_(i++) = c;
}

Polynomial Polynomial::from_roots(const std::vector<cplx>& roots, cplx lead) {
    Polynomial p{lead};
    for (cplx r : roots) p = p * Polynomial{-r, 1.0};
    return p;
}

cplx Polynomial::operator()(cplx z) const {
    cplx acc = 0.0;
    for (Eigen::Index k = c_.size() - 1; k >= 0; --k) acc = acc * z + c_(k);
    return acc;
}

Polynomial Polynomial::derivative() const {
    if (c_.size() <= 1) return Polynomial{0.0};
    CVec d(c_.size() - 1);
    for (Eigen::Index k = 1; k < c_.size(); ++k) d(k - 1) = c_(k) * static_cast<double>(k);
    return Polynomial(d);
}

Polynomial Polynomial::trimmed(double rel_tol) const {
    if (c_.size() == 0) return *this;
    const double scale = c_.cwiseAbs().maxCoeff();
    Eigen::Index n = c_.size();
    while (n > 1 && std::abs(c_(n - 1)) <= rel_tol * scale) --n;
    return Polynomial(CVec(c_.head(n)));
}

Polynomial Polynomial::shifted(cplx z0) const {
    // repeated synthetic division
    CVec a = c_;
    const Eigen::Index n = a.size();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = n - 2; k >= i; --k) a(k) += z0 * a(k + 1);
    return Polynomial(a);
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
    CVec r = CVec::Zero(std::max(c_.size(), o.c_.size()));
    r.head(c_.size()) += c_;
    r.head(o.c_.size()) += o.c_;
    return Polynomial(r);
}

Polynomial Polynomial::operator-(const Polynomial& o) const { return *this + o * cplx(-1.0); }

Polynomial Polynomial::operator*(const Polynomial& o) const {
    if (c_.size() == 0 || o.c_.size() == 0) return Polynomial();
    CVec r = CVec::Zero(c_.size() + o.c_.size() - 1);
    for (Eigen::Index i = 0; i < c_.size(); ++i)
        for (Eigen::Index j = 0; j < o.c_.size(); ++j) r(i + j) += c_(i) * o.c_(j);
    return Polynomial(r);
}

Polynomial Polynomial::operator*(cplx s) const { return Polynomial(CVec(c_ * s)); }

void Polynomial::divmod(const Polynomial& d, Polynomial& q, Polynomial& r) const {
    const Polynomial dt = d.trimmed(0.0);
    const int dn = dt.degree();
    if (dn < 0 || std::abs(dt.c_(dn)) == 0.0) throw std::invalid_argument("division by zero polynomial");
    if (degree() < dn) {
        q = Polynomial{0.0};
        r = *this;
        return;
    }
    CVec rem = c_;
    CVec quo = CVec::Zero(degree() - dn + 1);
    for (int k = degree() - dn; k >= 0; --k) {
        const cplx f = rem(k + dn) / dt.c_(dn);
        quo(k) = f;
        for (int j = 0; j <= dn; ++j) rem(k + j) -= f * dt.c_(j);
    }
    q = Polynomial(quo);
    r = dn == 0 ? Polynomial{0.0} : Polynomial(CVec(rem.head(dn)));
}

std::vector<cplx> circle_nodes(int count, double radius) {
    std::vector<cplx> z(count);
    for (int j = 0; j < count; ++j) z[j] = std::polar(radius, 2.0 * std::numbers::pi * j / count);
    return z;
}

Polynomial poly_from_samples(const std::vector<cplx>& nodes, const CVec& values, int degree_bound,
                             double drop_tol) {
    const int K = static_cast<int>(nodes.size());
    if (degree_bound < 0) throw std::invalid_argument("degree bound must be nonnegative");
    if (K < degree_bound + 1 || values.size() != K)
        throw std::invalid_argument("need at least degree_bound+1 samples");
    double R = 0.0;
    for (cplx z : nodes) R = std::max(R, std::abs(z));
    if (R == 0.0) R = 1.0;
    CMat V(K, degree_bound + 1);
    for (int i = 0; i < K; ++i) {
        cplx w = 1.0;
        for (int k = 0; k <= degree_bound; ++k) {
            V(i, k) = w;
            w *= nodes[i] / R;
        }
    }
    Eigen::ColPivHouseholderQR<CMat> qr(V);
    qr.setThreshold(1e-12);
    if (qr.rank() < degree_bound + 1) throw std::invalid_argument("rank-deficient interpolation (duplicate nodes)");
    CVec c = qr.solve(values);
    double scale = 1.0;
    for (int k = 0; k <= degree_bound; ++k) {
        c(k) /= scale;
        scale *= R;
    }
    return Polynomial(c).trimmed(drop_tol);
}

Polynomial interpolate(const std::function<cplx(cplx)>& f, int degree_bound, double radius) {
    const auto nodes = circle_nodes(degree_bound + 1, radius);
    CVec v(nodes.size());
    for (size_t i = 0; i < nodes.size(); ++i) v(static_cast<Eigen::Index>(i)) = f(nodes[i]);
    return poly_from_samples(nodes, v, degree_bound);
}

Polynomial det_poly(const std::function<CMat(cplx)>& eval, int size, int degree_bound, double radius) {
    return interpolate(
        [&](cplx z) {
            CMat M = eval(z);
            if (M.rows() != size || M.cols() != size) throw std::invalid_argument("evaluator size mismatch");
            if (!M.allFinite()) throw SolverError("singular evaluation in det_poly");
            return size == 1 ? M(0, 0) : M.partialPivLu().determinant();
        },
        degree_bound, radius);
}

int RootSet::count(Location where) const {
    int n = 0;
    for (const auto& r : roots)
        if (r.location == where) n += r.multiplicity;
    return n;
}

int RootSet::total() const {
    int n = 0;
    for (const auto& r : roots) n += r.multiplicity;
    return n;
}

std::vector<Root> RootSet::where(Location loc) const {
    std::vector<Root> out;
    for (const auto& r : roots)
        if (r.location == loc) out.push_back(r);
    return out;
}

Location classify(cplx z, double circle_tol) {
    const double d = std::abs(z) - 1.0;
    if (d < -circle_tol) return Location::Inside;
    if (d > circle_tol) return Location::Outside;
    return Location::OnCircle;
}

namespace {

// Parlett-Reinsch diagonal balancing.
void balance(CMat& A) {
    const Eigen::Index n = A.rows();
    bool done = false;
    while (!done) {
        done = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            double c = 0.0, r = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(A(j, i));
                r += std::abs(A(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double f = 1.0;
            const double s = c + r;
            while (c < r / 2.0) {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while (c >= r * 2.0) {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if ((c + r) / f < 0.95 * s) {
                done = false;
                A.row(i) /= f;
                A.col(i) *= f;
            }
        }
    }
}

}  // namespace

RootSet find_roots(const Polynomial& p_in, const RootOptions& opts) {
    const Polynomial p = p_in.trimmed(1e-14);
    const int n = p.degree();
    if (n < 1) throw std::invalid_argument("find_roots needs degree >= 1");
    const CVec& a = p.coeffs();

    std::vector<cplx> raw;
    int zeros = 0;
    while (zeros < n && a(zeros) == cplx(0.0)) ++zeros;
    for (int i = 0; i < zeros; ++i) raw.push_back(0.0);
    const int d = n - zeros;
    if (d > 0) {
        CMat comp = CMat::Zero(d, d);
        for (int i = 1; i < d; ++i) comp(i, i - 1) = 1.0;
        for (int i = 0; i < d; ++i) comp(i, d - 1) = -a(zeros + i) / a(n);
        balance(comp);
        Eigen::ComplexEigenSolver<CMat> es(comp, false);
        if (es.info() != Eigen::Success) throw SolverError("companion eigenvalue iteration failed");
        const Polynomial dp = p.derivative();
        for (int i = 0; i < d; ++i) {
            cplx z = es.eigenvalues()(i);
            const cplx fz = p(z);
            const cplx dz = dp(z);
            if (std::abs(dz) > 0.0) {
                const cplx zn = z - fz / dz;
                if (std::isfinite(zn.real()) && std::isfinite(zn.imag()) && std::abs(p(zn)) < std::abs(fz)) z = zn;
            }
            raw.push_back(z);
        }
    }

    // single-link clustering
    const int N = static_cast<int>(raw.size());
    std::vector<int> parent(N);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j)
            if (std::abs(raw[i] - raw[j]) <= opts.cluster_tol) parent[find(i)] = find(j);
    std::vector<std::vector<int>> groups(N);
    for (int i = 0; i < N; ++i) groups[find(i)].push_back(i);

    RootSet out;
    for (const auto& g : groups) {
        if (g.empty()) continue;
        cplx mean = 0.0;
        for (int i : g) mean += raw[i];
        mean /= static_cast<double>(g.size());
        out.roots.push_back({mean, static_cast<int>(g.size()), classify(mean, opts.circle_tol)});
    }
    std::sort(out.roots.begin(), out.roots.end(), [](const Root& x, const Root& y) {
        if (std::abs(x.value) != std::abs(y.value)) return std::abs(x.value) < std::abs(y.value);
        return std::arg(x.value) < std::arg(y.value);
    });
    return out;
}

cplx PartialFractionExpansion::operator()(cplx z) const {
    cplx acc = polynomial_part.empty() ? cplx(0.0) : polynomial_part(z);
    for (const auto& t : terms) acc += t.residue / std::pow(z - t.pole, t.order);
    return acc;
}

CVec PartialFractionExpansion::coefficients(int count) const {
    CVec c = CVec::Zero(count);
    for (int k = 0; k < count && k <= polynomial_part.degree(); ++k) c(k) += polynomial_part.coeff(k);
    for (const auto& t : terms) {
        const int s = t.order;
        const cplx inv = 1.0 / t.pole;
        // a/(z-b)^s = a (-1)^s b^{-s} sum_n C(n+s-1, s-1) (z/b)^n
        cplx lead = t.residue * std::pow(-inv, s);
        cplx tn = 1.0;
        for (int n = 0; n < count; ++n) {
            if (n > 0) tn *= inv * (static_cast<double>(n + s - 1) / n);
            c(n) += lead * tn;
        }
    }
    return c;
}

PartialFractionExpansion partial_fractions(const Polynomial& numerator, const Polynomial& denominator,
                                           const std::vector<Root>& poles, double div_tol) {
    Polynomial num = numerator.trimmed(0.0);
    Polynomial den = denominator.trimmed(0.0);
    const RootSet dr = find_roots(den);
    const double num_scale = std::max(num.coeffs().cwiseAbs().maxCoeff(), 1e-300);
    for (const auto& r : dr.roots) {
        if (r.location == Location::Outside) continue;
        Polynomial d = num;
        for (int i = 0; i < r.multiplicity; ++i) {
            const double mag = std::pow(std::max(1.0, std::abs(r.value)), d.degree());
            if (std::abs(d(r.value)) > div_tol * num_scale * mag)
                throw DivisibilityError("numerator does not vanish at closed-disk root (" +
                                        std::to_string(r.value.real()) + "," + std::to_string(r.value.imag()) + ")");
            d = d.derivative();
        }
        const Polynomial lin{-r.value, 1.0};
        for (int i = 0; i < r.multiplicity; ++i) {
            Polynomial q, rem;
            num.divmod(lin, q, rem);
            num = q;
            den.divmod(lin, q, rem);
            den = q;
        }
    }

    PartialFractionExpansion out;
    Polynomial rem = num;
    if (num.degree() >= den.degree()) {
        Polynomial q;
        num.divmod(den, q, rem);
        out.polynomial_part = q;
    }

    std::vector<Root> use = poles;
    if (use.empty()) use = find_roots(den).where(Location::Outside);
    for (const auto& pole : use) {
        const int eta = pole.multiplicity;
        Polynomial defl = den;
        const Polynomial lin{-pole.value, 1.0};
        for (int i = 0; i < eta; ++i) {
            Polynomial q, r;
            defl.divmod(lin, q, r);
            defl = q;
        }
        const Polynomial rs = rem.shifted(pole.value);
        const Polynomial ds = defl.shifted(pole.value);
        std::vector<cplx> g(eta);
        for (int i = 0; i < eta; ++i) {
            cplx acc = rs.coeff(i);
            for (int k = 1; k <= i; ++k) acc -= ds.coeff(k) * g[i - k];
            g[i] = acc / ds.coeff(0);
            out.terms.push_back({pole.value, eta - i, g[i]});
        }
    }
    return out;
}

std::vector<CVec> taylor_coefficients(const std::function<CVec(cplx)>& f, int dim, int count, double radius,
                                      int nodes) {
    std::vector<CVec> acc(count, CVec::Zero(dim));
    for (int j = 0; j < nodes; ++j) {
        const cplx w = std::polar(1.0, 2.0 * std::numbers::pi * j / nodes);
        const CVec v = f(radius * w);
        cplx wk = 1.0;
        const cplx winv = std::conj(w);
        for (int k = 0; k < count; ++k) {
            acc[k] += v * wk;
            wk *= winv;
        }
    }
    double rk = 1.0;
    for (int k = 0; k < count; ++k) {
        acc[k] /= static_cast<double>(nodes) * rk;
        rk *= radius;
    }
    return acc;
}

std::vector<CVec> cauchy_derivatives(const std::function<CVec(cplx)>& f, cplx z0, double radius, int order,
                                     int nodes) {
    std::vector<CVec> acc;
    for (int j = 0; j < nodes; ++j) {
        const cplx w = std::polar(1.0, 2.0 * std::numbers::pi * (j + 0.5) / nodes);
        const CVec v = f(z0 + radius * w);
        if (acc.empty()) acc.assign(order + 1, CVec::Zero(v.size()));
        cplx wk = 1.0;
        for (int k = 0; k <= order; ++k) {
            acc[k] += v * wk;
            wk /= w;
        }
    }
    double fact = 1.0, rk = 1.0;
    for (int k = 0; k <= order; ++k) {
        if (k > 0) {
            fact *= k;
            rk *= radius;
        }
        acc[k] *= fact / (nodes * rk);
    }
    return acc;
}

namespace {

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

cplx ipow(cplx t, int e) {
    cplx r = 1.0;
    for (int i = 0; i < e; ++i) r *= t;
    return r;
}

}  // namespace

std::vector<PartialFractionExpansion> partial_fractions_contour(const std::function<CVec(cplx)>& f, int dim,
                                                                const std::vector<Root>& poles, int poly_degree,
                                                                double taylor_radius,
                                                                const std::vector<cplx>& avoid,
                                                                const ContourOptions& opts) {
    // group nearby poles so each contour encloses a whole cluster
    const int N = static_cast<int>(poles.size());
    std::vector<int> parent(N);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) {
            const double scale = std::max(1.0, std::abs(poles[i].value));
            if (std::abs(poles[i].value - poles[j].value) <= opts.group_tol * scale) parent[find(i)] = find(j);
        }
    struct Group {
        cplx center = 0.0;
        int order = 0;
        double spread = 0.0;
        std::vector<int> members;
    };
    std::vector<Group> groups;
    {
        std::vector<int> slot(N, -1);
        for (int i = 0; i < N; ++i) {
            const int r = find(i);
            if (slot[r] < 0) {
                slot[r] = static_cast<int>(groups.size());
                groups.emplace_back();
            }
            groups[slot[r]].members.push_back(i);
        }
    }
    for (auto& g : groups) {
        for (int i : g.members) {
            g.center += poles[i].value * static_cast<double>(poles[i].multiplicity);
            g.order += poles[i].multiplicity;
        }
        g.center /= static_cast<double>(g.order);
        for (int i : g.members) g.spread = std::max(g.spread, std::abs(poles[i].value - g.center));
    }

    std::vector<PartialFractionExpansion> out(dim);
    const int K = opts.nodes;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        const Group& g = groups[gi];
        double gap = std::numeric_limits<double>::infinity();
        for (size_t o = 0; o < groups.size(); ++o)
            if (o != gi) gap = std::min(gap, std::abs(groups[o].center - g.center) - groups[o].spread);
        for (cplx a : avoid) gap = std::min(gap, std::abs(a - g.center));
        gap = std::min(gap, std::abs(g.center));
        double rad = opts.radius_fraction * gap;
        if (rad < 2.0 * g.spread) rad = 2.0 * g.spread;
        if (!(rad < 0.75 * gap)) throw SolverError("pole groups too close for contour separation");

        // Distinct members get their own principal parts; near-coincident ones (numerically split
        // multiple roots) are merged, since separating them would cancel catastrophically.
        struct Site {
            cplx at = 0.0;
            int order = 0;
        };
        std::vector<Site> sites;
        for (int i : g.members) {
            const double scale = std::max(1.0, std::abs(poles[i].value));
            auto it = std::find_if(sites.begin(), sites.end(), [&](const Site& st) {
                return std::abs(st.at - poles[i].value) <= opts.merge_tol * scale;
            });
            if (it == sites.end()) {
                sites.push_back({poles[i].value, poles[i].multiplicity});
            } else {
                it->at = (it->at * static_cast<double>(it->order) +
                          poles[i].value * static_cast<double>(poles[i].multiplicity)) /
                         static_cast<double>(it->order + poles[i].multiplicity);
                it->order += poles[i].multiplicity;
            }
        }

        // moments mu_k = (1/2 pi i) oint f(z) ((z - c) / rad)^(k-1) dz, k = 1..order
        std::vector<CVec> mu(g.order, CVec::Zero(dim));
        for (int j = 0; j < K; ++j) {
            const cplx w = std::polar(1.0, 2.0 * std::numbers::pi * (j + 0.5) / K);
            const CVec v = f(g.center + rad * w);
            cplx pw = rad * w;
            for (int k = 1; k <= g.order; ++k) {
                mu[k - 1] += v * pw;
                pw *= w;
            }
        }
        for (auto& v : mu) v /= static_cast<double>(K);

        // c / (z - p)^j contributes binom(k-1, j-1) t^(k-j) rad^(1-j) c to mu_k, t = (p - c) / rad
        CMat A = CMat::Zero(g.order, g.order);
        std::vector<std::pair<int, int>> cols;
        for (size_t si = 0; si < sites.size(); ++si)
            for (int j = 1; j <= sites[si].order; ++j) cols.push_back({static_cast<int>(si), j});
        for (int k = 1; k <= g.order; ++k)
            for (size_t col = 0; col < cols.size(); ++col) {
                const auto [si, j] = cols[col];
                if (k < j) continue;
                const cplx t = (sites[si].at - g.center) / rad;
                A(k - 1, static_cast<Eigen::Index>(col)) = binom(k - 1, j - 1) * ipow(t, k - j);
            }
        CMat rhs(g.order, dim);
        for (int k = 0; k < g.order; ++k) rhs.row(k) = mu[k].transpose();
        const CMat coef = A.fullPivLu().solve(rhs);
        for (size_t col = 0; col < cols.size(); ++col) {
            const auto [si, j] = cols[col];
            const double unscale = std::pow(rad, j - 1);
            for (int c = 0; c < dim; ++c)
                out[c].terms.push_back({sites[si].at, j, coef(static_cast<Eigen::Index>(col), c) * unscale});
        }
    }

    if (poly_degree >= 0) {
        const auto tc = taylor_coefficients(f, dim, poly_degree + 1, taylor_radius, opts.taylor_nodes);
        for (int c = 0; c < dim; ++c) {
            const CVec principal = out[c].coefficients(poly_degree + 1);
            CVec pc(poly_degree + 1);
            for (int k = 0; k <= poly_degree; ++k) pc(k) = tc[k](c) - principal(k);
            out[c].polynomial_part = Polynomial(pc);
        }
    }
    return out;
}

}  // namespace bulkvac
