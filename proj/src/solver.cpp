#include "bulkvac/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace bulkvac {

const Mat& KernelTable::A(int r, int h, int l) const { return service.at(r - h).at(l); }
const Mat& KernelTable::B(int k, int l) const { return vacation.at(k).at(l); }

Mat KernelTable::A_or_zero(int r, int h, int l) const {
    const auto& kc = service.at(r - h);
    if (l >= 0 && l < kc.size()) return kc.coeffs[l];
    return Mat::Zero(kc.coeffs[0].rows(), kc.coeffs[0].cols());
}

Mat KernelTable::B_or_zero(int k, int l) const {
    const auto& kc = vacation.at(k);
    if (l >= 0 && l < kc.size()) return kc.coeffs[l];
    return Mat::Zero(kc.coeffs[0].rows(), kc.coeffs[0].cols());
}

KernelTable build_kernels(const QueueModel& model, const SolverOptions& opts, int min_len) {
    KernelTable t;
    for (int r = model.h; r <= model.H; ++r) {
        t.service.push_back(kernel_coefficients_adaptive(model.service(r), model.arrivals, opts.kernel_residual,
                                                         opts.kernel_cap, min_len));
        t.max_residual = std::max(t.max_residual, t.service.back().residual);
    }
    for (int k = 0; k < model.h; ++k) {
        t.vacation.push_back(kernel_coefficients_adaptive(model.vacation(k), model.arrivals, opts.kernel_residual,
                                                          opts.kernel_cap, min_len));
        t.max_residual = std::max(t.max_residual, t.vacation.back().residual);
    }
    return t;
}

std::vector<Root> kernel_poles(const PhaseType& law, const MarkovianArrivalProcess& map) {
    const int m = map.m();
    Eigen::EigenSolver<Mat> es(law.T, false);
    const CVec ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    std::vector<std::pair<cplx, int>> taus;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        bool merged = false;
        for (auto& t : taus)
            if (std::abs(t.first - ev(i)) <= 1e-8 * scale) {
                ++t.second;
                merged = true;
                break;
            }
        if (!merged) taus.push_back({ev(i), 1});
    }
    std::vector<Root> out;
    const CMat C = map.C.cast<cplx>();
    const CMat D = map.D.cast<cplx>();
    for (const auto& [tau, mult] : taus) {
        const Polynomial q =
            det_poly([&](cplx z) -> CMat { return -tau * CMat::Identity(m, m) - C - z * D; }, m, m, 1.0);
        if (q.degree() < 1) continue;
        for (const auto& r : find_roots(q).roots) out.push_back({r.value, r.multiplicity * mult, r.location});
    }
    return out;
}

namespace {

// rounding noise below this is zeroed without being counted as a clamp
constexpr double kNoiseFloor = 1e-13;

cplx kron_sum_det(const PhaseType& law, const MarkovianArrivalProcess& map, cplx z) {
    const int m = map.m();
    const int n = law.n();
    CMat sys = -kron(law.T, Mat::Identity(m, m)).cast<cplx>();
    const CMat gen = map.C.cast<cplx>() + map.D.cast<cplx>() * z;
    for (int i = 0; i < n; ++i) sys.block(i * m, i * m, m, m) -= gen;
    return sys.partialPivLu().determinant();
}

std::string root_list(const RootSet& rs) {
    std::ostringstream os;
    for (const auto& r : rs.roots) {
        if (r.location == Location::Outside) continue;
        os << " (" << r.value.real() << (r.value.imag() < 0 ? "" : "+") << r.value.imag() << "i x"
           << r.multiplicity << ")";
    }
    return os.str();
}

Mat mat_pow(const Mat& A, int k) {
    Mat out = Mat::Identity(A.rows(), A.cols());
    for (int i = 0; i < k; ++i) out = out * A;
    return out;
}

}  // namespace

Characteristic build_characteristic(const QueueModel& model, const SolverOptions& opts) {
    Characteristic ch;
    const auto& map = model.arrivals;
    const auto& law = model.service(model.H);
    const int m = map.m();
    const int H = model.H;
    ch.m = m;
    ch.H = H;

    auto dH = [&law, &map](cplx z) { return kron_sum_det(law, map, z); };
    ch.d_H = interpolate(dH, m * law.n(), opts.interp_radius);

    ch.M = [law, map, H, m](cplx z) -> CMat {
        const cplx d = kron_sum_det(law, map, z);
        const CMat A = kernel_eval<cplx>(law, map, z);
        return (std::pow(z, H) * d) * CMat::Identity(m, m) - d * A;
    };
    ch.degree_bound_M = m * (H + m * law.n());
    ch.det_M = det_poly(ch.M, m, ch.degree_bound_M, opts.interp_radius);

    auto Peval = [&law, &map, H, m](cplx z) {
        const CMat X = std::pow(z, H) * CMat::Identity(m, m) - kernel_eval<cplx>(law, map, z);
        return kron_sum_det(law, map, z) * (m == 1 ? X(0, 0) : X.partialPivLu().determinant());
    };
    ch.degree_bound_P = m * H + ch.d_H.degree();
    ch.P = interpolate(Peval, ch.degree_bound_P, opts.interp_radius);

    const cplx probe(0.37, 0.2);
    const cplx direct = Peval(probe);
    if (std::abs(ch.P(probe) - direct) > 1e-8 * std::max(std::abs(direct), 1e-300))
        throw SolverError("characteristic polynomial failed the probe check");

    ch.roots_M = find_roots(ch.det_M, opts.roots);
    ch.roots_P = find_roots(ch.P, opts.roots);

    double minpole = std::numeric_limits<double>::infinity();
    auto scan = [&](const PhaseType& ph) {
        for (const auto& r : kernel_poles(ph, map)) minpole = std::min(minpole, std::abs(r.value));
    };
    for (int r = model.h; r <= model.H; ++r) scan(model.service(r));
    for (int k = 0; k < model.h; ++k) scan(model.vacation(k));
    if (!(minpole > 1.0)) throw SolverError("kernel pole inside the closed unit disk");
    ch.min_kernel_pole = minpole;
    return ch;
}

VacationMap vacation_termination(const QueueModel& model, const KernelTable& kernels) {
    const int m = model.m();
    const int H = model.H;
    const int h = model.h;
    const double eps = model.eps();
    VacationMap v;
    v.dim = m * H;
    const Mat I = Mat::Identity(m, m);
    for (int n = 0; n < H; ++n) {
        Mat s = Mat::Zero(v.dim, m);
        s.block(n * m, 0, m, m) = I;
        v.select.push_back(s);
    }
    v.gamma.resize(H);
    v.feed.resize(h);
    for (int n = 0; n < H; ++n) {
        Mat S = Mat::Zero(v.dim, m);
        for (int k = 0; k < std::min(n, h); ++k) S += v.feed[k] * kernels.B_or_zero(k, n - k);
        if (n < h) {
            const Mat& B0 = kernels.B(n, 0);
            const Mat lhs = I - eps * B0;
            Eigen::FullPivLU<Mat> lu(lhs.transpose());
            if (!lu.isInvertible()) throw SolverError("singular I - eps B_0 in vacation recursion");
            // gamma (I - eps B0) = S + select B0
            v.gamma[n] = lu.solve((S + v.select[n] * B0).transpose()).transpose();
            v.feed[n] = v.select[n] + eps * v.gamma[n];
        } else {
            v.gamma[n] = S;
        }
    }
    return v;
}

CMat numerator_basis(const QueueModel& model, const VacationMap& vmap, cplx z) {
    const int m = model.m();
    const int H = model.H;
    const int h = model.h;
    const double eps = model.eps();
    const auto& map = model.arrivals;
    const CMat I = CMat::Identity(m, m);
    const CMat AH = kernel_eval<cplx>(model.service(H), map, z);
    const cplx zH = std::pow(z, H);
    CMat G = CMat::Zero(vmap.dim, m);
    CMat Ah;
    if (eps < 1.0) Ah = kernel_eval<cplx>(model.service(h), map, z);
    cplx zn = 1.0;
    for (int n = 0; n < H; ++n, zn *= z) {
        if (n < h) {
            const CMat B = kernel_eval<cplx>(model.vacation(n), map, z);
            G += vmap.feed[n].cast<cplx>() * ((B - I) * AH * zn);
            if (eps < 1.0) {
                const CMat Dt = mat_pow(map.Dtilde, h - n).cast<cplx>();
                G += (1.0 - eps) * vmap.gamma[n].cast<cplx>() * (Dt * Ah * zH - AH * zn);
            }
        } else {
            const CMat A = kernel_eval<cplx>(model.service(n), map, z);
            G += (vmap.select[n] + vmap.gamma[n]).cast<cplx>() * (A * zH - AH * zn);
        }
    }
    return G;
}

CMat adjugate(const CMat& A) {
    const Eigen::Index n = A.rows();
    if (n == 1) return CMat::Ones(1, 1);
    CMat adj(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            CMat minor(n - 1, n - 1);
            for (Eigen::Index a = 0, ra = 0; a < n; ++a) {
                if (a == i) continue;
                for (Eigen::Index b = 0, cb = 0; b < n; ++b) {
                    if (b == j) continue;
                    minor(ra, cb++) = A(a, b);
                }
                ++ra;
            }
            const cplx d = n - 1 == 1 ? minor(0, 0) : minor.partialPivLu().determinant();
            adj(j, i) = ((i + j) % 2 ? -1.0 : 1.0) * d;
        }
    return adj;
}

namespace {

CMat characteristic_matrix(const QueueModel& model, cplx z) {
    const int m = model.m();
    return std::pow(z, model.H) * CMat::Identity(m, m) - kernel_eval<cplx>(model.service(model.H), model.arrivals, z);
}

struct LinearSystem {
    Mat A;
    Vec b;
};

LinearSystem boundary_system(const QueueModel& model, const Characteristic& ch, const VacationMap& vmap, int j) {
    const int m = model.m();
    const int dim = vmap.dim;
    auto rowfun = [&](cplx z) -> CVec {
        const CMat G = numerator_basis(model, vmap, z);
        return G * adjugate(characteristic_matrix(model, z)).col(j);
    };

    std::vector<Vec> rows;
    const double imtol = 1e-10;
    int upper = 0, lower = 0;
    for (const auto& r : ch.roots_P.roots) {
        if (r.location == Location::Outside) continue;
        if (std::abs(r.value - 1.0) <= 1e-6) continue;
        if (r.value.imag() > imtol) upper += r.multiplicity;
        if (r.value.imag() < -imtol) {
            lower += r.multiplicity;
            continue;
        }
        const double rad = std::min(0.05, 0.5 * (ch.min_kernel_pole - std::abs(r.value)));
        std::vector<CVec> vals;
        if (r.multiplicity == 1) vals.push_back(rowfun(r.value));
        else vals = cauchy_derivatives(rowfun, r.value, rad, r.multiplicity - 1);
        for (const auto& v : vals) {
            rows.push_back(v.real());
            if (std::abs(r.value.imag()) > imtol) rows.push_back(v.imag());
        }
    }
    if (upper != lower) throw SolverError("closed-disk roots are not closed under conjugation");

    // normalization: Psi+(1)e + O+(1)e = 1, with Psi+_j(1) from l'Hopital on the Cramer quotient
    const double rad1 = std::min(0.05, 0.5 * (ch.min_kernel_pole - 1.0));
    auto fullfun = [&](cplx z) -> CVec {
        const CMat X = characteristic_matrix(model, z);
        const CMat G = numerator_basis(model, vmap, z) * adjugate(X);
        CVec out(dim * m + 1);
        for (int c = 0; c < m; ++c) out.segment(c * dim, dim) = G.col(c);
        out(dim * m) = m == 1 ? X(0, 0) : X.partialPivLu().determinant();
        return out;
    };
    const auto d = cauchy_derivatives(fullfun, 1.0, rad1, 1);
    const double ddelta = d[1](dim * m).real();
    Vec norm = Vec::Zero(dim);
    for (int c = 0; c < m; ++c) norm += d[1].segment(c * dim, dim).real() / ddelta;
    for (int k = 0; k < model.h; ++k) norm += vmap.feed[k] * Vec::Ones(m);
    rows.push_back(norm);

    LinearSystem sys;
    sys.A.resize(static_cast<Eigen::Index>(rows.size()), dim);
    sys.b = Vec::Zero(static_cast<Eigen::Index>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        const double s = std::max(rows[i].cwiseAbs().maxCoeff(), 1e-300);
        sys.A.row(static_cast<Eigen::Index>(i)) = rows[i].transpose() / s;
        if (i + 1 == rows.size()) sys.b(static_cast<Eigen::Index>(i)) = 1.0 / s;
    }
    return sys;
}

// Psi+(1) direction matrix: Psi+(1) = x * dir.
Mat psi_one_direction(const QueueModel& model, const Characteristic& ch, const VacationMap& vmap) {
    const int m = model.m();
    const int dim = vmap.dim;
    const double rad1 = std::min(0.05, 0.5 * (ch.min_kernel_pole - 1.0));
    // Psi+(1) = num'(1) adj(X(1)) / delta'(1) + num(1) adj'(1)/delta'(1); num(1) adj(X(1)) = 0 only
    // column-wise, so take derivatives of the full product instead.
    auto fullfun = [&](cplx z) -> CVec {
        const CMat X = characteristic_matrix(model, z);
        const CMat G = numerator_basis(model, vmap, z) * adjugate(X);
        CVec out(dim * m + 1);
        for (int c = 0; c < m; ++c) out.segment(c * dim, dim) = G.col(c);
        out(dim * m) = m == 1 ? X(0, 0) : X.partialPivLu().determinant();
        return out;
    };
    const auto d = cauchy_derivatives(fullfun, 1.0, rad1, 1);
    const double ddelta = d[1](dim * m).real();
    Mat dir(dim, m);
    for (int c = 0; c < m; ++c) dir.col(c) = d[1].segment(c * dim, dim).real() / ddelta;
    return dir;
}

Vec solve_system(const LinearSystem& sys, const SolverOptions& opts, const RootSet& roots, double& cond,
                 double& residual) {
    if (sys.A.rows() != sys.A.cols()) {
        std::ostringstream os;
        os << "boundary system has " << sys.A.rows() << " rows for " << sys.A.cols() << " unknowns; roots:"
           << root_list(roots);
        throw SolverError(os.str());
    }
    Eigen::JacobiSVD<Mat> svd(sys.A);
    const auto& sv = svd.singularValues();
    cond = sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
    if (!(cond <= opts.cond_limit)) {
        std::ostringstream os;
        os << "ill-conditioned boundary system (condition " << cond << "); roots:" << root_list(roots);
        throw SolverError(os.str());
    }
    Vec x = sys.A.fullPivLu().solve(sys.b);
    residual = (sys.A * x - sys.b).cwiseAbs().maxCoeff();
    return x;
}

}  // namespace

BoundaryUnknowns solve_boundary(const QueueModel& model, const Characteristic& ch, const VacationMap& vmap,
                                const SolverOptions& opts) {
    const int m = model.m();
    const int H = model.H;
    const int mH = m * H;

    int closed = 0, ones = 0;
    for (const auto& r : ch.roots_P.roots) {
        if (r.location == Location::Outside) continue;
        closed += r.multiplicity;
        if (std::abs(r.value - 1.0) <= 1e-6) {
            ones += r.multiplicity;
            continue;
        }
        if (r.location == Location::OnCircle) {
            std::ostringstream os;
            os << "root on the unit circle other than 1: (" << r.value.real() << "," << r.value.imag() << ")";
            throw SolverError(os.str());
        }
    }
    if (closed != mH || ones != 1) {
        std::ostringstream os;
        os << "root-count mismatch: " << closed << " closed-disk roots (expected " << mH << "), multiplicity at 1 is "
           << ones << ";" << root_list(ch.roots_P);
        throw SolverError(os.str());
    }

    BoundaryUnknowns out;
    out.component = std::clamp(opts.component, 0, m - 1);
    const LinearSystem sys = boundary_system(model, ch, vmap, out.component);
    Vec x = solve_system(sys, opts, ch.roots_P, out.condition, out.residual);
    if (m >= 2 && opts.cross_check_component) {
        const int other = (out.component + 1) % m;
        double c2 = 0, r2 = 0;
        const Vec x2 = solve_system(boundary_system(model, ch, vmap, other), opts, ch.roots_P, c2, r2);
        out.component_gap = (x - x2).cwiseAbs().maxCoeff();
        if (out.component_gap > opts.component_tol) {
            std::ostringstream os;
            os << "component cross-check disagrees by " << out.component_gap;
            throw SolverError(os.str());
        }
    }

    auto clamp_vec = [&](RowVec& v, const char* what) {
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (v(i) >= 0) continue;
            if (v(i) < -opts.clamp_tol) {
                std::ostringstream os;
                os << "negative " << what << " entry " << v(i);
                throw SolverError(os.str());
            }
            v(i) = 0.0;
            ++out.clamped;
        }
    };
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x(i) < 0 && x(i) >= -opts.clamp_tol) {
            x(i) = 0.0;
            ++out.clamped;
        }
    out.x = x;
    const RowVec xr = x.transpose();
    for (int n = 0; n < H; ++n) {
        RowVec xi = xr * vmap.select[n];
        RowVec g = xr * vmap.gamma[n];
        clamp_vec(xi, "boundary");
        clamp_vec(g, "vacation-termination");
        out.xi_plus.push_back(xi);
        out.gamma_plus.push_back(g);
    }
    out.psi_at_one = xr * psi_one_direction(model, ch, vmap);
    out.o_at_one = RowVec::Zero(m);
    for (int k = 0; k < model.h; ++k)
        out.o_at_one += (xr * vmap.feed[k]) * kernel_eval<double>(model.vacation(k), model.arrivals, 1.0);
    return out;
}

CRowVec psi_plus(const QueueModel& model, const VacationMap& vmap, const Vec& x, cplx z) {
    const CRowVec num = x.transpose().cast<cplx>() * numerator_basis(model, vmap, z);
    const CMat X = characteristic_matrix(model, z);
    return X.transpose().partialPivLu().solve(num.transpose()).transpose();
}

RowVec EmbeddedDistributions::xi_total(int n) const {
    RowVec s = RowVec::Zero(xi_plus.front().front().size());
    for (const auto& col : xi_plus)
        if (n < static_cast<int>(col.size())) s += col[n];
    return s;
}

RowVec EmbeddedDistributions::gamma_total(int n) const {
    RowVec s = RowVec::Zero(xi_plus.front().front().size());
    for (const auto& col : gamma_plus)
        if (n < static_cast<int>(col.size())) s += col[n];
    return s;
}

double EmbeddedDistributions::total() const {
    double t = 0.0;
    for (int n = 0; n <= n_trunc; ++n) t += xi_total(n).sum() + gamma_total(n).sum();
    return t;
}

EmbeddedDistributions service_joint(const QueueModel& model, const Characteristic& ch, const KernelTable& kernels,
                                    const VacationMap& vmap, const BoundaryUnknowns& unknowns,
                                    const SolverOptions& opts) {
    (void)vmap;
    const int m = model.m();
    const int H = model.H;
    const int h = model.h;
    const double eps = model.eps();
    const auto& map = model.arrivals;

    std::vector<RowVec> u(H), feed(h);
    for (int n = 0; n < H; ++n) u[n] = unknowns.xi_plus[n] + unknowns.gamma_plus[n];
    for (int k = 0; k < h; ++k) feed[k] = unknowns.xi_plus[k] + eps * unknowns.gamma_plus[k];
    RowVec dorm = RowVec::Zero(m);
    if (eps < 1.0)
        for (int k = 0; k < h; ++k) dorm += (1.0 - eps) * unknowns.gamma_plus[k] * mat_pow(map.Dtilde, h - k);

    // generating function of xi+(n, H) over n, excluding dormancy-started services
    auto W = [&](cplx z) -> CRowVec {
        const CMat I = CMat::Identity(m, m);
        CRowVec w = CRowVec::Zero(m);
        CMat Ah;
        if (eps < 1.0) Ah = kernel_eval<cplx>(model.service(h), map, z);
        cplx zn = 1.0;
        for (int n = 0; n < H; ++n, zn *= z) {
            if (n < h) {
                if (eps < 1.0)
                    w += (1.0 - eps) * unknowns.gamma_plus[n].cast<cplx>() *
                         (mat_pow(map.Dtilde, h - n).cast<cplx>() * Ah - zn * I);
                w += feed[n].cast<cplx>() * (kernel_eval<cplx>(model.vacation(n), map, z) - I) * zn;
            } else {
                w += u[n].cast<cplx>() * (kernel_eval<cplx>(model.service(n), map, z) - zn * I);
            }
        }
        return w;
    };
    auto LW = [&](cplx z) -> CVec {
        const CMat AH = kernel_eval<cplx>(model.service(H), map, z);
        const CMat X = std::pow(z, H) * CMat::Identity(m, m) - AH;
        const CRowVec lhs = W(z) * AH;
        return X.transpose().partialPivLu().solve(lhs.transpose());
    };

    std::vector<Root> poles = ch.roots_P.where(Location::Outside);
    auto add_poles = [&](const PhaseType& ph) {
        for (const auto& r : kernel_poles(ph, map)) poles.push_back(r);
    };
    for (int k = 0; k < h; ++k) add_poles(model.vacation(k));
    for (int r = h; r < H; ++r) add_poles(model.service(r));
    if (eps < 1.0 && h == H) add_poles(model.service(H));

    std::vector<cplx> avoid;
    std::vector<double> inside_mod;
    for (const auto& r : ch.roots_P.roots)
        if (r.location != Location::Outside) {
            avoid.push_back(r.value);
            inside_mod.push_back(std::abs(r.value));
        }
    double taylor_r = 0.5, best = -1.0;
    for (int i = 0; i <= 120; ++i) {
        const double rr = 0.2 + 0.6 * i / 120.0;
        double gap = std::numeric_limits<double>::infinity();
        for (double a : inside_mod) gap = std::min(gap, std::abs(a - rr));
        if (gap > best) {
            best = gap;
            taylor_r = rr;
        }
    }

    const auto pf = partial_fractions_contour(LW, m, poles, H - 1, taylor_r, avoid, opts.contour);

    EmbeddedDistributions emb;
    for (const auto& e : pf)
        for (int k = 0; k <= e.polynomial_part.degree(); ++k)
            if (std::abs(e.polynomial_part.coeff(k)) > 1e-14) emb.polynomial_part = true;

    // the numerator of the Cramer quotient vanishes at every closed-disk root
    for (const auto& r : ch.roots_P.roots) {
        if (r.location == Location::Outside || std::abs(r.value - 1.0) <= 1e-6) continue;
        const CMat AH = kernel_eval<cplx>(model.service(H), map, r.value);
        const CMat adj = adjugate(std::pow(r.value, H) * CMat::Identity(m, m) - AH);
        const CRowVec w = W(r.value);
        // scale by the unknowns, not by w itself: for m = 1 the ratio |w A adj| / |w||A||adj| is always 1
        const double scale = unknowns.x.norm() * AH.norm() * adj.norm();
        if (scale == 0.0) continue;
        const double rel = (w * AH * adj).norm() / scale;
        emb.divisibility_residual = std::max(emb.divisibility_residual, rel);
    }
    if (emb.divisibility_residual > 1e-6) {
        std::ostringstream os;
        os << "numerator does not vanish at closed-disk roots (relative " << emb.divisibility_residual << ")";
        throw DivisibilityError(os.str());
    }

    // reconstruction at probe points away from poles and closed-disk roots
    {
        std::mt19937_64 rng(20240611ULL);
        std::uniform_real_distribution<double> rad(0.3, 1.6), ang(0.0, 2.0 * M_PI);
        double maxerr = 0.0, maxval = 0.0;
        int used = 0;
        for (int tries = 0; used < 20 && tries < 2000; ++tries) {
            const cplx z = std::polar(rad(rng), ang(rng));
            bool ok = true;
            for (const auto& p : poles)
                if (std::abs(z - p.value) < 0.05 * std::max(1.0, std::abs(p.value))) ok = false;
            for (cplx a : avoid)
                if (std::abs(z - a) < 0.05) ok = false;
            if (!ok) continue;
            const CVec f = LW(z);
            for (int c = 0; c < m; ++c) {
                maxerr = std::max(maxerr, std::abs(pf[c](z) - f(c)));
                maxval = std::max(maxval, std::abs(f(c)));
            }
            ++used;
        }
        emb.reconstruction_error = maxval > 0 ? maxerr / maxval : 0.0;
        if (emb.reconstruction_error > 1e-4) {
            std::ostringstream os;
            os << "partial-fraction reconstruction error " << emb.reconstruction_error;
            throw SolverError(os.str());
        }
    }

    const int cap_n = opts.n_trunc > 0 ? opts.n_trunc : opts.n_cap;
    const int len = cap_n + H + 1;
    std::vector<CVec> coef(m);
    for (int c = 0; c < m; ++c) coef[c] = pf[c].coefficients(len);

    emb.xi_plus.assign(H - h + 1, std::vector<RowVec>(len, RowVec::Zero(m)));
    emb.gamma_plus.assign(h, std::vector<RowVec>(len, RowVec::Zero(m)));
    for (int n = 0; n < len; ++n) {
        RowVec top(m);
        for (int c = 0; c < m; ++c) top(c) = coef[c](n).real();
        if (h == H && eps < 1.0) top += dorm * kernels.A_or_zero(H, h, n);
        emb.xi_plus[H - h][n] = top;
        for (int r = h; r < H; ++r) {
            RowVec lead = u[r];
            if (r == h) lead += dorm;
            emb.xi_plus[r - h][n] = lead * kernels.A_or_zero(r, h, n);
        }
        for (int k = 0; k < h && k <= n; ++k) emb.gamma_plus[k][n] = feed[k] * kernels.B_or_zero(k, n - k);
    }
    for (auto* table : {&emb.xi_plus, &emb.gamma_plus})
        for (auto& col : *table)
            for (auto& v : col)
                for (Eigen::Index i = 0; i < v.size(); ++i)
                    if (v(i) < 0) {
                        if (v(i) < -opts.clamp_tol) {
                            std::ostringstream os;
                            os << "negative embedded probability " << v(i);
                            throw SolverError(os.str());
                        }
                        if (v(i) < -kNoiseFloor) ++emb.clamped;
                        v(i) = 0.0;
                    }

    double dom = std::numeric_limits<double>::infinity();
    for (const auto& p : poles) dom = std::min(dom, std::abs(p.value));
    emb.dominant_pole = dom;
    const double q = 1.0 / dom;

    std::vector<double> mass(len);
    for (int n = 0; n < len; ++n) {
        double s = 0.0;
        for (const auto& col : emb.xi_plus) s += col[n].sum();
        for (const auto& col : emb.gamma_plus) s += col[n].sum();
        mass[n] = s;
    }
    std::vector<double> suffix(len);
    double acc = mass[len - 1] * q / (1.0 - q);
    for (int n = len - 1; n >= 0; --n) {
        suffix[n] = acc;
        acc += mass[n];
    }
    int N = cap_n;
    if (opts.n_trunc <= 0) {
        N = cap_n;
        for (int n = H; n <= cap_n; ++n)
            if (suffix[n] < opts.tail_mass) {
                N = n;
                break;
            }
    }
    emb.n_trunc = N;
    emb.stored = N + H + 1;
    emb.truncation_residual = suffix[N];
    for (auto* table : {&emb.xi_plus, &emb.gamma_plus})
        for (auto& col : *table) col.resize(emb.stored);
    return emb;
}

SigmaE sigma_and_E(const QueueModel& model, const BoundaryUnknowns& unknowns, const EmbeddedDistributions& emb) {
    const int H = model.H;
    const int h = model.h;
    const double eps = model.eps();
    const auto& map = model.arrivals;
    const int m = model.m();
    const Vec e = Vec::Ones(m);

    auto u_e = [&](int n) {
        if (n < H) return (unknowns.xi_plus[n] + unknowns.gamma_plus[n]).sum();
        return (emb.xi_total(n) + emb.gamma_total(n)).sum();
    };
    double finite = 0.0;
    for (int n = 0; n <= H; ++n) finite += u_e(n);
    const double beyond = (unknowns.psi_at_one + unknowns.o_at_one).sum() - finite;

    SigmaE se;
    double w = model.service(H).mean * beyond;
    for (int n = h; n <= H; ++n) w += u_e(n) * model.service(n).mean;
    for (int n = 0; n < h; ++n) {
        w += unknowns.xi_plus[n].sum() * model.vacation(n).mean;
        w += (1.0 - eps) * unknowns.gamma_plus[n].sum() * model.service(h).mean;
        w += eps * unknowns.gamma_plus[n].sum() * model.vacation(n).mean;
    }
    double dorm = 0.0;
    if (eps < 1.0) {
        for (int n = 0; n < h; ++n) {
            RowVec acc = RowVec::Zero(m);
            for (int k = 0; k <= n; ++k) acc += unknowns.gamma_plus[k] * mat_pow(map.Dtilde, n - k);
            dorm += (acc * map.negCinv * e)(0);
        }
        dorm *= (1.0 - eps);
    }
    se.w_hat = w;
    se.E = w + dorm;
    const double p_dor = dorm / se.E;
    se.sigma_inverse = (1.0 - p_dor) / w;
    return se;
}

ArbitraryDistributions arbitrary_epoch(const QueueModel& model, const EmbeddedDistributions& emb, const SigmaE& se,
                                       const SolverOptions& opts) {
    const int H = model.H;
    const int h = model.h;
    const int m = model.m();
    const double eps = model.eps();
    const auto& map = model.arrivals;
    const Mat& Ci = map.negCinv;
    const Mat& D = map.D;
    const double E = se.E;
    const int N = emb.n_trunc;

    ArbitraryDistributions arb;
    arb.n_trunc = N;
    arb.E = E;
    arb.w_hat = se.w_hat;

    std::vector<RowVec> gsmall(h), feed(h);
    for (int k = 0; k < h; ++k) gsmall[k] = emb.gamma_total(k);
    // xi+(k) for k < h equals the sum of xi+(k, r) over r
    for (int k = 0; k < h; ++k) feed[k] = emb.xi_total(k) + eps * gsmall[k];

    if (eps < 1.0) {
        for (int n = 0; n < h; ++n) {
            RowVec acc = RowVec::Zero(m);
            for (int k = 0; k <= n; ++k) acc += gsmall[k] * mat_pow(map.Dtilde, n - k);
            arb.R_dormant.push_back(acc * Ci / E);
        }
    }

    auto u = [&](int n) -> RowVec { return emb.xi_total(n) + emb.gamma_total(n); };
    arb.xi.assign(H - h + 1, std::vector<RowVec>(N + 1, RowVec::Zero(m)));
    for (int r = h; r <= H; ++r) {
        auto& a = arb.xi[r - h];
        for (int n = 0; n <= N; ++n) {
            RowVec src = RowVec::Zero(m);
            if (r == H) src += u(n + H) / E;
            else if (n == 0) src += u(r) / E;
            if (n == 0 && r == h && eps < 1.0) src += (1.0 - eps) * arb.R_dormant[h - 1] * D;
            RowVec prev = n > 0 ? RowVec(a[n - 1] * D) : RowVec::Zero(m);
            a[n] = (prev + src - emb.xi_plus[r - h][n] / E) * Ci;
        }
    }
    arb.gamma.assign(h, std::vector<RowVec>(N + 1, RowVec::Zero(m)));
    for (int k = 0; k < h; ++k) {
        auto& a = arb.gamma[k];
        if (k > N) continue;
        a[k] = ((feed[k] - emb.gamma_plus[k][k]) / E) * Ci;
        for (int n = k + 1; n <= N; ++n) a[n] = (a[n - 1] * D - emb.gamma_plus[k][n] / E) * Ci;
    }

    auto fix = [&](RowVec& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (v(i) < 0) {
                if (v(i) < -1e-8) {
                    std::ostringstream os;
                    os << "negative arbitrary-epoch probability " << v(i);
                    throw SolverError(os.str());
                }
                if (v(i) < -kNoiseFloor) ++arb.clamped;
                v(i) = 0.0;
            }
    };
    double total = 0.0;
    for (auto& v : arb.R_dormant) {
        fix(v);
        total += (1.0 - eps) * v.sum();
    }
    for (auto* table : {&arb.xi, &arb.gamma})
        for (auto& col : *table)
            for (auto& v : col) {
                fix(v);
                total += v.sum();
            }
    arb.total = total;
    (void)opts;
    return arb;
}

PerformanceReport measures(const QueueModel& model, const ArbitraryDistributions& arb,
                           const EmbeddedDistributions& emb) {
    const int H = model.H;
    const int h = model.h;
    const double eps = model.eps();
    const int N = arb.n_trunc;
    const double q = emb.dominant_pole > 1.0 ? 1.0 / emb.dominant_pole : 0.0;
    const double tail_mass = q / (1.0 - q);
    const double tail_moment = q / ((1.0 - q) * (1.0 - q));

    PerformanceReport rep;
    rep.lambda = model.arrivals.lambda;
    rep.queue.assign(N + 1, 0.0);
    rep.queue_plus.assign(N + 1, 0.0);
    rep.server.assign(H - h + 1, 0.0);
    rep.vacation.assign(h, 0.0);

    for (int n = 0; n < static_cast<int>(arb.R_dormant.size()); ++n) rep.queue[n] += (1.0 - eps) * arb.R_dormant[n].sum();
    double Lser = 0.0;
    for (int r = h; r <= H; ++r) {
        double s = 0.0;
        for (int n = 0; n <= N; ++n) {
            const double v = arb.xi[r - h][n].sum();
            rep.queue[n] += v;
            s += v;
        }
        s += arb.xi[r - h][N].sum() * tail_mass;
        rep.server[r - h] = s;
        Lser += r * s;
    }
    for (int k = 0; k < h; ++k) {
        double s = 0.0;
        for (int n = 0; n <= N; ++n) {
            const double v = arb.gamma[k][n].sum();
            rep.queue[n] += v;
            s += v;
        }
        s += arb.gamma[k][N].sum() * tail_mass;
        rep.vacation[k] = s;
    }
    for (int n = 0; n <= N; ++n) rep.queue_plus[n] = (emb.xi_total(n) + emb.gamma_total(n)).sum();

    double Lq = 0.0;
    for (int n = 0; n <= N; ++n) Lq += n * rep.queue[n];
    Lq += rep.queue[N] * (N * tail_mass + tail_moment);

    rep.P_busy = 0.0;
    for (double s : rep.server) rep.P_busy += s;
    rep.P_vac = 0.0;
    double kv = 0.0;
    for (int k = 0; k < h; ++k) {
        rep.P_vac += rep.vacation[k];
        kv += k * rep.vacation[k];
    }
    rep.P_dor = 0.0;
    for (const auto& v : arb.R_dormant) rep.P_dor += (1.0 - eps) * v.sum();
    rep.P_idle = rep.P_dor + rep.P_vac;
    rep.L_q = Lq;
    rep.L_s = Lq + Lser;
    rep.W_q = rep.L_q / rep.lambda;
    rep.W_s = rep.L_s / rep.lambda;
    rep.L_ser = rep.P_busy > 0 ? Lser / rep.P_busy : 0.0;
    rep.L_vac = rep.P_vac > 0 ? kv / rep.P_vac : 0.0;
    return rep;
}

Solution solve(const QueueModel& model, const SolverOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    const double rho = model.rho();
    if (!(rho < 1.0)) {
        std::ostringstream os;
        os << "unstable model: rho = " << rho;
        throw InstabilityError(os.str());
    }
    Solution s;
    const KernelTable kernels = build_kernels(model, opts);
    if (kernels.max_residual > opts.kernel_residual)
        s.warnings.push_back("kernel coefficients truncated with residual " + std::to_string(kernels.max_residual));
    s.ch = build_characteristic(model, opts);
    const VacationMap vmap = vacation_termination(model, kernels);
    s.boundary = solve_boundary(model, s.ch, vmap, opts);
    s.embedded = service_joint(model, s.ch, kernels, vmap, s.boundary, opts);
    s.sigma = sigma_and_E(model, s.boundary, s.embedded);
    s.embedded.sigma_inverse = s.sigma.sigma_inverse;
    s.arbitrary = arbitrary_epoch(model, s.embedded, s.sigma, opts);
    s.report = measures(model, s.arbitrary, s.embedded);
    s.embedded_total = s.embedded.total();

    for (int n = 0; n < model.H; ++n) {
        const double gap = (s.embedded.xi_total(n) - s.boundary.xi_plus[n]).cwiseAbs().maxCoeff();
        if (gap > 1e-8) s.warnings.push_back("boundary/table mismatch at n=" + std::to_string(n));
    }
    if (s.boundary.clamped + s.embedded.clamped + s.arbitrary.clamped > 0)
        s.warnings.push_back("clamped " +
                             std::to_string(s.boundary.clamped + s.embedded.clamped + s.arbitrary.clamped) +
                             " tiny negative entries");
    if (s.embedded.truncation_residual > opts.tail_mass)
        s.warnings.push_back("truncation leaves embedded mass " + std::to_string(s.embedded.truncation_residual));
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return s;
}

}  // namespace bulkvac
