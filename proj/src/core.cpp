#include "bulkvac/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bulkvac {

Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

MarkovianArrivalProcess validate_map(const Mat& C, const Mat& D, double tol) {
    if (C.rows() != C.cols() || D.rows() != D.cols() || C.rows() != D.rows() || C.rows() == 0)
        throw ModelError("arrivals: C and D must be square of equal size");
    const int m = static_cast<int>(C.rows());
    const double scale = std::max(1.0, C.cwiseAbs().maxCoeff());
    for (int i = 0; i < m; ++i) {
        if (!(C(i, i) < 0)) throw ModelError("arrivals.C: diagonal entry " + std::to_string(i) + " must be negative");
        for (int j = 0; j < m; ++j) {
            if (i != j && C(i, j) < 0)
                throw ModelError("arrivals.C: negative off-diagonal entry (" + std::to_string(i) + "," +
                                 std::to_string(j) + ")");
            if (D(i, j) < 0)
                throw ModelError("arrivals.D: negative entry (" + std::to_string(i) + "," + std::to_string(j) + ")");
        }
    }
    const Vec rows = (C + D).rowwise().sum();
    if (rows.cwiseAbs().maxCoeff() > tol * scale)
        throw ModelError("arrivals: C+D row sums are not zero (max defect " + std::to_string(rows.cwiseAbs().maxCoeff()) + ")");
    if (D.cwiseAbs().maxCoeff() == 0.0) throw ModelError("arrivals.D: no arrivals (D = 0)");

    // xi (C+D) = 0, xi e = 1 as an overdetermined least-squares problem
    Mat A(m + 1, m);
    A.topRows(m) = (C + D).transpose();
    A.row(m).setOnes();
    Vec b = Vec::Zero(m + 1);
    b(m) = 1.0;
    Eigen::ColPivHouseholderQR<Mat> qr(A);
    if (qr.rank() < m) throw ModelError("arrivals: C+D is reducible (no unique stationary vector)");
    RowVec xi = qr.solve(b).transpose();
    if ((A * xi.transpose() - b).norm() > 1e-8 || xi.minCoeff() < -1e-10)
        throw ModelError("arrivals: C+D is reducible (no unique stationary vector)");
    // a second independent null direction signals reducibility even when the QR rank is full
    Eigen::FullPivLU<Mat> lu((C + D).transpose());
    lu.setThreshold(1e-10);
    if (lu.dimensionOfKernel() > 1) throw ModelError("arrivals: C+D is reducible (no unique stationary vector)");
    xi = xi.cwiseMax(0.0);
    xi /= xi.sum();

    MarkovianArrivalProcess map;
    map.C = C;
    map.D = D;
    map.xi = xi;
    map.lambda = (xi * D).sum();
    map.negCinv = (-C).inverse();
    map.Dtilde = map.negCinv * D;
    return map;
}

PhaseType validate_ph(const RowVec& alpha, const Mat& T, double tol) {
    if (T.rows() != T.cols() || T.rows() == 0 || alpha.size() != T.rows())
        throw ModelError("T must be square and match alpha");
    const int n = static_cast<int>(T.rows());
    if (alpha.minCoeff() < 0) throw ModelError("alpha has a negative entry");
    if (alpha.sum() > 1 + tol) throw ModelError("alpha sums above one");
    const double scale = std::max(1.0, T.cwiseAbs().maxCoeff());
    for (int i = 0; i < n; ++i) {
        if (!(T(i, i) < 0)) throw ModelError("T diagonal must be negative");
        for (int j = 0; j < n; ++j)
            if (i != j && T(i, j) < 0) throw ModelError("T off-diagonal must be nonnegative");
        if (T.row(i).sum() > tol * scale) throw ModelError("T row sums must be nonpositive");
    }
    Eigen::FullPivLU<Mat> lu(T);
    if (!lu.isInvertible()) throw ModelError("T is singular");
    PhaseType ph;
    ph.alpha = alpha;
    ph.T = T;
    ph.t0 = -T * Vec::Ones(n);
    ph.mean = alpha * (-T).inverse() * Vec::Ones(n);
    if (!(ph.mean > 0) || !std::isfinite(ph.mean)) throw ModelError("mean must be finite and positive");
    return ph;
}

PhaseType erlang(int phases, double rate) {
    if (phases < 1 || !(rate > 0)) throw ModelError("erlang needs phases >= 1 and rate > 0");
    const double r = phases * rate;
    Mat T = Mat::Zero(phases, phases);
    for (int i = 0; i < phases; ++i) {
        T(i, i) = -r;
        if (i + 1 < phases) T(i, i + 1) = r;
    }
    RowVec alpha = RowVec::Zero(phases);
    alpha(0) = 1.0;
    return validate_ph(alpha, T);
}

double QueueModel::rho() const { return arrivals.lambda * service(H).mean / H; }

QueueModel make_model(int h, int H, std::vector<PhaseType> services, std::vector<PhaseType> vacations,
                      Policy policy, MarkovianArrivalProcess arrivals) {
    if (h < 1 || H < h) throw ModelError("thresholds: need 1 <= h <= H");
    if (static_cast<int>(services.size()) != H - h + 1)
        throw ModelError("services: expected " + std::to_string(H - h + 1) + " entries");
    if (static_cast<int>(vacations.size()) != h)
        throw ModelError("vacations: expected " + std::to_string(h) + " entries");
    QueueModel q;
    q.h = h;
    q.H = H;
    q.services = std::move(services);
    q.vacations = std::move(vacations);
    q.policy = policy;
    q.arrivals = std::move(arrivals);
    return q;
}

const PhaseType& kernel_law(const QueueModel& model, KernelKind kind, int index) {
    return kind == KernelKind::Service ? model.service(index) : model.vacation(index);
}

CMat kernel_eval(const QueueModel& model, KernelKind kind, int index, cplx z) {
    return kernel_eval<cplx>(kernel_law(model, kind, index), model.arrivals, z);
}

CMat kernel_derivative(const PhaseType& law, const MarkovianArrivalProcess& map, cplx z) {
    const int m = map.m();
    const int n = law.n();
    const Mat I = Mat::Identity(m, m);
    CMat sys = -kron(law.T, I).cast<cplx>();
    const CMat gen = map.C.cast<cplx>() + map.D.cast<cplx>() * z;
    for (int i = 0; i < n; ++i) sys.block(i * m, i * m, m, m) -= gen;
    Eigen::PartialPivLU<CMat> lu(sys);
    const CMat X = lu.solve(kron(law.t0, I).cast<cplx>());
    // d/dz R = R (I x D) R
    const CMat Y = lu.solve(kron(Mat::Identity(n, n), map.D).cast<cplx>() * X);
    return kron(law.alpha, I).cast<cplx>() * Y;
}

namespace {

struct Resolvent {
    Mat left;   // alpha x I
    Mat U;      // W (I x D)
    Mat start;  // W (t0 x I)
};

Resolvent resolvent(const PhaseType& law, const MarkovianArrivalProcess& map) {
    const int m = map.m();
    const int n = law.n();
    const Mat I = Mat::Identity(m, m);
    const Mat sys = -(kron(law.T, I) + kron(Mat::Identity(n, n), map.C));
    Eigen::PartialPivLU<Mat> lu(sys);
    Resolvent r;
    r.left = kron(law.alpha, I);
    r.U = lu.solve(kron(Mat::Identity(n, n), map.D));
    r.start = lu.solve(kron(law.t0, I));
    return r;
}

double row_defect(const Mat& partial) {
    return (Vec::Ones(partial.rows()) - partial.rowwise().sum()).maxCoeff();
}

}  // namespace

KernelCoefficients kernel_coefficients(const PhaseType& law, const MarkovianArrivalProcess& map, int L,
                                       double target) {
    if (L < 0) throw std::invalid_argument("L_trunc must be nonnegative");
    const Resolvent r = resolvent(law, map);
    KernelCoefficients out;
    out.coeffs.reserve(L + 1);
    Mat Y = r.start;
    Mat partial = Mat::Zero(map.m(), map.m());
    for (int l = 0; l <= L; ++l) {
        Mat A = (r.left * Y).cwiseMax(0.0);
        partial += A;
        out.coeffs.push_back(std::move(A));
        if (l < L) Y = r.U * Y;
    }
    out.residual = std::max(0.0, row_defect(partial));
    if (out.residual > target) {
        std::ostringstream os;
        os << "L_trunc=" << L << " leaves residual " << out.residual << " above target " << target;
        throw TruncationError(os.str(), out.residual);
    }
    return out;
}

KernelCoefficients kernel_coefficients_adaptive(const PhaseType& law, const MarkovianArrivalProcess& map,
                                                double target, int cap, int min_len) {
    const Resolvent r = resolvent(law, map);
    KernelCoefficients out;
    Mat Y = r.start;
    Mat partial = Mat::Zero(map.m(), map.m());
    for (int l = 0; l <= cap; ++l) {
        Mat A = (r.left * Y).cwiseMax(0.0);
        partial += A;
        out.coeffs.push_back(std::move(A));
        out.residual = std::max(0.0, row_defect(partial));
        if (out.residual <= target && l + 1 >= min_len) break;
        Y = r.U * Y;
    }
    return out;
}

}  // namespace bulkvac
