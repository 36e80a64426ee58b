#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bulkvac {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using CRowVec = Eigen::RowVectorXcd;

class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InstabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MarkovianArrivalProcess {
    Mat C;
    Mat D;
    RowVec xi;      // stationary phase vector of C+D
    double lambda;  // fundamental arrival rate xi*D*e
    Mat Dtilde;     // (-C)^{-1} D
    Mat negCinv;    // (-C)^{-1}

    int m() const { return static_cast<int>(C.rows()); }
};

MarkovianArrivalProcess validate_map(const Mat& C, const Mat& D, double tol = 1e-9);

struct PhaseType {
    RowVec alpha;
    Mat T;
    Vec t0;  // exit rates -T e
    double mean;

    int n() const { return static_cast<int>(T.rows()); }
};

PhaseType validate_ph(const RowVec& alpha, const Mat& T, double tol = 1e-9);

// Erlang law with the given number of phases and mean 1/rate.
PhaseType erlang(int phases, double rate);

enum class Policy { SV, MV };

inline double epsilon(Policy p) { return p == Policy::MV ? 1.0 : 0.0; }
inline const char* policy_name(Policy p) { return p == Policy::MV ? "mv" : "sv"; }

struct QueueModel {
    int h = 1;
    int H = 1;
    std::vector<PhaseType> services;   // index r - h, r in [h, H]
    std::vector<PhaseType> vacations;  // index k, k in [0, h-1]
    Policy policy = Policy::SV;
    MarkovianArrivalProcess arrivals;

    const PhaseType& service(int r) const { return services.at(r - h); }
    const PhaseType& vacation(int k) const { return vacations.at(k); }
    int m() const { return arrivals.m(); }
    double eps() const { return epsilon(policy); }
    double rho() const;
};

// Checks thresholds and family sizes; throws ModelError.
QueueModel make_model(int h, int H, std::vector<PhaseType> services,
                      std::vector<PhaseType> vacations, Policy policy,
                      MarkovianArrivalProcess arrivals);

enum class KernelKind { Service, Vacation };

const PhaseType& kernel_law(const QueueModel& model, KernelKind kind, int index);

Mat kron(const Mat& a, const Mat& b);

// Matrix generating function of arrivals during one draw of `law`:
// (alpha x I)(-(T (+) (C + D z)))^{-1}(t0 x I).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> kernel_eval(const PhaseType& law,
                                                                   const MarkovianArrivalProcess& map,
                                                                   Scalar z) {
    using M = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const int m = map.m();
    const int n = law.n();
    const Mat I = Mat::Identity(m, m);
    const M gen = (map.C.template cast<Scalar>() + map.D.template cast<Scalar>() * z);
    M sys = -kron(law.T, I).template cast<Scalar>();
    for (int i = 0; i < n; ++i) sys.block(i * m, i * m, m, m) -= gen;
    const M rhs = kron(law.t0, I).template cast<Scalar>();
    Eigen::PartialPivLU<M> lu(sys);
    const M X = lu.solve(rhs);
    if (!X.allFinite()) {
        throw SolverError("singular kernel system at z=" + std::to_string(std::real(cplx(z))) + "+" +
                          std::to_string(std::imag(cplx(z))) + "i");
    }
    return kron(law.alpha, I).template cast<Scalar>() * X;
}

CMat kernel_eval(const QueueModel& model, KernelKind kind, int index, cplx z);

// Derivative of the kernel in z.
CMat kernel_derivative(const PhaseType& law, const MarkovianArrivalProcess& map, cplx z);

struct KernelCoefficients {
    std::vector<Mat> coeffs;  // coeffs[l], l = 0..L
    double residual;          // max row defect of the partial sum against A(1)

    int size() const { return static_cast<int>(coeffs.size()); }
    const Mat& at(int l) const { return coeffs.at(l); }
};

class TruncationError : public std::runtime_error {
public:
    TruncationError(const std::string& what, double achieved)
        : std::runtime_error(what), achieved_residual(achieved) {}
    double achieved_residual;
};

// Coefficients A_0..A_L.  Throws TruncationError if the residual exceeds target.
KernelCoefficients kernel_coefficients(const PhaseType& law, const MarkovianArrivalProcess& map, int L,
                                       double target = 1e-12);

// Grows L until the residual is below target or the cap is hit (no throw).
KernelCoefficients kernel_coefficients_adaptive(const PhaseType& law, const MarkovianArrivalProcess& map,
                                                double target = 1e-12, int cap = 4096, int min_len = 0);

}  // namespace bulkvac
