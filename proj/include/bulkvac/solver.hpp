#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bulkvac/core.hpp"
#include "bulkvac/poly.hpp"

namespace bulkvac {

struct SolverOptions {
    int n_trunc = 0;  // 0 picks the truncation from the tail bound
    int n_cap = 5000;
    double tail_mass = 1e-9;
    int kernel_cap = 4096;
    double kernel_residual = 1e-12;
    RootOptions roots;
    double cond_limit = 1e12;
    int component = 0;
    bool cross_check_component = true;
    double component_tol = 1e-6;
    double clamp_tol = 1e-10;
    double interp_radius = 1.25;
    ContourOptions contour;
};

struct KernelTable {
    std::vector<KernelCoefficients> service;   // index r - h
    std::vector<KernelCoefficients> vacation;  // index k
    double max_residual = 0.0;

    const Mat& A(int r, int h, int l) const;
    const Mat& B(int k, int l) const;
    // Zero past the stored length.
    Mat A_or_zero(int r, int h, int l) const;
    Mat B_or_zero(int k, int l) const;
};

KernelTable build_kernels(const QueueModel& model, const SolverOptions& opts, int min_len = 0);

// Poles of a kernel: roots of det(-tau I - C - z D) over the eigenvalues tau of T.
std::vector<Root> kernel_poles(const PhaseType& law, const MarkovianArrivalProcess& map);

struct Characteristic {
    int m = 0;
    int H = 0;
    Polynomial d_H;    // det(-(T_H (+) (C + D z)))
    Polynomial det_M;  // |M(z)|, M(z) = z^H d_H(z) I - d_H(z) A^(H)(z)
    Polynomial P;      // |M(z)| / d_H(z)^(m-1)
    RootSet roots_M;
    RootSet roots_P;
    int degree_bound_M = 0;
    int degree_bound_P = 0;
    double min_kernel_pole = 0.0;  // smallest modulus among all kernel poles
    std::function<CMat(cplx)> M;
};

Characteristic build_characteristic(const QueueModel& model, const SolverOptions& opts = {});

// Linear map from the unknowns x = (xi+(0), ..., xi+(H-1)) to the vacation-termination vectors.
struct VacationMap {
    int dim = 0;                // m H
    std::vector<Mat> gamma;     // gamma+(n) = x * gamma[n], n = 0..H-1
    std::vector<Mat> feed;      // xi+(k) + eps gamma+(k) = x * feed[k], k = 0..h-1
    std::vector<Mat> select;    // xi+(n) = x * select[n]
};

VacationMap vacation_termination(const QueueModel& model, const KernelTable& kernels);

// Matrix G(z) with numerator(z) = x G(z), where Psi+(z)(z^H I - A^(H)(z)) = numerator(z).
CMat numerator_basis(const QueueModel& model, const VacationMap& vmap, cplx z);

CMat adjugate(const CMat& A);

struct BoundaryUnknowns {
    std::vector<RowVec> xi_plus;     // n = 0..H-1
    std::vector<RowVec> gamma_plus;  // n = 0..H-1 (vacation terminations at these queue sizes)
    Vec x;
    RowVec psi_at_one;  // Psi+(1)
    RowVec o_at_one;    // O+(1)
    double residual = 0.0;
    double condition = 0.0;
    double component_gap = 0.0;
    int component = 0;
    int clamped = 0;
};

BoundaryUnknowns solve_boundary(const QueueModel& model, const Characteristic& ch, const VacationMap& vmap,
                                const SolverOptions& opts = {});

// Psi+(z) from the Cramer quotient of the solved numerator.
CRowVec psi_plus(const QueueModel& model, const VacationMap& vmap, const Vec& x, cplx z);

struct EmbeddedDistributions {
    int n_trunc = 0;                                  // tables cover n = 0..n_trunc
    int stored = 0;                                   // internal length (n_trunc + H + 1)
    std::vector<std::vector<RowVec>> xi_plus;         // [r - h][n]
    std::vector<std::vector<RowVec>> gamma_plus;      // [k][n], zero for n < k
    double sigma_inverse = 0.0;
    double truncation_residual = 0.0;                 // embedded mass beyond n_trunc
    double dominant_pole = 0.0;
    bool polynomial_part = false;
    double reconstruction_error = 0.0;
    double divisibility_residual = 0.0;
    int clamped = 0;

    RowVec xi_total(int n) const;     // sum over r
    RowVec gamma_total(int n) const;  // sum over k
    double total() const;             // embedded mass over n = 0..n_trunc
};

EmbeddedDistributions service_joint(const QueueModel& model, const Characteristic& ch, const KernelTable& kernels,
                                    const VacationMap& vmap, const BoundaryUnknowns& unknowns,
                                    const SolverOptions& opts = {});

struct SigmaE {
    double sigma_inverse = 0.0;
    double w_hat = 0.0;
    double E = 0.0;
};

SigmaE sigma_and_E(const QueueModel& model, const BoundaryUnknowns& unknowns, const EmbeddedDistributions& emb);

struct ArbitraryDistributions {
    int n_trunc = 0;
    std::vector<RowVec> R_dormant;                // n = 0..h-1, empty under MV
    std::vector<std::vector<RowVec>> xi;          // [r - h][n]
    std::vector<std::vector<RowVec>> gamma;       // [k][n]
    double E = 0.0;
    double w_hat = 0.0;
    double total = 0.0;
    int clamped = 0;
};

ArbitraryDistributions arbitrary_epoch(const QueueModel& model, const EmbeddedDistributions& emb, const SigmaE& se,
                                       const SolverOptions& opts = {});

struct PerformanceReport {
    double lambda = 0.0;
    double L_q = 0.0, L_s = 0.0, W_q = 0.0, W_s = 0.0;
    double L_ser = 0.0, L_vac = 0.0;
    double P_dor = 0.0, P_busy = 0.0, P_vac = 0.0, P_idle = 0.0;
    std::vector<double> queue;       // P_n^queue
    std::vector<double> queue_plus;  // P_n^queue+ at embedded epochs
    std::vector<double> server;      // P_r^ser, index r - h
    std::vector<double> vacation;    // gamma_vac^[k]
};

PerformanceReport measures(const QueueModel& model, const ArbitraryDistributions& arb,
                           const EmbeddedDistributions& emb);

struct Solution {
    Characteristic ch;
    BoundaryUnknowns boundary;
    EmbeddedDistributions embedded;
    SigmaE sigma;
    ArbitraryDistributions arbitrary;
    PerformanceReport report;
    double embedded_total = 0.0;
    double seconds = 0.0;
    std::vector<std::string> warnings;
};

Solution solve(const QueueModel& model, const SolverOptions& opts = {});

}  // namespace bulkvac
