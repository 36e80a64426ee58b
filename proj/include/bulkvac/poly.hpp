#pragma once

#include <functional>
#include <vector>

#include "bulkvac/core.hpp"

namespace bulkvac {

// Complex polynomial, coefficients in ascending degree.
class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(CVec coeffs) : c_(std::move(coeffs)) {}
    Polynomial(std::initializer_list<cplx> coeffs);

    static Polynomial from_roots(const std::vector<cplx>& roots, cplx lead = 1.0);

    int degree() const { return static_cast<int>(c_.size()) - 1; }
    bool empty() const { return c_.size() == 0; }
    const CVec& coeffs() const { return c_; }
    cplx coeff(int k) const { return k >= 0 && k < c_.size() ? c_(k) : cplx(0.0); }

    cplx operator()(cplx z) const;
    Polynomial derivative() const;
    // Drops trailing coefficients below rel_tol * max |coefficient|.
    Polynomial trimmed(double rel_tol = 1e-10) const;
    // Coefficients of p(z0 + w) in powers of w.
    Polynomial shifted(cplx z0) const;

    Polynomial operator+(const Polynomial& o) const;
    Polynomial operator-(const Polynomial& o) const;
    Polynomial operator*(const Polynomial& o) const;
    Polynomial operator*(cplx s) const;

    // this = q * d + r with deg r < deg d.
    void divmod(const Polynomial& d, Polynomial& q, Polynomial& r) const;

private:
    CVec c_;
};

std::vector<cplx> circle_nodes(int count, double radius = 1.25);

Polynomial poly_from_samples(const std::vector<cplx>& nodes, const CVec& values, int degree_bound,
                             double drop_tol = 1e-10);

Polynomial interpolate(const std::function<cplx(cplx)>& f, int degree_bound, double radius = 1.25);

Polynomial det_poly(const std::function<CMat(cplx)>& eval, int size, int degree_bound, double radius = 1.25);

enum class Location { Inside, OnCircle, Outside };

struct Root {
    cplx value;
    int multiplicity;
    Location location;
};

struct RootSet {
    std::vector<Root> roots;

    int count(Location where) const;
    int total() const;
    std::vector<Root> where(Location loc) const;
};

struct RootOptions {
    double cluster_tol = 1e-6;
    double circle_tol = 1e-8;
};

Location classify(cplx z, double circle_tol = 1e-8);

RootSet find_roots(const Polynomial& p, const RootOptions& opts = {});

struct PartialFractionTerm {
    cplx pole;
    int order;      // term is residue / (z - pole)^order
    cplx residue;
};

struct PartialFractionExpansion {
    Polynomial polynomial_part;
    std::vector<PartialFractionTerm> terms;

    cplx operator()(cplx z) const;
    // Taylor coefficients at the origin, n = 0..count-1.
    CVec coefficients(int count) const;
};

class DivisibilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// numerator/denominator with the denominator's closed-disk roots cancelled against the numerator.
PartialFractionExpansion partial_fractions(const Polynomial& numerator, const Polynomial& denominator,
                                           const std::vector<Root>& poles, double div_tol = 1e-6);

struct ContourOptions {
    int nodes = 64;
    double radius_fraction = 0.3;  // contour radius relative to the gap to other singular points
    double group_tol = 1e-3;       // poles closer than this (relative) share one contour
    double merge_tol = 1e-7;       // closer than this they are one multiple pole
    int taylor_nodes = 256;
};

// Vector-valued rational function known only pointwise.  Principal parts at each pole come from
// contour integrals of f on a small circle; the polynomial part of degree <= poly_degree from the
// Taylor coefficients at the origin measured on |z| = taylor_radius.  Returns one expansion per
// component.
std::vector<PartialFractionExpansion> partial_fractions_contour(const std::function<CVec(cplx)>& f, int dim,
                                                                const std::vector<Root>& poles, int poly_degree,
                                                                double taylor_radius,
                                                                const std::vector<cplx>& avoid = {},
                                                                const ContourOptions& opts = {});

// Taylor coefficients at the origin from samples on |z| = radius.
std::vector<CVec> taylor_coefficients(const std::function<CVec(cplx)>& f, int dim, int count, double radius,
                                      int nodes);

// Derivatives f^(k)(z0), k = 0..order, by the Cauchy integral on |z - z0| = radius.
std::vector<CVec> cauchy_derivatives(const std::function<CVec(cplx)>& f, cplx z0, double radius, int order,
                                     int nodes = 48);

}  // namespace bulkvac
