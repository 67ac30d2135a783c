#pragma once

#include <functional>
#include <string>
#include <utility>

// Scalar constitutive data for the quasilinear problems: an increasing flux
// function phi with three derivatives, a reaction term f with derivative, a
// reaction strength K, and an invariant interval [u_minus, u_plus].  The
// ellipticity window [c_minus, c_plus] is the range of phi' over the invariant
// interval, estimated by a fine grid scan.

namespace latpde {

using ScalarFn = std::function<double(double)>;

class Nonlinearity {
public:
    // Throws std::invalid_argument unless phi' > 0 on [u_minus, u_plus] and f
    // points inward at both endpoints (f(u_minus) >= 0 >= f(u_plus)), which is
    // what keeps the interval invariant under the dynamics.
    Nonlinearity(std::string name, ScalarFn phi, ScalarFn dphi, ScalarFn d2phi,
                 ScalarFn d3phi, ScalarFn f, ScalarFn df, double K, double u_minus,
                 double u_plus);

    const std::string& name() const { return name_; }

    double phi(double u) const { return phi_(u); }
    double dphi(double u) const { return dphi_(u); }
    double d2phi(double u) const { return d2phi_(u); }
    double d3phi(double u) const { return d3phi_(u); }
    double f(double u) const { return f_(u); }
    double df(double u) const { return df_(u); }

    double K() const { return K_; }
    double u_minus() const { return u_minus_; }
    double u_plus() const { return u_plus_; }
    double c_minus() const { return c_minus_; }
    double c_plus() const { return c_plus_; }

    // sup of |phi''| over the invariant interval (fine grid scan).
    double sup_abs_d2phi() const { return sup_abs_d2phi_; }

    // [min, max] of phi''' over [lo, hi] by a fine grid scan.
    std::pair<double, double> d3phi_range(double lo, double hi) const;

    // Inverse of phi on [u_minus, u_plus] by 50 bisection steps.
    double phi_inverse(double v) const;

    // Divided difference (phi(b) - phi(a)) / (b - a), falling back to
    // phi'((a+b)/2) when |b - a| is below 1e-9 * (u_plus - u_minus).
    double divided_difference(double a, double b) const;

private:
    std::string name_;
    ScalarFn phi_, dphi_, d2phi_, d3phi_, f_, df_;
    double K_;
    double u_minus_, u_plus_;
    double c_minus_, c_plus_;
    double sup_abs_d2phi_;
};

// phi(u) = u + 0.1 u^3, f(u) = u - u^3 on the invariant interval [-1.2, 1.2]
// (f points strictly inward at both endpoints there).
Nonlinearity make_allen_cahn(double K);

// phi(u) = u, f = 0: the plain heat equation (reaction strength ignored).
Nonlinearity make_linear_heat();

// Look up a preset by name ("allen-cahn" or "heat").
Nonlinearity make_nonlinearity(const std::string& preset, double K);

}  // namespace latpde
