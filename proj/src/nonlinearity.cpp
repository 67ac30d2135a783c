#include "latpde/nonlinearity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace latpde {

namespace {

constexpr int kScanPoints = 4097;

}  // namespace

Nonlinearity::Nonlinearity(std::string name, ScalarFn phi, ScalarFn dphi, ScalarFn d2phi,
                           ScalarFn d3phi, ScalarFn f, ScalarFn df, double K,
                           double u_minus, double u_plus)
    : name_(std::move(name)),
      phi_(std::move(phi)),
      dphi_(std::move(dphi)),
      d2phi_(std::move(d2phi)),
      d3phi_(std::move(d3phi)),
      f_(std::move(f)),
      df_(std::move(df)),
      K_(K),
      u_minus_(u_minus),
      u_plus_(u_plus) {
    if (!(u_minus_ < u_plus_)) throw std::invalid_argument("empty state interval");
    double lo = 1e300, hi = -1e300, s2 = 0.0;
    for (int i = 0; i < kScanPoints; ++i) {
        double u = u_minus_ + (u_plus_ - u_minus_) * i / (kScanPoints - 1);
        double d = dphi_(u);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
        s2 = std::max(s2, std::abs(d2phi_(u)));
    }
    c_minus_ = lo;
    c_plus_ = hi;
    sup_abs_d2phi_ = s2;
    if (!(c_minus_ > 0.0))
        throw std::invalid_argument("flux function is not strictly increasing on the state interval");
    if (f_(u_minus_) < 0.0 || f_(u_plus_) > 0.0)
        throw std::invalid_argument("reaction term does not keep the state interval invariant");
}

std::pair<double, double> Nonlinearity::d3phi_range(double lo, double hi) const {
    if (hi < lo) std::swap(lo, hi);
    double mn = 1e300, mx = -1e300;
    for (int i = 0; i < kScanPoints; ++i) {
        double u = lo + (hi - lo) * i / (kScanPoints - 1);
        double d = d3phi_(u);
        mn = std::min(mn, d);
        mx = std::max(mx, d);
        if (hi == lo) break;
    }
    return {mn, mx};
}

double Nonlinearity::phi_inverse(double v) const {
    double a = u_minus_, b = u_plus_;
    if (v <= phi_(a)) return a;
    if (v >= phi_(b)) return b;
    for (int i = 0; i < 50; ++i) {
        double m = 0.5 * (a + b);
        if (phi_(m) < v)
            a = m;
        else
            b = m;
    }
    return 0.5 * (a + b);
}

double Nonlinearity::divided_difference(double a, double b) const {
    if (std::abs(b - a) > 1e-9 * (u_plus_ - u_minus_)) return (phi_(b) - phi_(a)) / (b - a);
    return dphi_(0.5 * (a + b));
}

Nonlinearity make_allen_cahn(double K) {
    return Nonlinearity(
        "allen-cahn",
        [](double u) { return u + 0.1 * u * u * u; },
        [](double u) { return 1.0 + 0.3 * u * u; },
        [](double u) { return 0.6 * u; },
        [](double) { return 0.6; },
        [](double u) { return u - u * u * u; },
        [](double u) { return 1.0 - 3.0 * u * u; },
        K, -1.2, 1.2);
}

Nonlinearity make_linear_heat() {
    return Nonlinearity(
        "heat",
        [](double u) { return u; },
        [](double) { return 1.0; },
        [](double) { return 0.0; },
        [](double) { return 0.0; },
        [](double) { return 0.0; },
        [](double) { return 0.0; },
        0.0, -1.0, 1.0);
}

Nonlinearity make_nonlinearity(const std::string& preset, double K) {
    if (preset == "allen-cahn") return make_allen_cahn(K);
    if (preset == "heat") return make_linear_heat();
    throw std::invalid_argument("unknown nonlinearity preset: " + preset);
}

}  // namespace latpde
