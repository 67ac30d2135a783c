#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "latpde/lattice.hpp"
#include "latpde/nonlinearity.hpp"

// Explicit RK4 time integration for the lattice evolution problems:
//   - quasilinear:      d/dt u = Delta^N phi(u) + K f(u)
//   - linear divergence: d/dt u = L_{a(t)} u + g(t)
//   - non-divergence:    d/dt psi = phi'(u) { Delta^N psi + K f(u) },  psi = phi(u)
//   - gradient system:   d/dt xi_e = grad_e( -abar * sum_{e'>0} grad_dual_{e'} xi_{e'} + g )
//   - constant-coefficient heat equation on a parabolic cylinder with pinned
//     boundary values
// plus the dense propagator / Duhamel machinery and the comparison and
// maximum principles.  The step size is 0.5 / (4 n c_plus N^2) everywhere,
// with the last step of each sampling interval shortened to land exactly on
// the requested node.

namespace latpde {

struct Trajectory {
    LatticePtr lattice;
    std::vector<double> times;
    std::vector<LatticeField> fields;  // one per time node
    double dt_internal = 0.0;

    std::size_t num_times() const { return times.size(); }
    const LatticeField& at(std::size_t i) const { return fields.at(i); }

    // Field at time t by linear interpolation between the two bracketing
    // nodes; throws if t is outside the recorded window.
    LatticeField sample(double t) const;

    // Index of the recorded node closest to t; throws if farther than tol.
    std::size_t node_near(double t, double tol = 1e-9) const;
};

// Uniform grid 0, T/M, ..., T.
std::vector<double> uniform_times(double T, int M);

using CoefficientSchedule = std::function<EdgeCoefficients(double)>;
using SourceSchedule = std::function<LatticeField(double)>;

// Schedule that linearly interpolates tabulated coefficient fields entrywise
// (constant extrapolation outside the tabulated window).
CoefficientSchedule tabulate_coefficients(std::vector<double> times,
                                          std::vector<EdgeCoefficients> values);
SourceSchedule tabulate_sources(std::vector<double> times, std::vector<LatticeField> values);

struct LinearProblem {
    LatticePtr lattice;
    CoefficientSchedule a;
    SourceSchedule g;  // empty function means no source
    LatticeField u0;
    double c_plus = 1.0;  // upper ellipticity bound of the schedule; sets the step size
};

// Space-time cylinder Q(Y, r) with center Y = (t1, y): time window
// (t1 - r^2, t1] times the Euclidean torus ball D(y, r).  The discrete
// interior D_N collects the lattice sites inside the ball; the outer spatial
// boundary is every site outside D_N within one lattice step of it.
class ParabolicCylinder {
public:
    ParabolicCylinder(LatticePtr lattice, double t1, std::vector<double> y, double r);

    const TorusLattice& lattice() const { return *lattice_; }
    LatticePtr lattice_ptr() const { return lattice_; }
    double t1() const { return t1_; }
    double t0() const { return t1_ - r_ * r_; }
    double radius() const { return r_; }
    const std::vector<double>& center() const { return y_; }

    bool contains_site(std::size_t site) const { return interior_mask_[site] != 0; }
    const std::vector<std::size_t>& interior_sites() const { return interior_; }
    const std::vector<std::size_t>& boundary_sites() const { return boundary_; }
    const SiteMask& interior_mask() const { return interior_mask_; }

    // Continuum membership of a space-time point (t, z).
    bool contains(double t, const std::vector<double>& z) const;

private:
    LatticePtr lattice_;
    double t1_;
    std::vector<double> y_;
    double r_;
    SiteMask interior_mask_;
    std::vector<std::size_t> interior_;
    std::vector<std::size_t> boundary_;
};

// Edge diffusivities from the state: the divided difference of phi between
// the endpoint values of each edge (midpoint phi' on nearly flat edges).
// Throws on values outside the invariant interval.
EdgeCoefficients coefficients_from_state(const LatticeField& u, const Nonlinearity& nl);

Trajectory solve_quasilinear(const Nonlinearity& nl, const LatticeField& u0, double T,
                             const std::vector<double>& samples);

Trajectory solve_linear_divergence(const LinearProblem& p, double T,
                                   const std::vector<double>& samples);

// Integrates the equation for psi = phi(u) directly; u is recovered from psi
// by bisection where needed.
Trajectory solve_nondivergence_psi(const Nonlinearity& nl, const LatticeField& u0, double T,
                                   const std::vector<double>& samples);

struct GradientSystemResult {
    Trajectory u;                 // co-evolved state
    std::vector<Trajectory> xi;   // one per positive direction, xi_e = grad_e phi(u)
    double max_curl_residual;     // worst |grad_{e'} xi_e - grad_e xi_{e'}| over samples
};

GradientSystemResult solve_gradient_system(const Nonlinearity& nl, const LatticeField& u0,
                                           double T, const std::vector<double>& samples);

// Constant-coefficient heat equation on the cylinder, pinned to the supplied
// trajectory on the outer spatial boundary at every integrator stage and
// started from its slice at t0.  The returned trajectory lives on the full
// lattice with non-interior sites copied from the boundary data, so that the
// difference u - v vanishes off the interior; nodes are the boundary
// trajectory's nodes inside [t0, t1].
Trajectory solve_heat_on_cylinder(const ParabolicCylinder& Q, const ConstantCoefficients& a,
                                  const Trajectory& boundary);

struct DenseMatrix {
    std::size_t size = 0;
    std::vector<double> data;  // row-major

    DenseMatrix() = default;
    explicit DenseMatrix(std::size_t n) : size(n), data(n * n, 0.0) {}
    double& at(std::size_t i, std::size_t j) { return data[i * size + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * size + j]; }
    static DenseMatrix identity(std::size_t n);
    DenseMatrix multiply(const DenseMatrix& rhs) const;
    std::vector<double> apply(const std::vector<double>& v) const;
    double max_abs_diff(const DenseMatrix& rhs) const;
};

// Dense evolution matrix P_{s,t}: column y holds the time-t solution started
// from the delta at site y at time s.  Guarded to N^n <= 4096 sites.
DenseMatrix propagator(const LinearProblem& p, double s, double t);

// u(t) = P_{0,t} u0 + integral_0^t P_{s,t} g(s) ds with composite trapezoid
// quadrature on the integrator's own grid, computed from per-step dense
// propagator factors (never from the direct solver).
Trajectory duhamel_reconstruct(const LinearProblem& p, double T,
                               const std::vector<double>& samples);

// Checks that [lo, hi] is an invariant envelope for the reaction term and
// brackets the range of u0 strictly: f(lo) > 0, f(hi) < 0.  Throws when the
// hypotheses fail.  The Nonlinearity's declared interval is the candidate.
std::pair<double, double> comparison_envelope(const Nonlinearity& nl, const LatticeField& u0);

struct MaxPrincipleReport {
    bool passed = true;
    double max_excess = 0.0;  // how far sup over time exceeds sup at t=0
    double min_excess = 0.0;  // analogue for the infimum
    std::size_t worst_time_index = 0;
    std::size_t worst_site = 0;
};

// Verifies sup_{t,x} u <= sup_x u(0) + slack and the min analogue.
MaxPrincipleReport check_maximum_principle(const Trajectory& traj, double slack = 1e-8);

}  // namespace latpde
