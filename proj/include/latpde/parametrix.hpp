#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "latpde/lattice.hpp"
#include "latpde/nonlinearity.hpp"
#include "latpde/solvers.hpp"

// Fundamental solutions (heat kernels) of linear lattice operators with
// variable coefficients, built by the classical frozen-coefficient series:
// start from the constant-coefficient kernel frozen at the source point,
// correct it through a Volterra integral iteration, and assemble the full
// kernel from the series.  Companion material: Gaussian envelope fits for the
// constant kernels and their discrete derivatives, the divergence-form ->
// second-order-form coefficient rewrite, forward/backward kernel duality, and
// the pointwise commutator / second-difference expansions of the
// state-dependent edge coefficients.
//
// All kernels use the convention p(s, y; s, x) = N^n * delta_{y}(x), so that
// u(t, x) = N^{-n} sum_y p(s, y; t, x) u(s, y) propagates solutions.

namespace latpde {

// Linear operator  L u = -1/2 sum_{|e|=1} a_e(x) D*_e D_e u
//                        + sum_{|e|=1} b_e(x) D_e u + c(x) u,
// with D_e the scaled forward difference and D*_e = D_{-e} its adjoint.  The
// coefficients are per-site; a must be symmetric under e -> -e at each site
// and confined to the declared ellipticity window, |b| and |c| are bounded by
// the declared d0.  alpha / holder_constant are descriptive regularity data
// carried along for reports; they are not checked.
class OperatorLt {
public:
    OperatorLt() = default;
    explicit OperatorLt(LatticePtr lat);

    const TorusLattice& lattice() const { return *lat_; }
    const LatticePtr& lattice_ptr() const { return lat_; }

    double a(std::size_t site, const Direction& d) const {
        return a_[site * 2 * lat_->dim() + direction_index(d)];
    }
    double& a(std::size_t site, const Direction& d) {
        return a_[site * 2 * lat_->dim() + direction_index(d)];
    }
    double b(std::size_t site, const Direction& d) const {
        return b_[site * 2 * lat_->dim() + direction_index(d)];
    }
    double& b(std::size_t site, const Direction& d) {
        return b_[site * 2 * lat_->dim() + direction_index(d)];
    }
    double c(std::size_t site) const { return c_[site]; }
    double& c(std::size_t site) { return c_[site]; }

    double c_minus() const { return c_minus_; }
    double c_plus() const { return c_plus_; }
    double d0() const { return d0_; }
    double alpha() const { return alpha_; }
    double holder_constant() const { return holder_constant_; }
    void set_bounds(double c_minus, double c_plus, double d0) {
        c_minus_ = c_minus;
        c_plus_ = c_plus;
        d0_ = d0;
    }
    void set_regularity(double alpha, double holder_constant) {
        alpha_ = alpha;
        holder_constant_ = holder_constant;
    }

    LatticeField apply(const LatticeField& u) const;
    // Adjoint under the normalized inner product:
    //   L* v = -1/2 sum D*_e D_e (a_e v) + sum D*_e (b_e v) + c v.
    LatticeField apply_adjoint(const LatticeField& v) const;

    // Throws std::invalid_argument if the per-site symmetry a_e = a_{-e}, the
    // ellipticity window, or the |b|,|c| <= d0 bound fails (tolerance tol).
    void validate(double tol = 0.0) const;

    // Second-order coefficients frozen at one site, as a symmetric
    // direction-indexed constant tuple.
    ConstantCoefficients frozen_at(std::size_t site) const;

    bool has_drift() const;  // any nonzero b
    bool has_zeroth() const; // any nonzero c

private:
    LatticePtr lat_;
    std::vector<double> a_, b_, c_;
    double c_minus_ = 0.0, c_plus_ = 0.0, d0_ = 0.0;
    double alpha_ = 1.0, holder_constant_ = 0.0;
};

// Rewrites the divergence-form operator with edge weights a into the
// second-order form above:
//   a_e(x) = (a_{x-e,e} + a_{x+e,-e}) / 2,   b_e(x) = -1/2 D_{-e} a_{x,e},
//   c = 0.
// Applying the result to any field reproduces divergence_operator(a, .)
// exactly.  Throws on edge-asymmetric input.
OperatorLt rewrite_divergence(const EdgeCoefficients& a);

// Spatially homogeneous constant-coefficient kernel pbar(tau, .): the delta
// at the origin scaled by N^n, evolved for time tau under the weighted
// constant-coefficient Laplacian by RK4.  tau = 0 returns the scaled delta.
LatticeField constant_kernel(LatticePtr lat, const ConstantCoefficients& a, double tau);
// Same evolution recorded at several times (taus need not be sorted).
std::vector<LatticeField> constant_kernel_table(LatticePtr lat, const ConstantCoefficients& a,
                                                const std::vector<double>& taus);

struct GaussianFitReport {
    int order = 0;          // 0: kernel, 1: first differences, 2: second
    double c_hat = 0.0;     // fitted prefactor (includes a 2% headroom)
    double k_hat = 0.0;     // fitted variance rate
    int violations = 0;     // bound failures on the validation grid
    std::size_t checked = 0;
    double worst_ratio = 0.0;  // max |D| tau^{order/2} / (c_hat g(k_hat tau, x))
};

// Fits the envelope |D^order pbar(tau, x)| <= c g(k tau, x) / tau^{order/2},
// g(t, x) = t^{-n/2} exp(-|x|^2 / t) with the Euclidean torus distance, by
// minimizing the required prefactor over a geometric grid of rates on the
// calibration times, then counts violations on the validation times.
GaussianFitReport kernel_gradient_bounds_check(LatticePtr lat, const ConstantCoefficients& a,
                                               int order,
                                               const std::vector<double>& calibration_taus,
                                               const std::vector<double>& validation_taus);

// Kernel values from one source time on a grid of target times, stored as
// dense site x site matrices: mats[i].at(x, y) = p(s, y; times[i], x).
struct KernelGrid {
    LatticePtr lattice;
    double s = 0.0;
    std::vector<double> times;
    std::vector<DenseMatrix> mats;

    // Worst |N^{-n} sum_y p(s,y;t,x) - 1| over target times and x (the
    // conserved quantity when c = 0).
    double conservation_defect() const;
    double min_value() const;
};

void dump_kernel_csv(const KernelGrid& kernel, const std::string& path);

// Correction-series tabulation on the uniform time grid s = r_0 < ... <
// r_m = t: phi[j].at(z, y) holds the series value with source (s, y) and
// target (r_j, z); level_sup[k-1] records the sup magnitude of term k.
struct LeviTabulation {
    LatticePtr lattice;
    double s = 0.0;
    std::vector<double> r_grid;
    std::vector<DenseMatrix> phi;
    std::vector<double> level_sup;
};

// Builds the correction series for the operator over [s, t]: the defect of
// the frozen kernel, (L - frozen Laplacian) Z, iterated through the Volterra
// integral with composite trapezoid in time; the final panel of each integral
// uses 8 geometrically shrinking sub-nodes toward the upper limit, where the
// integrand concentrates.  quad_nodes is the number of uniform panels m;
// fewer than 4 is refused (std::invalid_argument).
LeviTabulation levi_iterate(const OperatorLt& op, double s, double t, int k_max = 4,
                            int quad_nodes = 64);

// Kernel assembly: p = Z + integral of Z * series, with the same quadrature
// as the iteration.  The returned grid lives on the tabulation's time grid.
KernelGrid assemble_parametrix(const OperatorLt& op, const LeviTabulation& tab);

// Dense RK4 evolution matrix of d/dt u = L u over [s, t], in kernel
// normalization (columns start from N^n deltas).  Guarded to N^n <= 4096.
DenseMatrix dense_lt_propagator(const OperatorLt& op, double s, double t);

// Sup distance between the forward kernel of L and the backward-in-s kernel
// of the adjoint problem (terminal deltas evolved under L*), which agree for
// the exact fundamental solution.
double duality_residual(const OperatorLt& op, double s, double t);

struct CommutatorReport {
    double identity_residual = 0.0;  // sup over sites of |LHS - RHS|
    double worst_bound_margin = 0.0; // min slack of the gradient bound
    int bound_violations = 0;
};

// Pointwise identity for state-dependent edge weights a(u) built from phi:
//   D_e L_a u = L_a D_e u
//             + sum_{e'>0} D_{e'} { D_e abar_{x,e'} * (D_e u)(x + e - e') },
// abar_{x,e'} the divided difference of phi across the edge (x - e', x),
// together with the bound |D_e abar_{x,e'}| <=
// 1/2 sup|phi''| (|D_e u(x)| + |D_e u(x - e')|)  (margin tolerance tol).
CommutatorReport commutator_residual(const LatticeField& u, const Nonlinearity& nl,
                                     const Direction& e, double tol = 1e-10);

struct EnclosureReport {
    double lhs = 0.0;        // D_{e1} D_{e2} abar_{x,e'}
    double main_term = 0.0;  // explicit second-difference part
    double r_lo = 0.0, r_hi = 0.0;  // interval enclosure of the remainder
    bool contained = false;
    double margin = 0.0;  // distance of lhs - main_term inside [r_lo, r_hi]
};

// Second-difference expansion of the state-dependent edge weight
// abar_{x,e'}(u): the double difference D_{e1} D_{e2} abar equals an explicit
// combination of phi'' and second differences of u plus a remainder that is
// quadratic in first differences with phi''' evaluated at intermediate state
// values.  The intermediate values are unknowable pointwise, so the remainder
// is enclosed by ranging phi''' over the relevant state intervals; the report
// says whether the directly computed left-hand side falls inside the
// enclosure (widened by tol).
EnclosureReport second_expansion_residual(const LatticeField& u, const Nonlinearity& nl,
                                          std::size_t site, const Direction& e1,
                                          const Direction& e2, const Direction& e_prime,
                                          double tol = 1e-8);

}  // namespace latpde
