#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "latpde/lattice.hpp"
#include "latpde/solvers.hpp"

// Weighted parabolic Hölder machinery on space-time trajectories: sup-type
// seminorms with the weight d(X) = sqrt(t), mean-square gradient oscillation
// over shrinking cylinders, the interpolation inequality between the
// weighted gradient sup and the Hölder bracket, the geometric iteration
// bound, and envelope regression for empirical Hölder exponents.
//
// Conventions.  For X = (t, z), d(X) = sqrt(t) and the parabolic distance is
// |X - Y| = max{ |t-s|^{1/2}, |z - y| } with the Euclidean torus distance.
// First-order seminorms compare the scaled forward differences and take the
// max over positive directions.  Continuum suprema are approximated on
// deterministic sample sets: exact values are only claimed over the sampled
// points/pairs.

namespace latpde {

enum class Flavor { Bracket, Angle, Sup };

struct SeminormSpec {
    double a = 1.0;          // order; for Bracket, a = k + alpha with alpha in (0,1]
    double b = 0.0;          // weight exponent (ignored when unweighted)
    bool unweighted = false; // drop the (d ^ d)^{a+b} weight entirely
    Flavor flavor = Flavor::Bracket;
    bool interpolated = false;  // evaluate on the polylinear extension
    int k = 0;               // gradient order, 0 or 1
};

// A sampled space-time point: trajectory node index plus a spatial location.
// For discrete evaluation `site` is used; for interpolated evaluation `z`.
struct SamplePoint {
    std::size_t ti = 0;
    std::size_t site = 0;
    std::vector<double> z;
};

struct PairSet {
    std::vector<SamplePoint> points;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
};

// Deterministic sample of space-time pairs, capped at max_pairs, drawn with
// the given seed from all trajectory nodes with t >= t_floor.  Interpolated
// sets add strat_m stratified continuum offsets per axis per cell to the
// lattice-point candidates.
PairSet make_space_time_pairs(const Trajectory& traj, bool interpolated, std::size_t max_pairs,
                              std::uint64_t seed, double t_floor = 0.0, int strat_m = 2);

// Pairs sharing the spatial coordinate (distinct times), for the time-Hölder
// seminorms.
PairSet make_same_site_pairs(const Trajectory& traj, std::size_t max_pairs, std::uint64_t seed,
                             double t_floor = 0.0);

// Discrete C^k norm: sum over i <= k and over all ordered tuples of the 2n
// signed directions of max_x |grad_{e_1} ... grad_{e_i} u(x)|.
double ck_norm(const LatticeField& u, int k);

// Space-time Hölder seminorm over the pair set:
//   sup (d ^ d)^{a+b} |G(X) - G(Y)| / |X - Y|^{a-k},
// G the field or its direction-maximized first difference (k = 1).
double holder_seminorm(const Trajectory& traj, const SeminormSpec& spec, const PairSet& pairs);

// Same-site time seminorm: exponent a/2 on |t - s|^{1/2} squared, i.e.
// sup (d ^ d)^{a+b} |G(X) - G(Y)| / |t - s|^{a/2}.
double time_seminorm(const Trajectory& traj, const SeminormSpec& spec, const PairSet& pairs);

// Weighted sup  sup_X d(X)^b |G(X)|  over the points of the set.
double weighted_sup(const Trajectory& traj, double b, const PairSet& set, int k = 0,
                    bool interpolated = false);

// Max - min of the (optionally interpolated) field over the cylinder's
// sample set: lattice sites of the ball at every trajectory node inside the
// time window, plus stratified continuum points when interpolating.
double oscillation(const Trajectory& traj, const ParabolicCylinder& Q, bool use_interpolation);

struct CampanatoProfile {
    double t1 = 0.0;
    std::vector<double> center;
    std::vector<double> radii;
    std::vector<double> omega;  // mean-square oscillation integral per radius
};

// omega(r) = integral over Q((t1,y), r) of |grad ũ - mean|^2 dX, with the
// gradient vector collecting the scaled forward differences over positive
// directions, midpoint tensor quadrature in space (resolution points_per_cell
// * N per axis) and trapezoid over trajectory nodes in time.
CampanatoProfile campanato_profile(const Trajectory& traj, double t1,
                                   const std::vector<double>& y,
                                   const std::vector<double>& radii, int points_per_cell = 4);

struct InterpolationInequalityReport {
    double U1 = 0.0, osc = 0.0, bracket_star = 0.0, rhs1 = 0.0;
    double U2 = 0.0, sup_w1 = 0.0, bracket_w1 = 0.0, rhs2 = 0.0;
    bool passed1 = false, passed2 = false;
};

// Checks U1 <= 3 osc^{alpha/(1+alpha)} (osc + bracket)^{1/(1+alpha)} and the
// weighted variant with constant 5, all seminorms evaluated on the same
// deterministic sample set.
InterpolationInequalityReport interpolation_inequality_check(const Trajectory& traj, double alpha,
                                                             std::size_t max_pairs = 200000,
                                                             std::uint64_t seed = 1);

struct IterationBoundReport {
    double C = 0.0;
    bool hypotheses_ok = false;
    bool conclusion_ok = false;
    double worst_margin = 0.0;  // most negative slack of the conclusion
    std::string failure;
};

// Geometric iteration bound: omega and sigma increasing on (0, R0],
// sigma(r)/r^delta nonincreasing, and omega(tau r) <= tau^abar omega(r) +
// sigma(r) imply omega(r) <= C [ (r/R0)^abar omega(R0) + sigma(r) ] with
// C = max{ tau^abar, tau^{-delta} (tau^delta - tau^abar)^{-1} }.
// omega_samples must be (r, omega(r)) pairs on a grid containing tau*r for
// every sampled r below R0 (geometric grids do).
IterationBoundReport iteration_bound(const std::vector<std::pair<double, double>>& omega_samples,
                                     const std::function<double(double)>& sigma, double abar,
                                     double delta, double tau, double R0);

struct EnvelopeFit {
    bool valid = false;
    double exponent = 0.0;
    double constant = 0.0;
    double r2 = 0.0;
    int bins_used = 0;
};

// Binned-maximum (upper envelope) log-log regression: the samples (x, y) are
// split into `bins` logarithmic bins in x, the max y per bin is kept, and
// log(max y) is regressed on log(x).
EnvelopeFit fit_envelope(const std::vector<double>& xs, const std::vector<double>& ys,
                         int bins = 24);

enum class FitMode { Space, Time, NashCombined };

// Fits |F(X)-F(Y)| ~ C * modulus^sigma with the modulus
// (|t-s|^{1/2} v |x-y|) / (t ^ s)^{1/2} over trajectory pairs with t >= t_floor.
EnvelopeFit fit_holder_exponent(const Trajectory& traj, double t_floor, FitMode mode,
                                std::size_t max_pairs = 200000, std::uint64_t seed = 1);

}  // namespace latpde
