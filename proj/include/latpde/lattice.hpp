#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

// Discrete periodic lattice (torus) of mesh size N in n dimensions, scalar
// fields living on it, and the first/second-order difference operators and
// bilinear forms built from them.  All operators use the scaling convention
// grad_e u(x) = N * (u(x+e) - u(x)), so that the weighted second-difference
// operators approximate continuum elliptic operators on the unit torus.

namespace latpde {

// A signed unit lattice direction: one of the 2n vectors +/- e_axis.
struct Direction {
    int axis = 0;   // in [0, n)
    int sign = +1;  // +1 or -1

    Direction negated() const { return Direction{axis, -sign}; }
    bool positive() const { return sign > 0; }
    bool operator==(const Direction& o) const { return axis == o.axis && sign == o.sign; }
};

// Stable index of a direction in [0, 2n): positive directions first per axis.
inline int direction_index(const Direction& d) { return 2 * d.axis + (d.sign < 0 ? 1 : 0); }

std::vector<Direction> all_directions(int n);
std::vector<Direction> positive_directions(int n);

// The discrete torus {0,...,N-1}^n with periodic wrap; sites are linearized
// row-major (last axis fastest).  Neighbor lookups go through a precomputed
// modular table because stencil operations dominate runtime.
class TorusLattice {
public:
    TorusLattice(int n, int N);

    int dim() const { return n_; }
    int mesh() const { return N_; }
    std::size_t num_sites() const { return sites_; }

    std::size_t neighbor(std::size_t site, const Direction& d) const {
        return nbr_[site * 2 * n_ + direction_index(d)];
    }
    // Neighbor shifted by an arbitrary integer vector (wraps componentwise).
    std::size_t shifted(std::size_t site, const std::vector<int>& shift) const;

    std::size_t index_of(const std::vector<int>& coords) const;
    std::vector<int> coords_of(std::size_t site) const;
    // Scaled position x/N in [0,1)^n.
    std::vector<double> position_of(std::size_t site) const;

    bool same_as(const TorusLattice& o) const { return n_ == o.n_ && N_ == o.N_; }

private:
    int n_, N_;
    std::size_t sites_;
    std::vector<std::uint32_t> nbr_;  // num_sites * 2n
};

using LatticePtr = std::shared_ptr<const TorusLattice>;

LatticePtr make_lattice(int n, int N);

// A real scalar field on the lattice, stored densely in site order.
class LatticeField {
public:
    LatticeField() = default;
    explicit LatticeField(LatticePtr lat, double fill = 0.0);
    LatticeField(LatticePtr lat, std::vector<double> values);

    const TorusLattice& lattice() const { return *lat_; }
    const LatticePtr& lattice_ptr() const { return lat_; }
    std::size_t size() const { return v_.size(); }

    double operator[](std::size_t i) const { return v_[i]; }
    double& operator[](std::size_t i) { return v_[i]; }
    const std::vector<double>& values() const { return v_; }
    std::vector<double>& values() { return v_; }

    double min() const;
    double max() const;
    double max_abs() const;

private:
    LatticePtr lat_;
    std::vector<double> v_;
};

// Per-site, per-direction edge weights a_{x,e} with the edge-consistency
// requirement a_{x,e} = a_{x+e,-e} (both endpoints of an edge see the same
// weight) and declared bounds 0 < c_minus <= a <= c_plus.
class EdgeCoefficients {
public:
    EdgeCoefficients() = default;
    EdgeCoefficients(LatticePtr lat, double fill, double c_minus, double c_plus);

    const TorusLattice& lattice() const { return *lat_; }
    const LatticePtr& lattice_ptr() const { return lat_; }

    double at(std::size_t site, const Direction& d) const {
        return v_[site * 2 * lat_->dim() + direction_index(d)];
    }
    double& at(std::size_t site, const Direction& d) {
        return v_[site * 2 * lat_->dim() + direction_index(d)];
    }

    const std::vector<double>& raw() const { return v_; }
    std::vector<double>& raw() { return v_; }

    double c_minus() const { return c_minus_; }
    double c_plus() const { return c_plus_; }
    void set_bounds(double c_minus, double c_plus) { c_minus_ = c_minus; c_plus_ = c_plus; }

    // Largest |a_{x,e} - a_{x+e,-e}|; zero for a valid edge weighting.
    double symmetry_defect() const;
    // Throws std::invalid_argument if symmetry or the declared bounds fail.
    void validate(double tol = 0.0) const;

private:
    LatticePtr lat_;
    std::vector<double> v_;
    double c_minus_ = 0.0, c_plus_ = 0.0;
};

// Direction-dependent but site-independent weights a_e with a_e = a_{-e}.
class ConstantCoefficients {
public:
    ConstantCoefficients() = default;
    ConstantCoefficients(int n, double fill);
    ConstantCoefficients(int n, std::vector<double> per_direction);

    int dim() const { return n_; }
    double at(const Direction& d) const { return v_[direction_index(d)]; }
    double& at(const Direction& d) { return v_[direction_index(d)]; }

    const std::vector<double>& raw() const { return v_; }
    std::vector<double>& raw() { return v_; }

    // Throws if a_e != a_{-e} for some axis.
    void validate() const;

private:
    int n_ = 0;
    std::vector<double> v_;
};

// ---- Difference operators -------------------------------------------------

// Forward difference quotient: N * (u(x+e) - u(x)).
LatticeField grad_forward(const LatticeField& u, const Direction& e);
// Its adjoint under the normalized inner product: N * (u(x-e) - u(x)).
// Coincides with grad_forward(u, -e).
LatticeField grad_dual(const LatticeField& u, const Direction& e);

// Unweighted lattice Laplacian N^2 * sum_{|e|=1} (u(x+e) - u(x)).
LatticeField laplacian(const LatticeField& u);

// Edge-weighted divergence-form operator N^2 * sum_{|e|=1} a_{x,e} (u(x+e)-u(x)).
// Validates the edge-consistency invariant of a.
LatticeField divergence_operator(const EdgeCoefficients& a, const LatticeField& u);

// Constant-coefficient weighted Laplacian: - sum_{e>0} a_e grad_dual_e grad_e u.
LatticeField constant_laplacian(const ConstantCoefficients& a, const LatticeField& u);

// Second-order non-divergence operator sum_{|e|=1} a_{x,e} grad_dual_e grad_e u,
// taken verbatim with the dual-then-forward composition, which is a
// negative-semidefinite second difference: with a == 1/2 this is -laplacian(u).
// No edge-consistency is required, only a >= 0.
LatticeField nondivergence_operator(const EdgeCoefficients& a, const LatticeField& u);
// The conventional positive-second-difference counterpart (the negation).
LatticeField nondivergence_operator_conventional(const EdgeCoefficients& a, const LatticeField& u);

// Normalized inner product N^{-n} sum_x u(x) v(x).
double inner_product(const LatticeField& u, const LatticeField& v);

// Energy form (1/(2 N^n)) sum_x sum_{|e|=1} a_{x,e} grad_e u(x) grad_e v(x);
// equals -<divergence_operator(a,u), v>.
double dirichlet_form(const EdgeCoefficients& a, const LatticeField& u, const LatticeField& v);

// ---- Summation by parts over a sub-domain ---------------------------------

// A subset of sites given by a membership mask (size num_sites).
using SiteMask = std::vector<char>;

// Sites outside Lambda adjacent to it across one lattice edge.
SiteMask outer_boundary(const TorusLattice& lat, const SiteMask& lambda);

enum class SbpMode { Plain, Weighted, Quadratic };

// Residual |LHS - RHS| of the discrete Green identity on Lambda:
//   Plain:     sum_{x in L} F grad_dual_e G  =  sum_{x or x+e in L} grad_e F * G
//   Weighted:  same with G replaced by abar_x G (abar: per-site weight)
//   Quadratic: sum_{x in L} F sum_{e>0} grad_dual_e(a_{x,e} grad_e G)
//                =  sum_{x or x+e in L, e>0} a_{x,e} grad_e F grad_e G
// Requires F = 0 on the outer boundary of Lambda; throws otherwise.
double sbp_residual(const LatticeField& F, const LatticeField& G, const SiteMask& lambda,
                    const Direction& e, SbpMode mode,
                    const LatticeField* abar = nullptr,
                    const EdgeCoefficients* a = nullptr);

// ---- Torus geometry -------------------------------------------------------

// Euclidean distance on the unit torus: per-axis displacement reduced to
// [-1/2, 1/2], then the l2 norm.
double torus_distance(const std::vector<double>& z1, const std::vector<double>& z2);
// Max-norm variant.
double torus_distance_linf(const std::vector<double>& z1, const std::vector<double>& z2);

// ---- CSV I/O --------------------------------------------------------------

// Header x0,...,x{n-1},value; one row per site in site order.
void dump_field_csv(const LatticeField& u, const std::string& path);
LatticeField load_field_csv(LatticePtr lat, const std::string& path);

}  // namespace latpde
