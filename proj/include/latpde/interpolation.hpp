#pragma once

#include <vector>

#include "latpde/lattice.hpp"

// Polylinear (tensor-product linear) extension of a lattice field to the
// continuum torus.  The value at z is the convex combination of the 2^n
// corner values of the cell containing z, with weights built from the
// fractional parts {N z_i}; faces belong to the lower cell.

namespace latpde {

class InterpolatedField {
public:
    explicit InterpolatedField(LatticeField base);

    const LatticeField& base() const { return base_; }

    // Value at a continuum point z (coordinates taken mod 1).
    double operator()(const std::vector<double>& z) const;

    // Partial derivative along axis i at z.  Inside a cell this is an average
    // of the forward difference quotients on the cell edges parallel to axis
    // i; on a face orthogonal to axis i the value from the upper cell is used
    // (one-sided limit from the cell interior that owns the face).
    double partial(int axis, const std::vector<double>& z) const;

    // Forward difference quotient of the interpolated field itself:
    // N * (utilde(z + e/N) - utilde(z)).
    double grad_scaled(const Direction& e, const std::vector<double>& z) const;

private:
    LatticeField base_;
};

InterpolatedField interpolate(const LatticeField& u);

double interp_partial(const LatticeField& u, int axis, const std::vector<double>& z);

// Max over the sample points of |interp(grad_forward(u,e)) - grad_scaled of
// interp(u)|: the interpolation commutes with the scaled forward difference,
// so this should vanish to rounding.
double grad_commute_residual(const LatticeField& u, const Direction& e,
                             const std::vector<std::vector<double>>& sample_points);

// Deterministic sample grid for continuum suprema: all lattice points plus a
// stratified grid of m points per axis per cell (cell-relative offsets
// (j+1/2)/m), in site order.
std::vector<std::vector<double>> stratified_points(const TorusLattice& lat, int m);

}  // namespace latpde
