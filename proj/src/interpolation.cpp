#include "latpde/interpolation.hpp"

#include <cmath>
#include <stdexcept>

namespace latpde {

namespace {

// Split each coordinate of z into the cell base index and fractional weight.
void cell_of(const TorusLattice& L, const std::vector<double>& z,
             std::vector<int>& base, std::vector<double>& frac) {
    const int N = L.mesh();
    for (int ax = 0; ax < L.dim(); ++ax) {
        double s = z[ax] * N;
        double fl = std::floor(s);
        double fr = s - fl;
        long b = static_cast<long>(fl) % N;
        if (b < 0) b += N;
        base[ax] = static_cast<int>(b);
        frac[ax] = fr;
    }
}

}  // namespace

InterpolatedField::InterpolatedField(LatticeField base) : base_(std::move(base)) {}

InterpolatedField interpolate(const LatticeField& u) { return InterpolatedField(u); }

double InterpolatedField::operator()(const std::vector<double>& z) const {
    const TorusLattice& L = base_.lattice();
    const int n = L.dim();
    std::vector<int> base(n);
    std::vector<double> frac(n);
    cell_of(L, z, base, frac);

    double acc = 0.0;
    std::vector<int> corner(n);
    for (unsigned v = 0; v < (1u << n); ++v) {
        double w = 1.0;
        for (int ax = 0; ax < n; ++ax) {
            bool hi = (v >> ax) & 1u;
            w *= hi ? frac[ax] : (1.0 - frac[ax]);
            corner[ax] = base[ax] + (hi ? 1 : 0);
            if (corner[ax] == L.mesh()) corner[ax] = 0;
        }
        if (w != 0.0) acc += w * base_[L.index_of(corner)];
    }
    return acc;
}

double InterpolatedField::partial(int axis, const std::vector<double>& z) const {
    const TorusLattice& L = base_.lattice();
    const int n = L.dim();
    std::vector<int> base(n);
    std::vector<double> frac(n);
    cell_of(L, z, base, frac);

    // Average of the forward difference quotients along the cell edges
    // parallel to `axis`, weighted by the remaining axes' interpolation
    // weights.
    const double N = static_cast<double>(L.mesh());
    double acc = 0.0;
    std::vector<int> corner(n);
    for (unsigned v = 0; v < (1u << n); ++v) {
        if ((v >> axis) & 1u) continue;  // edge base has the axis coordinate low
        double w = 1.0;
        for (int ax = 0; ax < n; ++ax) {
            if (ax == axis) continue;
            bool hi = (v >> ax) & 1u;
            w *= hi ? frac[ax] : (1.0 - frac[ax]);
        }
        if (w == 0.0) continue;
        for (int ax = 0; ax < n; ++ax) {
            corner[ax] = base[ax] + (((v >> ax) & 1u) ? 1 : 0);
            if (corner[ax] == L.mesh()) corner[ax] = 0;
        }
        std::size_t lo = L.index_of(corner);
        std::size_t hi = L.neighbor(lo, Direction{axis, +1});
        acc += w * N * (base_[hi] - base_[lo]);
    }
    return acc;
}

double InterpolatedField::grad_scaled(const Direction& e, const std::vector<double>& z) const {
    const TorusLattice& L = base_.lattice();
    std::vector<double> zs = z;
    zs[e.axis] += static_cast<double>(e.sign) / L.mesh();
    return L.mesh() * ((*this)(zs) - (*this)(z));
}

double interp_partial(const LatticeField& u, int axis, const std::vector<double>& z) {
    return InterpolatedField(u).partial(axis, z);
}

double grad_commute_residual(const LatticeField& u, const Direction& e,
                             const std::vector<std::vector<double>>& sample_points) {
    InterpolatedField ut(u);
    InterpolatedField gt(grad_forward(u, e));
    double worst = 0.0;
    for (const auto& z : sample_points)
        worst = std::max(worst, std::abs(gt(z) - ut.grad_scaled(e, z)));
    return worst;
}

std::vector<std::vector<double>> stratified_points(const TorusLattice& lat, int m) {
    const int n = lat.dim();
    const int N = lat.mesh();
    std::vector<std::vector<double>> pts;
    std::vector<double> z(n);
    // all lattice points
    for (std::size_t s = 0; s < lat.num_sites(); ++s) pts.push_back(lat.position_of(s));
    // m offsets per axis inside every cell
    std::vector<int> off(n, 0);
    auto advance = [&](std::vector<int>& idx, int bound) {
        for (int ax = n - 1; ax >= 0; --ax) {
            if (++idx[ax] < bound) return true;
            idx[ax] = 0;
        }
        return false;
    };
    for (std::size_t s = 0; s < lat.num_sites(); ++s) {
        std::vector<double> zc = lat.position_of(s);
        std::fill(off.begin(), off.end(), 0);
        do {
            for (int ax = 0; ax < n; ++ax)
                z[ax] = zc[ax] + (off[ax] + 0.5) / (static_cast<double>(m) * N);
            pts.push_back(z);
        } while (advance(off, m));
    }
    return pts;
}

}  // namespace latpde
