#include "latpde/parametrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

namespace latpde {

namespace {

double cfl_step(int n, double rate, int N) {
    return 0.5 / (4.0 * n * rate * static_cast<double>(N) * static_cast<double>(N));
}

void require_dense_feasible(const TorusLattice& lat) {
    if (lat.num_sites() > 4096)
        throw std::invalid_argument("dense kernel routines are limited to 4096 sites");
}

using FieldRhs = std::function<LatticeField(const LatticeField&)>;

void rk4_step(LatticeField& w, double h, const FieldRhs& rhs) {
    const std::size_t S = w.size();
    LatticeField k1 = rhs(w);
    LatticeField stage(w.lattice_ptr());
    for (std::size_t i = 0; i < S; ++i) stage[i] = w[i] + 0.5 * h * k1[i];
    LatticeField k2 = rhs(stage);
    for (std::size_t i = 0; i < S; ++i) stage[i] = w[i] + 0.5 * h * k2[i];
    LatticeField k3 = rhs(stage);
    for (std::size_t i = 0; i < S; ++i) stage[i] = w[i] + h * k3[i];
    LatticeField k4 = rhs(stage);
    for (std::size_t i = 0; i < S; ++i)
        w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

// Evolve w0 under the rhs, recording at the (sorted, nonnegative) time gaps;
// each inter-record interval is covered by equal substeps of size <= dt.
std::vector<LatticeField> evolve_gaps(const LatticeField& w0, const std::vector<double>& gaps,
                                      double dt, const FieldRhs& rhs) {
    std::vector<LatticeField> out;
    out.reserve(gaps.size());
    LatticeField w = w0;
    double t = 0.0;
    for (double g : gaps) {
        double span = g - t;
        if (span < -1e-15) throw std::logic_error("record gaps must be nondecreasing");
        if (span > 1e-15) {
            int steps = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-12)));
            double h = span / steps;
            for (int k = 0; k < steps; ++k) rk4_step(w, h, rhs);
            t = g;
        }
        out.push_back(w);
    }
    return out;
}

void add_scaled(DenseMatrix& acc, const DenseMatrix& m, double w) {
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += w * m.data[i];
}

DenseMatrix blend(const DenseMatrix& a, const DenseMatrix& b, double theta) {
    DenseMatrix out(a.size);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (1.0 - theta) * a.data[i] + theta * b.data[i];
    return out;
}

double sup_abs(const DenseMatrix& m) {
    double s = 0.0;
    for (double v : m.data) s = std::max(s, std::fabs(v));
    return s;
}

constexpr int kGradedNodes = 8;

// Frozen-coefficient kernels (and their operator defects) tabulated at the
// time gaps used by the Volterra quadrature: the uniform gaps j*h and the
// geometrically graded gaps h*2^{-q} of the final panel.
struct GapMats {
    std::vector<DenseMatrix> grid;    // grid[j]: gap j*h, j = 0..m
    std::vector<DenseMatrix> graded;  // graded[q]: gap h*2^{-q}, q = 1..kGradedNodes
};

// acc += integral over [r_0, r_j] of K(r_j - r) G(r) dr with composite
// trapezoid on the uniform grid and the graded sub-mesh on the final panel
// (G linearly interpolated there).
DenseMatrix volterra_integral(const GapMats& K, const std::vector<DenseMatrix>& G, std::size_t j,
                              double h) {
    DenseMatrix acc(K.grid[0].size);
    if (j >= 2) {
        for (std::size_t i = 0; i < j; ++i) {
            double w = (i == 0 || i == j - 1) ? 0.5 * h : h;
            add_scaled(acc, K.grid[j - i].multiply(G[i]), w);
        }
    }
    // Final panel [r_{j-1}, r_j]: sub-nodes at gap h*2^{-q} from r_j.
    DenseMatrix prev = K.grid[1].multiply(G[j - 1]);
    for (int q = 1; q <= kGradedNodes; ++q) {
        double theta = 1.0 - std::ldexp(1.0, -q);
        DenseMatrix val = K.graded[q - 1].multiply(blend(G[j - 1], G[j], theta));
        double len = h * std::ldexp(1.0, -q);
        add_scaled(acc, prev, 0.5 * len);
        add_scaled(acc, val, 0.5 * len);
        prev = std::move(val);
    }
    DenseMatrix last = K.grid[0].multiply(G[j]);
    double len = h * std::ldexp(1.0, -kGradedNodes);
    add_scaled(acc, prev, 0.5 * len);
    add_scaled(acc, last, 0.5 * len);
    return acc;
}

// Kernel matrices Z(gap).at(x, z) = pbar_{a(z)}(gap, x - z) for the
// second-order coefficients frozen at each source site z, plus the defect
// matrices M(gap) = (L - frozen Laplacian) Z columnwise.
void build_frozen_tables(const OperatorLt& op, double h, std::size_t m, GapMats& Z, GapMats& M) {
    const TorusLattice& lat = op.lattice();
    const std::size_t S = lat.num_sites();
    const int n = lat.dim(), N = lat.mesh();
    const double scale = std::pow(static_cast<double>(N), n);

    std::vector<double> gaps;   // sorted record gaps
    std::vector<int> grid_idx(m + 1), graded_idx(kGradedNodes);
    for (int q = kGradedNodes; q >= 1; --q) gaps.push_back(h * std::ldexp(1.0, -q));
    gaps.insert(gaps.begin(), 0.0);
    for (std::size_t j = 1; j <= m; ++j) gaps.push_back(j * h);
    grid_idx[0] = 0;
    for (int q = 1; q <= kGradedNodes; ++q) graded_idx[q - 1] = 1 + (kGradedNodes - q);
    for (std::size_t j = 1; j <= m; ++j) grid_idx[j] = kGradedNodes + static_cast<int>(j);

    Z.grid.assign(m + 1, DenseMatrix(S));
    Z.graded.assign(kGradedNodes, DenseMatrix(S));
    M.grid.assign(m + 1, DenseMatrix(S));
    M.graded.assign(kGradedNodes, DenseMatrix(S));

    const double dt = cfl_step(n, op.c_plus(), N);
    for (std::size_t z = 0; z < S; ++z) {
        ConstantCoefficients az = op.frozen_at(z);
        FieldRhs rhs = [&](const LatticeField& w) { return constant_laplacian(az, w); };
        LatticeField delta(op.lattice_ptr());
        delta[z] = scale;
        std::vector<LatticeField> cols = evolve_gaps(delta, gaps, dt, rhs);
        auto stash = [&](DenseMatrix& zm, DenseMatrix& mm, const LatticeField& w) {
            LatticeField defect = op.apply(w);
            LatticeField frozen = constant_laplacian(az, w);
            for (std::size_t x = 0; x < S; ++x) {
                zm.at(x, z) = w[x];
                mm.at(x, z) = defect[x] - frozen[x];
            }
        };
        for (std::size_t j = 0; j <= m; ++j) stash(Z.grid[j], M.grid[j], cols[grid_idx[j]]);
        for (int q = 1; q <= kGradedNodes; ++q)
            stash(Z.graded[q - 1], M.graded[q - 1], cols[graded_idx[q - 1]]);
    }
}

DenseMatrix dense_matrix_rk4(const OperatorLt& op, bool adjoint, double span,
                             const DenseMatrix& start) {
    const TorusLattice& lat = op.lattice();
    const std::size_t S = lat.num_sites();
    const double dt = cfl_step(lat.dim(), op.c_plus(), lat.mesh());
    int steps = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-12)));
    double h = span / steps;

    auto apply_cols = [&](const DenseMatrix& m) {
        DenseMatrix out(S);
        LatticeField col(op.lattice_ptr());
        for (std::size_t y = 0; y < S; ++y) {
            for (std::size_t x = 0; x < S; ++x) col[x] = m.at(x, y);
            LatticeField img = adjoint ? op.apply_adjoint(col) : op.apply(col);
            for (std::size_t x = 0; x < S; ++x) out.at(x, y) = img[x];
        }
        return out;
    };

    DenseMatrix U = start;
    for (int k = 0; k < steps; ++k) {
        DenseMatrix k1 = apply_cols(U);
        DenseMatrix s1 = U;
        add_scaled(s1, k1, 0.5 * h);
        DenseMatrix k2 = apply_cols(s1);
        DenseMatrix s2 = U;
        add_scaled(s2, k2, 0.5 * h);
        DenseMatrix k3 = apply_cols(s2);
        DenseMatrix s3 = U;
        add_scaled(s3, k3, h);
        DenseMatrix k4 = apply_cols(s3);
        add_scaled(U, k1, h / 6.0);
        add_scaled(U, k2, h / 3.0);
        add_scaled(U, k3, h / 3.0);
        add_scaled(U, k4, h / 6.0);
    }
    return U;
}

}  // namespace

// ---- OperatorLt -----------------------------------------------------------

OperatorLt::OperatorLt(LatticePtr lat)
    : lat_(std::move(lat)),
      a_(lat_->num_sites() * 2 * lat_->dim(), 0.0),
      b_(lat_->num_sites() * 2 * lat_->dim(), 0.0),
      c_(lat_->num_sites(), 0.0) {}

LatticeField OperatorLt::apply(const LatticeField& u) const {
    if (!u.lattice().same_as(*lat_)) throw std::invalid_argument("lattice mismatch");
    const std::size_t S = lat_->num_sites();
    const double N2 = static_cast<double>(lat_->mesh()) * lat_->mesh();
    const double N1 = lat_->mesh();
    LatticeField out(lat_);
    const auto dirs = all_directions(lat_->dim());
    for (std::size_t x = 0; x < S; ++x) {
        double acc = c_[x] * u[x];
        for (const Direction& e : dirs) {
            std::size_t xp = lat_->neighbor(x, e);
            std::size_t xm = lat_->neighbor(x, e.negated());
            acc += 0.5 * a(x, e) * N2 * (u[xp] - 2.0 * u[x] + u[xm]);
            acc += b(x, e) * N1 * (u[xp] - u[x]);
        }
        out[x] = acc;
    }
    return out;
}

LatticeField OperatorLt::apply_adjoint(const LatticeField& v) const {
    if (!v.lattice().same_as(*lat_)) throw std::invalid_argument("lattice mismatch");
    const std::size_t S = lat_->num_sites();
    const double N2 = static_cast<double>(lat_->mesh()) * lat_->mesh();
    const double N1 = lat_->mesh();
    LatticeField out(lat_);
    const auto dirs = all_directions(lat_->dim());
    for (std::size_t x = 0; x < S; ++x) {
        double acc = c_[x] * v[x];
        for (const Direction& e : dirs) {
            std::size_t xp = lat_->neighbor(x, e);
            std::size_t xm = lat_->neighbor(x, e.negated());
            // -1/2 D*_e D_e (a_e v) at x, with D*_e D_e w = -N^2 (w(x+e) - 2w + w(x-e)).
            acc += 0.5 * N2 *
                   (a(xp, e) * v[xp] - 2.0 * a(x, e) * v[x] + a(xm, e) * v[xm]);
            // D*_e (b_e v)(x) = N (b(x-e) v(x-e) - b(x) v(x)).
            acc += N1 * (b(xm, e) * v[xm] - b(x, e) * v[x]);
        }
        out[x] = acc;
    }
    return out;
}

void OperatorLt::validate(double tol) const {
    const std::size_t S = lat_->num_sites();
    const auto pos = positive_directions(lat_->dim());
    for (std::size_t x = 0; x < S; ++x) {
        for (const Direction& e : pos) {
            double ap = a(x, e), am = a(x, e.negated());
            if (std::fabs(ap - am) > tol)
                throw std::invalid_argument("second-order coefficients must satisfy a_e = a_{-e}");
            for (double v : {ap, am})
                if (v < c_minus_ - tol || v > c_plus_ + tol)
                    throw std::invalid_argument("second-order coefficient outside ellipticity window");
            for (const Direction& d : {e, e.negated()})
                if (std::fabs(b(x, d)) > d0_ + tol)
                    throw std::invalid_argument("first-order coefficient exceeds declared bound");
        }
        if (std::fabs(c_[x]) > d0_ + tol)
            throw std::invalid_argument("zeroth-order coefficient exceeds declared bound");
    }
}

ConstantCoefficients OperatorLt::frozen_at(std::size_t site) const {
    std::vector<double> per(2 * lat_->dim());
    for (const Direction& d : all_directions(lat_->dim()))
        per[direction_index(d)] = a(site, d);
    // Exact symmetrization guards rounding in the stored values.
    for (const Direction& d : positive_directions(lat_->dim())) {
        double mean = 0.5 * (per[direction_index(d)] + per[direction_index(d.negated())]);
        per[direction_index(d)] = per[direction_index(d.negated())] = mean;
    }
    return ConstantCoefficients(lat_->dim(), per);
}

bool OperatorLt::has_drift() const {
    for (double v : b_)
        if (v != 0.0) return true;
    return false;
}

bool OperatorLt::has_zeroth() const {
    for (double v : c_)
        if (v != 0.0) return true;
    return false;
}

OperatorLt rewrite_divergence(const EdgeCoefficients& a) {
    a.validate(1e-12);
    LatticePtr lat = a.lattice_ptr();
    const std::size_t S = lat->num_sites();
    const double N1 = lat->mesh();
    OperatorLt op(lat);
    double d0 = 0.0;
    for (std::size_t x = 0; x < S; ++x) {
        for (const Direction& e : all_directions(lat->dim())) {
            std::size_t xm = lat->neighbor(x, e.negated());
            std::size_t xp = lat->neighbor(x, e);
            op.a(x, e) = 0.5 * (a.at(xm, e) + a.at(xp, e.negated()));
            // -1/2 D_{-e} a_{.,e} at x = -N/2 (a_{x-e,e} - a_{x,e}).
            op.b(x, e) = -0.5 * N1 * (a.at(xm, e) - a.at(x, e));
            d0 = std::max(d0, std::fabs(op.b(x, e)));
        }
    }
    op.set_bounds(a.c_minus(), a.c_plus(), d0);
    op.set_regularity(1.0, d0);
    return op;
}

// ---- Constant-coefficient kernels -----------------------------------------

std::vector<LatticeField> constant_kernel_table(LatticePtr lat, const ConstantCoefficients& a,
                                                const std::vector<double>& taus) {
    a.validate();
    if (a.dim() != lat->dim()) throw std::invalid_argument("dimension mismatch");
    for (double t : taus)
        if (t < 0.0) throw std::invalid_argument("kernel times must be nonnegative");
    double amax = 0.0;
    for (double v : a.raw()) amax = std::max(amax, v);
    const double dt = cfl_step(lat->dim(), std::max(amax, 1e-12), lat->mesh());

    std::vector<std::size_t> order(taus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return taus[i] < taus[j]; });
    std::vector<double> sorted;
    sorted.reserve(taus.size());
    for (std::size_t i : order) sorted.push_back(taus[i]);

    LatticeField delta(lat);
    delta[0] = std::pow(static_cast<double>(lat->mesh()), lat->dim());
    FieldRhs rhs = [&](const LatticeField& w) { return constant_laplacian(a, w); };
    std::vector<LatticeField> rec = evolve_gaps(delta, sorted, dt, rhs);

    std::vector<LatticeField> out(taus.size());
    for (std::size_t i = 0; i < order.size(); ++i) out[order[i]] = rec[i];
    return out;
}

LatticeField constant_kernel(LatticePtr lat, const ConstantCoefficients& a, double tau) {
    return constant_kernel_table(std::move(lat), a, {tau}).front();
}

GaussianFitReport kernel_gradient_bounds_check(LatticePtr lat, const ConstantCoefficients& a,
                                               int order,
                                               const std::vector<double>& calibration_taus,
                                               const std::vector<double>& validation_taus) {
    if (order < 0 || order > 2) throw std::invalid_argument("order must be 0, 1 or 2");
    for (double t : calibration_taus)
        if (t <= 0.0) throw std::invalid_argument("calibration times must be positive");
    for (double t : validation_taus)
        if (t <= 0.0) throw std::invalid_argument("validation times must be positive");

    const std::size_t S = lat->num_sites();
    const int n = lat->dim();
    std::vector<double> dist(S);
    std::vector<double> origin(n, 0.0);
    for (std::size_t x = 0; x < S; ++x) dist[x] = torus_distance(lat->position_of(x), origin);

    // Pointwise derivative magnitudes of pbar(tau, .) up to the given order.
    auto magnitudes = [&](const LatticeField& p) {
        std::vector<double> m(S, 0.0);
        if (order == 0) {
            for (std::size_t x = 0; x < S; ++x) m[x] = std::fabs(p[x]);
        } else if (order == 1) {
            for (const Direction& e : all_directions(n)) {
                LatticeField g = grad_forward(p, e);
                for (std::size_t x = 0; x < S; ++x) m[x] = std::max(m[x], std::fabs(g[x]));
            }
        } else {
            for (const Direction& e : all_directions(n)) {
                LatticeField g = grad_forward(p, e);
                for (const Direction& ep : all_directions(n)) {
                    LatticeField gg = grad_forward(g, ep);
                    for (std::size_t x = 0; x < S; ++x) m[x] = std::max(m[x], std::fabs(gg[x]));
                }
            }
        }
        return m;
    };

    auto collect = [&](const std::vector<double>& taus) {
        std::vector<LatticeField> ps = constant_kernel_table(lat, a, taus);
        std::vector<std::vector<double>> mags;
        mags.reserve(ps.size());
        for (const LatticeField& p : ps) mags.push_back(magnitudes(p));
        return mags;
    };
    std::vector<std::vector<double>> calib = collect(calibration_taus);
    std::vector<std::vector<double>> valid = collect(validation_taus);

    auto envelope = [&](double k, double tau, std::size_t x) {
        // g(k tau, x) / tau^{order/2}
        double kt = k * tau;
        return std::pow(kt, -0.5 * n) * std::exp(-dist[x] * dist[x] / kt) /
               std::pow(tau, 0.5 * order);
    };

    GaussianFitReport rep;
    rep.order = order;
    double best_c = std::numeric_limits<double>::infinity(), best_k = 1.0;
    for (int ki = 0; ki <= 48; ++ki) {
        double k = 0.25 * std::pow(2.0, ki / 4.0);  // 0.25 .. ~1024
        double need = 0.0;
        for (std::size_t i = 0; i < calib.size(); ++i)
            for (std::size_t x = 0; x < S; ++x)
                need = std::max(need, calib[i][x] / envelope(k, calibration_taus[i], x));
        if (need < best_c) {
            best_c = need;
            best_k = k;
        }
    }
    rep.c_hat = best_c * 1.02;  // headroom so the fit is a strict envelope between grid times
    rep.k_hat = best_k;
    for (std::size_t i = 0; i < valid.size(); ++i)
        for (std::size_t x = 0; x < S; ++x) {
            double ratio = valid[i][x] / (rep.c_hat * envelope(best_k, validation_taus[i], x));
            rep.worst_ratio = std::max(rep.worst_ratio, ratio);
            ++rep.checked;
            if (ratio > 1.0) ++rep.violations;
        }
    return rep;
}

// ---- Kernel grids ---------------------------------------------------------

double KernelGrid::conservation_defect() const {
    const double inv = 1.0 / std::pow(static_cast<double>(lattice->mesh()), lattice->dim());
    double worst = 0.0;
    for (const DenseMatrix& m : mats)
        for (std::size_t x = 0; x < m.size; ++x) {
            double row = 0.0;
            for (std::size_t y = 0; y < m.size; ++y) row += m.at(x, y);
            worst = std::max(worst, std::fabs(inv * row - 1.0));
        }
    return worst;
}

double KernelGrid::min_value() const {
    double v = std::numeric_limits<double>::infinity();
    for (const DenseMatrix& m : mats)
        for (double e : m.data) v = std::min(v, e);
    return v;
}

void dump_kernel_csv(const KernelGrid& kernel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    const int n = kernel.lattice->dim();
    out << "s,t";
    for (int i = 0; i < n; ++i) out << ",y" << i;
    for (int i = 0; i < n; ++i) out << ",x" << i;
    out << ",value\n";
    out.precision(17);
    for (std::size_t ti = 0; ti < kernel.times.size(); ++ti)
        for (std::size_t y = 0; y < kernel.mats[ti].size; ++y) {
            auto yc = kernel.lattice->coords_of(y);
            for (std::size_t x = 0; x < kernel.mats[ti].size; ++x) {
                auto xc = kernel.lattice->coords_of(x);
                out << kernel.s << ',' << kernel.times[ti];
                for (int i = 0; i < n; ++i) out << ',' << yc[i];
                for (int i = 0; i < n; ++i) out << ',' << xc[i];
                out << ',' << kernel.mats[ti].at(x, y) << '\n';
            }
        }
}

// ---- Frozen-kernel correction series --------------------------------------

LeviTabulation levi_iterate(const OperatorLt& op, double s, double t, int k_max, int quad_nodes) {
    if (k_max < 1) throw std::invalid_argument("k_max must be at least 1");
    if (quad_nodes < 4)
        throw std::invalid_argument("quadrature too coarse: need at least 4 nodes per time gap");
    if (!(t > s)) throw std::invalid_argument("need t > s");
    const TorusLattice& lat = op.lattice();
    require_dense_feasible(lat);
    op.validate(1e-9);

    const std::size_t m = static_cast<std::size_t>(quad_nodes);
    const double h = (t - s) / static_cast<double>(m);
    const double inv_vol = 1.0 / std::pow(static_cast<double>(lat.mesh()), lat.dim());

    GapMats Z, M;
    build_frozen_tables(op, h, m, Z, M);

    LeviTabulation tab;
    tab.lattice = op.lattice_ptr();
    tab.s = s;
    tab.r_grid.resize(m + 1);
    for (std::size_t j = 0; j <= m; ++j) tab.r_grid[j] = s + j * h;

    // Level 1: the defect of the frozen kernel itself.
    std::vector<DenseMatrix> G(m + 1, DenseMatrix(lat.num_sites()));
    for (std::size_t j = 0; j <= m; ++j) G[j] = M.grid[j];
    tab.phi = G;
    double sup = 0.0;
    for (const DenseMatrix& g : G) sup = std::max(sup, sup_abs(g));
    tab.level_sup.push_back(sup);

    for (int k = 2; k <= k_max; ++k) {
        std::vector<DenseMatrix> next(m + 1, DenseMatrix(lat.num_sites()));
        for (std::size_t j = 1; j <= m; ++j) {
            DenseMatrix acc = volterra_integral(M, G, j, h);
            for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] *= inv_vol;
            next[j] = std::move(acc);
        }
        G = std::move(next);
        sup = 0.0;
        for (std::size_t j = 0; j <= m; ++j) {
            add_scaled(tab.phi[j], G[j], 1.0);
            sup = std::max(sup, sup_abs(G[j]));
        }
        tab.level_sup.push_back(sup);
    }
    return tab;
}

KernelGrid assemble_parametrix(const OperatorLt& op, const LeviTabulation& tab) {
    const TorusLattice& lat = op.lattice();
    if (!tab.lattice || !tab.lattice->same_as(lat))
        throw std::invalid_argument("tabulation does not match the operator's lattice");
    if (tab.r_grid.size() < 2 || tab.phi.size() != tab.r_grid.size())
        throw std::invalid_argument("incompatible tabulation");
    require_dense_feasible(lat);

    const std::size_t m = tab.r_grid.size() - 1;
    const double h = (tab.r_grid.back() - tab.r_grid.front()) / static_cast<double>(m);
    const double inv_vol = 1.0 / std::pow(static_cast<double>(lat.mesh()), lat.dim());

    GapMats Z, M;
    build_frozen_tables(op, h, m, Z, M);

    KernelGrid kg;
    kg.lattice = op.lattice_ptr();
    kg.s = tab.s;
    kg.times = tab.r_grid;
    kg.mats.resize(m + 1, DenseMatrix(lat.num_sites()));
    kg.mats[0] = Z.grid[0];
    for (std::size_t j = 1; j <= m; ++j) {
        DenseMatrix acc = volterra_integral(Z, tab.phi, j, h);
        DenseMatrix p = Z.grid[j];
        add_scaled(p, acc, inv_vol);
        kg.mats[j] = std::move(p);
    }
    return kg;
}

DenseMatrix dense_lt_propagator(const OperatorLt& op, double s, double t) {
    if (t < s) throw std::invalid_argument("need t >= s");
    const TorusLattice& lat = op.lattice();
    require_dense_feasible(lat);
    const std::size_t S = lat.num_sites();
    DenseMatrix start = DenseMatrix::identity(S);
    const double scale = std::pow(static_cast<double>(lat.mesh()), lat.dim());
    for (std::size_t i = 0; i < S; ++i) start.at(i, i) = scale;
    if (t == s) return start;
    return dense_matrix_rk4(op, false, t - s, start);
}

double duality_residual(const OperatorLt& op, double s, double t) {
    if (t < s) throw std::invalid_argument("need t >= s");
    const TorusLattice& lat = op.lattice();
    require_dense_feasible(lat);
    const std::size_t S = lat.num_sites();
    DenseMatrix fwd = dense_lt_propagator(op, s, t);
    DenseMatrix start = DenseMatrix::identity(S);
    const double scale = std::pow(static_cast<double>(lat.mesh()), lat.dim());
    for (std::size_t i = 0; i < S; ++i) start.at(i, i) = scale;
    DenseMatrix bwd = (t == s) ? start : dense_matrix_rk4(op, true, t - s, start);
    double worst = 0.0;
    for (std::size_t x = 0; x < S; ++x)
        for (std::size_t y = 0; y < S; ++y)
            worst = std::max(worst, std::fabs(fwd.at(x, y) - bwd.at(y, x)));
    return worst;
}

// ---- State-dependent coefficient identities -------------------------------

CommutatorReport commutator_residual(const LatticeField& u, const Nonlinearity& nl,
                                     const Direction& e, double tol) {
    LatticePtr lat = u.lattice_ptr();
    const std::size_t S = lat->num_sites();
    const int n = lat->dim();
    const double N1 = lat->mesh();
    EdgeCoefficients a = coefficients_from_state(u, nl);

    LatticeField lhs = grad_forward(divergence_operator(a, u), e);
    LatticeField gu = grad_forward(u, e);
    LatticeField rhs = divergence_operator(a, gu);
    // The remainder multiplies the e'-difference of u, shifted by e - e'
    // (product rule applied to the e'-directed flux).

    CommutatorReport rep;
    rep.worst_bound_margin = std::numeric_limits<double>::infinity();
    const double C = 0.5 * nl.sup_abs_d2phi();

    for (const Direction& ep : positive_directions(n)) {
        // Edge weight across (x - e', x), i.e. a_{x,-e'} in the stored layout.
        auto back_weight = [&](std::size_t x) { return a.at(x, ep.negated()); };
        LatticeField H(lat);
        LatticeField gpu = grad_forward(u, ep);
        std::vector<int> shift(n, 0);
        shift[e.axis] += e.sign;
        shift[ep.axis] -= 1;
        for (std::size_t x = 0; x < S; ++x) {
            std::size_t xe = lat->neighbor(x, e);
            double da = N1 * (back_weight(xe) - back_weight(x));
            H[x] = da * gpu[lat->shifted(x, shift)];
            std::size_t xb = lat->neighbor(x, ep.negated());
            double margin = C * (std::fabs(gu[x]) + std::fabs(gu[xb])) - std::fabs(da);
            rep.worst_bound_margin = std::min(rep.worst_bound_margin, margin);
            if (margin < -tol) ++rep.bound_violations;
        }
        LatticeField gH = grad_forward(H, ep);
        for (std::size_t x = 0; x < S; ++x) rhs[x] += gH[x];
    }
    for (std::size_t x = 0; x < S; ++x)
        rep.identity_residual = std::max(rep.identity_residual, std::fabs(lhs[x] - rhs[x]));
    return rep;
}

EnclosureReport second_expansion_residual(const LatticeField& u, const Nonlinearity& nl,
                                          std::size_t site, const Direction& e1,
                                          const Direction& e2, const Direction& e_prime,
                                          double tol) {
    LatticePtr lat = u.lattice_ptr();
    const int n = lat->dim();
    const double N1 = lat->mesh();
    const double N2 = N1 * N1;

    auto vec = [&](std::initializer_list<const Direction*> dirs) {
        std::vector<int> v(n, 0);
        for (const Direction* d : dirs) v[d->axis] += d->sign;
        return v;
    };
    auto addv = [&](std::vector<int> a, const std::vector<int>& b) {
        for (int i = 0; i < n; ++i) a[i] += b[i];
        return a;
    };
    const std::vector<int> v0(n, 0);
    const std::vector<int> v1 = vec({&e1});
    const std::vector<int> v2 = vec({&e2});
    const std::vector<int> v12 = addv(v1, v2);
    std::vector<int> vm(n, 0);
    vm[e_prime.axis] -= e_prime.sign;  // the -e' displacement

    auto U = [&](const std::vector<int>& v) { return u[lat->shifted(site, v)]; };
    auto edge_weight = [&](const std::vector<int>& v) {
        return nl.divided_difference(U(addv(v, vm)), U(v));
    };
    auto grad = [&](const std::vector<int>& dir, const std::vector<int>& at) {
        return N1 * (U(addv(at, dir)) - U(at));
    };

    EnclosureReport rep;
    rep.lhs = N2 * (edge_weight(v12) - edge_weight(v1) - edge_weight(v2) + edge_weight(v0));

    auto dd = [&](const std::vector<int>& at) {
        return N2 * (U(addv(at, v12)) - U(addv(at, v1)) - U(addv(at, v2)) + U(at));
    };
    rep.main_term = -0.5 * nl.d2phi(U(v0)) * (dd(v0) - dd(vm)) + nl.d2phi(U(v1)) * dd(v0);

    double lo = 0.0, hi = 0.0;
    auto add_term = [&](double coef, double ua, double ub) {
        auto [plo, phi3] = nl.d3phi_range(std::min(ua, ub), std::max(ua, ub));
        double t1 = coef * plo, t2 = coef * phi3;
        lo += std::min(t1, t2);
        hi += std::max(t1, t2);
    };

    // Third-order remainders of the edge divided differences.
    add_term(grad(vm, v12) * grad(vm, v12) / 6.0, U(addv(v12, vm)), U(v12));
    add_term(-grad(vm, v2) * grad(vm, v2) / 6.0, U(addv(v2, vm)), U(v2));
    add_term(-grad(vm, v1) * grad(vm, v1) / 6.0, U(addv(v1, vm)), U(v1));
    add_term(grad(vm, v0) * grad(vm, v0) / 6.0, U(vm), U(v0));
    // Second-order remainders of the phi' double difference.
    add_term(0.5 * grad(v2, v1) * grad(v2, v1), U(v1), U(v12));
    add_term(-0.5 * grad(v2, v0) * grad(v2, v0), U(v0), U(v2));
    add_term(grad(v1, v0) * grad(v2, v0), U(v0), U(v1));
    // Differences of phi'' against the base site.
    add_term(0.5 * grad(v12, v0) * grad(vm, v12), U(v0), U(v12));
    add_term(-0.5 * grad(v2, v0) * grad(vm, v2), U(v0), U(v2));
    add_term(-0.5 * grad(v1, v0) * grad(vm, v1), U(v0), U(v1));

    rep.r_lo = lo;
    rep.r_hi = hi;
    double rem = rep.lhs - rep.main_term;
    rep.margin = std::min(rem - lo, hi - rem);
    double widen = tol * (1.0 + std::fabs(rep.lhs) + std::fabs(rep.main_term) +
                          std::fabs(lo) + std::fabs(hi));
    rep.contained = rem >= lo - widen && rem <= hi + widen;
    return rep;
}

}  // namespace latpde
