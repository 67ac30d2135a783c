#include "latpde/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace latpde {

namespace {

using State = std::vector<double>;

// RHS writes d(state)/dt into `out`; both have the state's size.
using Rhs = std::function<void(double, const State&, State&)>;

// Called after every accepted internal step with (t_new, state).
using StepHook = std::function<void(double, const State&)>;

void rk4_step(const Rhs& rhs, double t, double h, State& y, State& k1, State& k2, State& k3,
              State& k4, State& scratch) {
    const std::size_t m = y.size();
    rhs(t, y, k1);
    for (std::size_t i = 0; i < m; ++i) scratch[i] = y[i] + 0.5 * h * k1[i];
    rhs(t + 0.5 * h, scratch, k2);
    for (std::size_t i = 0; i < m; ++i) scratch[i] = y[i] + 0.5 * h * k2[i];
    rhs(t + 0.5 * h, scratch, k3);
    for (std::size_t i = 0; i < m; ++i) scratch[i] = y[i] + h * k3[i];
    rhs(t + h, scratch, k4);
    for (std::size_t i = 0; i < m; ++i)
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

// Integrates from t_start through the sorted sample times with uniform
// internal steps of at most dt (each sampling interval is split into equal
// steps so the nodes are hit exactly).  record(i, state) fires for sample i;
// hook (optional) fires after every internal step.
void integrate(const Rhs& rhs, State& y, double t_start, const std::vector<double>& samples,
               double dt, const std::function<void(std::size_t, const State&)>& record,
               const StepHook& hook = nullptr) {
    const std::size_t m = y.size();
    State k1(m), k2(m), k3(m), k4(m), scratch(m);
    double t = t_start;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double target = samples[i];
        if (target < t - 1e-12) throw std::invalid_argument("sample times must be increasing");
        double gap = target - t;
        if (gap > 1e-14) {
            int steps = static_cast<int>(std::ceil(gap / dt - 1e-12));
            double h = gap / steps;
            for (int s = 0; s < steps; ++s) {
                rk4_step(rhs, t, h, y, k1, k2, k3, k4, scratch);
                t += h;
                if (hook) hook(t, y);
            }
        }
        t = target;
        record(i, y);
    }
}

void check_sorted_window(const std::vector<double>& samples, double T) {
    if (samples.empty()) throw std::invalid_argument("no sample times requested");
    for (std::size_t i = 0; i + 1 < samples.size(); ++i)
        if (!(samples[i] < samples[i + 1]))
            throw std::invalid_argument("sample times must be strictly increasing");
    if (samples.front() < -1e-12 || samples.back() > T + 1e-12)
        throw std::invalid_argument("sample times outside [0, T]");
}

double cfl_dt(int n, double c_plus, int N) {
    return 0.5 / (4.0 * n * c_plus * static_cast<double>(N) * static_cast<double>(N));
}

void require_envelope(const State& y, double lo, double hi, const char* what) {
    for (double v : y)
        if (v < lo - 1e-8 || v > hi + 1e-8)
            throw std::runtime_error(std::string("integrator instability: ") + what +
                                     " escaped the invariant interval (step size too large?)");
}

}  // namespace

LatticeField Trajectory::sample(double t) const {
    if (times.empty()) throw std::runtime_error("empty trajectory");
    if (t < times.front() - 1e-9 || t > times.back() + 1e-9)
        throw std::invalid_argument("sample time outside trajectory window");
    auto it = std::lower_bound(times.begin(), times.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - times.begin());
    if (hi == times.size()) return fields.back();
    if (hi == 0 || std::abs(times[hi] - t) < 1e-14) return fields[hi];
    std::size_t lo = hi - 1;
    double w = (t - times[lo]) / (times[hi] - times[lo]);
    LatticeField out(lattice);
    for (std::size_t s = 0; s < out.size(); ++s)
        out[s] = (1.0 - w) * fields[lo][s] + w * fields[hi][s];
    return out;
}

std::size_t Trajectory::node_near(double t, double tol) const {
    for (std::size_t i = 0; i < times.size(); ++i)
        if (std::abs(times[i] - t) <= tol) return i;
    throw std::invalid_argument("no trajectory node near requested time");
}

std::vector<double> uniform_times(double T, int M) {
    if (M < 1) throw std::invalid_argument("need at least one interval");
    std::vector<double> out(M + 1);
    for (int i = 0; i <= M; ++i) out[i] = T * i / M;
    return out;
}

CoefficientSchedule tabulate_coefficients(std::vector<double> times,
                                          std::vector<EdgeCoefficients> values) {
    if (times.size() != values.size() || times.empty())
        throw std::invalid_argument("tabulated schedule needs matching nonempty times/values");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (!(times[i] < times[i + 1]))
            throw std::invalid_argument("tabulated schedule times must be increasing");
    return [times = std::move(times), values = std::move(values)](double t) {
        if (t <= times.front()) return values.front();
        if (t >= times.back()) return values.back();
        auto it = std::upper_bound(times.begin(), times.end(), t);
        std::size_t hi = static_cast<std::size_t>(it - times.begin());
        std::size_t lo = hi - 1;
        double w = (t - times[lo]) / (times[hi] - times[lo]);
        EdgeCoefficients out = values[lo];
        for (std::size_t i = 0; i < out.raw().size(); ++i)
            out.raw()[i] = (1.0 - w) * values[lo].raw()[i] + w * values[hi].raw()[i];
        return out;
    };
}

SourceSchedule tabulate_sources(std::vector<double> times, std::vector<LatticeField> values) {
    if (times.size() != values.size() || times.empty())
        throw std::invalid_argument("tabulated schedule needs matching nonempty times/values");
    Trajectory traj;
    traj.lattice = values.front().lattice_ptr();
    traj.times = std::move(times);
    traj.fields = std::move(values);
    return [traj = std::move(traj)](double t) {
        double tc = std::clamp(t, traj.times.front(), traj.times.back());
        return traj.sample(tc);
    };
}

ParabolicCylinder::ParabolicCylinder(LatticePtr lattice, double t1, std::vector<double> y,
                                     double r)
    : lattice_(std::move(lattice)), t1_(t1), y_(std::move(y)), r_(r) {
    if (static_cast<int>(y_.size()) != lattice_->dim())
        throw std::invalid_argument("cylinder center has wrong dimension");
    if (!(r_ > 0.0) || !(r_ * r_ < t1_))
        throw std::invalid_argument("cylinder needs 0 < r and r^2 < t1");
    interior_mask_.assign(lattice_->num_sites(), 0);
    for (std::size_t s = 0; s < lattice_->num_sites(); ++s) {
        if (torus_distance(lattice_->position_of(s), y_) < r_) {
            interior_mask_[s] = 1;
            interior_.push_back(s);
        }
    }
    SiteMask outer = outer_boundary(*lattice_, interior_mask_);
    for (std::size_t s = 0; s < outer.size(); ++s)
        if (outer[s]) boundary_.push_back(s);
}

bool ParabolicCylinder::contains(double t, const std::vector<double>& z) const {
    return t > t0() && t <= t1_ && torus_distance(z, y_) < r_;
}

EdgeCoefficients coefficients_from_state(const LatticeField& u, const Nonlinearity& nl) {
    const TorusLattice& L = u.lattice();
    if (u.min() < nl.u_minus() - 1e-12 || u.max() > nl.u_plus() + 1e-12)
        throw std::runtime_error("state outside the invariant interval");
    EdgeCoefficients a(u.lattice_ptr(), nl.c_minus(), nl.c_minus(), nl.c_plus());
    for (std::size_t s = 0; s < L.num_sites(); ++s)
        for (const Direction& e : all_directions(L.dim()))
            a.at(s, e) = nl.divided_difference(u[s], u[L.neighbor(s, e)]);
    return a;
}

Trajectory solve_quasilinear(const Nonlinearity& nl, const LatticeField& u0, double T,
                             const std::vector<double>& samples) {
    check_sorted_window(samples, T);
    const TorusLattice& L = u0.lattice();
    if (u0.min() <= nl.u_minus() || u0.max() >= nl.u_plus())
        throw std::invalid_argument("initial state must lie strictly inside the invariant interval");
    const double dt = cfl_dt(L.dim(), nl.c_plus(), L.mesh());

    LatticeField phi_u(u0.lattice_ptr()), lap(u0.lattice_ptr());
    Rhs rhs = [&](double, const State& y, State& out) {
        for (std::size_t i = 0; i < y.size(); ++i) phi_u[i] = nl.phi(y[i]);
        lap = laplacian(phi_u);
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = lap[i] + nl.K() * nl.f(y[i]);
    };

    Trajectory traj;
    traj.lattice = u0.lattice_ptr();
    traj.times = samples;
    traj.dt_internal = dt;
    State y = u0.values();
    integrate(
        rhs, y, 0.0, samples, dt,
        [&](std::size_t, const State& s) { traj.fields.emplace_back(u0.lattice_ptr(), s); },
        [&](double, const State& s) { require_envelope(s, nl.u_minus(), nl.u_plus(), "state"); });
    return traj;
}

Trajectory solve_linear_divergence(const LinearProblem& p, double T,
                                   const std::vector<double>& samples) {
    check_sorted_window(samples, T);
    const TorusLattice& L = *p.lattice;
    const double dt = cfl_dt(L.dim(), p.c_plus, L.mesh());

    LatticeField uf(p.lattice), div(p.lattice);
    Rhs rhs = [&](double t, const State& y, State& out) {
        for (std::size_t i = 0; i < y.size(); ++i) uf[i] = y[i];
        div = divergence_operator(p.a(t), uf);
        if (p.g) {
            LatticeField g = p.g(t);
            for (std::size_t i = 0; i < y.size(); ++i) out[i] = div[i] + g[i];
        } else {
            for (std::size_t i = 0; i < y.size(); ++i) out[i] = div[i];
        }
    };

    Trajectory traj;
    traj.lattice = p.lattice;
    traj.times = samples;
    traj.dt_internal = dt;
    State y = p.u0.values();
    integrate(rhs, y, 0.0, samples, dt,
              [&](std::size_t, const State& s) { traj.fields.emplace_back(p.lattice, s); });
    return traj;
}

Trajectory solve_nondivergence_psi(const Nonlinearity& nl, const LatticeField& u0, double T,
                                   const std::vector<double>& samples) {
    check_sorted_window(samples, T);
    const TorusLattice& L = u0.lattice();
    if (u0.min() <= nl.u_minus() || u0.max() >= nl.u_plus())
        throw std::invalid_argument("initial state must lie strictly inside the invariant interval");
    const double dt = cfl_dt(L.dim(), nl.c_plus(), L.mesh());
    const double psi_lo = nl.phi(nl.u_minus());
    const double psi_hi = nl.phi(nl.u_plus());

    LatticeField psi_f(u0.lattice_ptr()), lap(u0.lattice_ptr());
    Rhs rhs = [&](double, const State& y, State& out) {
        for (std::size_t i = 0; i < y.size(); ++i) psi_f[i] = y[i];
        lap = laplacian(psi_f);
        for (std::size_t i = 0; i < y.size(); ++i) {
            double u = nl.phi_inverse(y[i]);
            out[i] = nl.dphi(u) * (lap[i] + nl.K() * nl.f(u));
        }
    };

    Trajectory traj;
    traj.lattice = u0.lattice_ptr();
    traj.times = samples;
    traj.dt_internal = dt;
    State y(u0.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = nl.phi(u0[i]);
    integrate(
        rhs, y, 0.0, samples, dt,
        [&](std::size_t, const State& s) { traj.fields.emplace_back(u0.lattice_ptr(), s); },
        [&](double, const State& s) { require_envelope(s, psi_lo, psi_hi, "transformed state"); });
    return traj;
}

GradientSystemResult solve_gradient_system(const Nonlinearity& nl, const LatticeField& u0,
                                           double T, const std::vector<double>& samples) {
    check_sorted_window(samples, T);
    const TorusLattice& L = u0.lattice();
    const int n = L.dim();
    const std::size_t ns = L.num_sites();
    if (u0.min() <= nl.u_minus() || u0.max() >= nl.u_plus())
        throw std::invalid_argument("initial state must lie strictly inside the invariant interval");
    const double dt = cfl_dt(n, nl.c_plus(), L.mesh());
    const auto pos = positive_directions(n);

    // Combined state: u followed by xi_e for each positive direction.
    LatticeField phi_u(u0.lattice_ptr()), lap(u0.lattice_ptr()), xi_f(u0.lattice_ptr()),
        flux(u0.lattice_ptr());
    Rhs rhs = [&](double, const State& y, State& out) {
        for (std::size_t i = 0; i < ns; ++i) phi_u[i] = nl.phi(y[i]);
        lap = laplacian(phi_u);
        for (std::size_t i = 0; i < ns; ++i) out[i] = lap[i] + nl.K() * nl.f(y[i]);
        // flux = -abar * sum_{e'>0} grad_dual xi_{e'} + K abar f(u)
        for (std::size_t i = 0; i < ns; ++i) flux[i] = 0.0;
        for (int d = 0; d < n; ++d) {
            for (std::size_t i = 0; i < ns; ++i) xi_f[i] = y[(d + 1) * ns + i];
            LatticeField dual = grad_dual(xi_f, pos[d]);
            for (std::size_t i = 0; i < ns; ++i) flux[i] += dual[i];
        }
        for (std::size_t i = 0; i < ns; ++i) {
            double abar = nl.dphi(y[i]);
            flux[i] = abar * (-flux[i] + nl.K() * nl.f(y[i]));
        }
        for (int d = 0; d < n; ++d) {
            LatticeField g = grad_forward(flux, pos[d]);
            for (std::size_t i = 0; i < ns; ++i) out[(d + 1) * ns + i] = g[i];
        }
    };

    State y((1 + n) * ns);
    for (std::size_t i = 0; i < ns; ++i) {
        y[i] = u0[i];
        phi_u[i] = nl.phi(u0[i]);
    }
    for (int d = 0; d < n; ++d) {
        LatticeField g = grad_forward(phi_u, pos[d]);
        for (std::size_t i = 0; i < ns; ++i) y[(d + 1) * ns + i] = g[i];
    }

    GradientSystemResult res;
    res.u.lattice = u0.lattice_ptr();
    res.u.times = samples;
    res.u.dt_internal = dt;
    res.xi.resize(n);
    for (int d = 0; d < n; ++d) {
        res.xi[d].lattice = u0.lattice_ptr();
        res.xi[d].times = samples;
        res.xi[d].dt_internal = dt;
    }
    res.max_curl_residual = 0.0;

    integrate(
        rhs, y, 0.0, samples, dt,
        [&](std::size_t, const State& s) {
            res.u.fields.emplace_back(u0.lattice_ptr(),
                                      State(s.begin(), s.begin() + ns));
            std::vector<LatticeField> xis;
            for (int d = 0; d < n; ++d) {
                xis.emplace_back(u0.lattice_ptr(),
                                 State(s.begin() + (d + 1) * ns, s.begin() + (d + 2) * ns));
                res.xi[d].fields.push_back(xis.back());
            }
            for (int d1 = 0; d1 < n; ++d1)
                for (int d2 = d1 + 1; d2 < n; ++d2) {
                    LatticeField c1 = grad_forward(xis[d1], pos[d2]);
                    LatticeField c2 = grad_forward(xis[d2], pos[d1]);
                    for (std::size_t i = 0; i < ns; ++i)
                        res.max_curl_residual =
                            std::max(res.max_curl_residual, std::abs(c1[i] - c2[i]));
                }
        },
        [&](double, const State& s) {
            for (std::size_t i = 0; i < ns; ++i)
                if (s[i] < nl.u_minus() - 1e-8 || s[i] > nl.u_plus() + 1e-8)
                    throw std::runtime_error(
                        "integrator instability: state escaped the invariant interval");
        });
    return res;
}

Trajectory solve_heat_on_cylinder(const ParabolicCylinder& Q, const ConstantCoefficients& a,
                                  const Trajectory& boundary) {
    const TorusLattice& L = Q.lattice();
    if (boundary.lattice.get() != &L)
        throw std::invalid_argument("boundary trajectory lives on a different lattice");
    const double t0 = Q.t0(), t1 = Q.t1();
    if (boundary.times.front() > t0 + 1e-12 || boundary.times.back() < t1 - 1e-12)
        throw std::invalid_argument("boundary trajectory does not cover the cylinder window");
    double amax = 0.0;
    for (double v : a.raw()) amax = std::max(amax, v);
    const double dt = cfl_dt(L.dim(), std::max(amax, 1e-12), L.mesh());
    const SiteMask& mask = Q.interior_mask();

    LatticeField work(Q.lattice_ptr());
    Rhs rhs = [&](double t, const State& y, State& out) {
        LatticeField bdry = boundary.sample(std::clamp(t, t0, t1));
        for (std::size_t i = 0; i < y.size(); ++i) work[i] = mask[i] ? y[i] : bdry[i];
        LatticeField lap = constant_laplacian(a, work);
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = mask[i] ? lap[i] : 0.0;
    };

    // Record at t0 and every boundary node inside (t0, t1].
    std::vector<double> nodes{t0};
    for (double t : boundary.times)
        if (t > t0 + 1e-12 && t <= t1 + 1e-12) nodes.push_back(std::min(t, t1));

    Trajectory traj;
    traj.lattice = Q.lattice_ptr();
    traj.times = nodes;
    traj.dt_internal = dt;
    State y = boundary.sample(t0).values();
    integrate(rhs, y, t0, nodes, dt, [&](std::size_t idx, const State& s) {
        LatticeField bdry = boundary.sample(nodes[idx]);
        LatticeField rec(Q.lattice_ptr());
        for (std::size_t i = 0; i < s.size(); ++i) rec[i] = mask[i] ? s[i] : bdry[i];
        traj.fields.push_back(std::move(rec));
    });
    return traj;
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::multiply(const DenseMatrix& rhs) const {
    if (size != rhs.size) throw std::invalid_argument("matrix size mismatch");
    DenseMatrix out(size);
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t k = 0; k < size; ++k) {
            double v = at(i, k);
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < size; ++j) out.at(i, j) += v * rhs.at(k, j);
        }
    return out;
}

std::vector<double> DenseMatrix::apply(const std::vector<double>& v) const {
    if (v.size() != size) throw std::invalid_argument("matrix/vector size mismatch");
    std::vector<double> out(size, 0.0);
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) out[i] += at(i, j) * v[j];
    return out;
}

double DenseMatrix::max_abs_diff(const DenseMatrix& rhs) const {
    if (size != rhs.size) throw std::invalid_argument("matrix size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
        worst = std::max(worst, std::abs(data[i] - rhs.data[i]));
    return worst;
}

namespace {

void check_dense_guard(const TorusLattice& L) {
    if (L.num_sites() > 4096)
        throw std::invalid_argument("dense propagator limited to 4096 sites");
}

// One RK4 step of d/dt M = L_{a(t)} M applied column-wise to a dense matrix.
void matrix_rk4_step(const LinearProblem& p, double t, double h, DenseMatrix& M) {
    const std::size_t n = M.size;
    auto apply_L = [&](double tt, const DenseMatrix& X) {
        EdgeCoefficients a = p.a(tt);
        DenseMatrix out(n);
        LatticeField col(p.lattice);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) col[i] = X.at(i, j);
            LatticeField d = divergence_operator(a, col);
            for (std::size_t i = 0; i < n; ++i) out.at(i, j) = d[i];
        }
        return out;
    };
    DenseMatrix k1 = apply_L(t, M);
    DenseMatrix s(n);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = M.data[i] + 0.5 * h * k1.data[i];
    DenseMatrix k2 = apply_L(t + 0.5 * h, s);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = M.data[i] + 0.5 * h * k2.data[i];
    DenseMatrix k3 = apply_L(t + 0.5 * h, s);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = M.data[i] + h * k3.data[i];
    DenseMatrix k4 = apply_L(t + h, s);
    for (std::size_t i = 0; i < M.data.size(); ++i)
        M.data[i] += h / 6.0 * (k1.data[i] + 2.0 * k2.data[i] + 2.0 * k3.data[i] + k4.data[i]);
}

}  // namespace

DenseMatrix propagator(const LinearProblem& p, double s, double t) {
    const TorusLattice& L = *p.lattice;
    check_dense_guard(L);
    if (t < s) throw std::invalid_argument("propagator needs s <= t");
    DenseMatrix M = DenseMatrix::identity(L.num_sites());
    if (t - s < 1e-14) return M;
    const double dt = cfl_dt(L.dim(), p.c_plus, L.mesh());
    int steps = static_cast<int>(std::ceil((t - s) / dt - 1e-12));
    double h = (t - s) / steps;
    double cur = s;
    for (int k = 0; k < steps; ++k) {
        matrix_rk4_step(p, cur, h, M);
        cur += h;
    }
    return M;
}

Trajectory duhamel_reconstruct(const LinearProblem& p, double T,
                               const std::vector<double>& samples) {
    check_sorted_window(samples, T);
    const TorusLattice& L = *p.lattice;
    check_dense_guard(L);
    const std::size_t ns = L.num_sites();
    const double dt = cfl_dt(L.dim(), p.c_plus, L.mesh());

    Trajectory traj;
    traj.lattice = p.lattice;
    traj.times = samples;
    traj.dt_internal = dt;

    // March the propagator one internal step at a time with dense one-step
    // factors S = P_{t, t+h}.  Running quantities:
    //   hom = P_{0,t} u0
    //   I   = composite-trapezoid value of the Duhamel integral up to t,
    //         updated per step as I <- S I + (h/2)(S g(t) + g(t+h)),
    // so u(t) = hom + I at every grid node.
    std::vector<double> hom = p.u0.values();
    std::vector<double> I(ns, 0.0);
    auto g_at = [&](double t) {
        if (!p.g) return std::vector<double>(ns, 0.0);
        return p.g(t).values();
    };
    double t = 0.0;

    auto record = [&]() {
        LatticeField out(p.lattice);
        for (std::size_t i = 0; i < ns; ++i) out[i] = hom[i] + I[i];
        traj.fields.push_back(std::move(out));
    };

    std::size_t si = 0;
    if (std::abs(samples[0]) < 1e-14) {
        record();
        si = 1;
    }
    for (; si < samples.size(); ++si) {
        double target = samples[si];
        double gap = target - t;
        int steps = static_cast<int>(std::ceil(gap / dt - 1e-12));
        double h = gap / steps;
        for (int k = 0; k < steps; ++k) {
            DenseMatrix S = DenseMatrix::identity(ns);
            matrix_rk4_step(p, t, h, S);
            std::vector<double> g_old = g_at(t);
            hom = S.apply(hom);
            I = S.apply(I);
            std::vector<double> sg = S.apply(g_old);
            t += h;
            std::vector<double> g_new = g_at(t);
            for (std::size_t i = 0; i < ns; ++i) I[i] += 0.5 * h * (sg[i] + g_new[i]);
        }
        record();
    }
    return traj;
}

std::pair<double, double> comparison_envelope(const Nonlinearity& nl, const LatticeField& u0) {
    double lo = nl.u_minus(), hi = nl.u_plus();
    if (!(nl.f(lo) > 0.0) || !(nl.f(hi) < 0.0))
        throw std::runtime_error("no valid envelope: reaction term lacks the strict sign change");
    if (!(lo < u0.min()) || !(u0.max() < hi))
        throw std::runtime_error("no valid envelope: initial state not strictly bracketed");
    return {lo, hi};
}

MaxPrincipleReport check_maximum_principle(const Trajectory& traj, double slack) {
    if (traj.fields.empty()) throw std::invalid_argument("empty trajectory");
    MaxPrincipleReport rep;
    const double m0 = traj.fields.front().min();
    const double M0 = traj.fields.front().max();
    for (std::size_t ti = 0; ti < traj.fields.size(); ++ti) {
        const LatticeField& f = traj.fields[ti];
        for (std::size_t s = 0; s < f.size(); ++s) {
            double over = f[s] - M0;
            double under = m0 - f[s];
            if (over > rep.max_excess) {
                rep.max_excess = over;
                rep.worst_time_index = ti;
                rep.worst_site = s;
            }
            if (under > rep.min_excess) {
                rep.min_excess = under;
                rep.worst_time_index = ti;
                rep.worst_site = s;
            }
        }
    }
    rep.passed = rep.max_excess <= slack && rep.min_excess <= slack;
    return rep;
}

}  // namespace latpde
