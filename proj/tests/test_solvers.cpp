#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "latpde/lattice.hpp"
#include "latpde/nonlinearity.hpp"
#include "latpde/solvers.hpp"

using namespace latpde;

namespace {

LatticeField random_field(LatticePtr lat, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    LatticeField u(lat);
    for (std::size_t s = 0; s < u.size(); ++s) u[s] = d(rng);
    return u;
}

LatticeField mode_field(LatticePtr lat, double amp, int k, double offset = 0.0) {
    LatticeField u(lat);
    for (std::size_t s = 0; s < u.size(); ++s) {
        auto z = lat->position_of(s);
        double v = offset;
        for (double zi : z) v += amp * std::cos(2.0 * M_PI * k * zi);
        u[s] = v;
    }
    return u;
}

EdgeCoefficients random_edge_coefficients(LatticePtr lat, std::mt19937_64& rng, double lo,
                                          double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    EdgeCoefficients a(lat, lo, lo, hi);
    for (std::size_t s = 0; s < lat->num_sites(); ++s)
        for (const Direction& e : positive_directions(lat->dim())) {
            double v = d(rng);
            a.at(s, e) = v;
            a.at(lat->neighbor(s, e), e.negated()) = v;
        }
    return a;
}

double max_field_diff(const LatticeField& u, const LatticeField& v) {
    double worst = 0.0;
    for (std::size_t s = 0; s < u.size(); ++s) worst = std::max(worst, std::abs(u[s] - v[s]));
    return worst;
}

// Scalar RK4 with many small steps; reference for spatially constant runs.
double scalar_rk4(const std::function<double(double)>& f, double y0, double T, int steps) {
    double y = y0, h = T / steps;
    for (int i = 0; i < steps; ++i) {
        double k1 = f(y);
        double k2 = f(y + 0.5 * h * k1);
        double k3 = f(y + 0.5 * h * k2);
        double k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return y;
}

}  // namespace

TEST_CASE("state-dependent coefficients: constant state and hand value") {
    auto lat = make_lattice(1, 4);
    Nonlinearity nl = make_allen_cahn(1.0);
    LatticeField c(lat, 0.4);
    EdgeCoefficients a = coefficients_from_state(c, nl);
    for (std::size_t s = 0; s < lat->num_sites(); ++s)
        for (const Direction& e : all_directions(1))
            CHECK(a.at(s, e) == doctest::Approx(nl.dphi(0.4)).epsilon(1e-14));

    // quadratic flux: divided difference between 1 and 2 is (4-1)/(2-1) = 3
    Nonlinearity sq("square", [](double u) { return u * u; }, [](double u) { return 2 * u; },
                    [](double) { return 2.0; }, [](double) { return 0.0; },
                    [](double) { return 0.0; }, [](double) { return 0.0; }, 0.0, 0.5, 2.5);
    LatticeField steps(lat, std::vector<double>{1, 2, 1, 1});
    EdgeCoefficients b = coefficients_from_state(steps, sq);
    CHECK(b.at(0, Direction{0, +1}) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(b.symmetry_defect() == doctest::Approx(0.0));
}

TEST_CASE("state-dependent coefficients stay inside the ellipticity window") {
    std::mt19937_64 rng(41);
    auto lat = make_lattice(2, 8);
    Nonlinearity nl = make_allen_cahn(1.0);
    LatticeField u = random_field(lat, rng, nl.u_minus(), nl.u_plus());
    EdgeCoefficients a = coefficients_from_state(u, nl);
    // oracle: fine-grid scan of phi' over the state interval
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i <= 10000; ++i) {
        double x = nl.u_minus() + (nl.u_plus() - nl.u_minus()) * i / 10000.0;
        lo = std::min(lo, nl.dphi(x));
        hi = std::max(hi, nl.dphi(x));
    }
    for (double v : a.raw()) {
        CHECK(v >= lo - 1e-12);
        CHECK(v <= hi + 1e-12);
    }
    // envelope violation rejected
    LatticeField bad(lat, nl.u_plus() + 0.5);
    CHECK_THROWS(coefficients_from_state(bad, nl));
}

TEST_CASE("quasilinear heat run matches the dense propagator at 4x smaller step") {
    std::mt19937_64 rng(42);
    auto lat = make_lattice(1, 16);
    Nonlinearity heat = make_linear_heat();
    LatticeField u0 = random_field(lat, rng, -0.8, 0.8);
    Trajectory traj = solve_quasilinear(heat, u0, 0.1, {0.0, 0.05, 0.1});

    LinearProblem p;
    p.lattice = lat;
    p.a = [lat](double) { return EdgeCoefficients(lat, 1.0, 1.0, 1.0); };
    p.u0 = u0;
    p.c_plus = 4.0;  // forces a 4x smaller internal step for the oracle
    for (double t : {0.05, 0.1}) {
        DenseMatrix P = propagator(p, 0.0, t);
        std::vector<double> ref = P.apply(u0.values());
        const LatticeField& got = traj.fields[traj.node_near(t)];
        double scale = 0.0, diff = 0.0;
        for (std::size_t s = 0; s < ref.size(); ++s) {
            scale = std::max(scale, std::abs(ref[s]));
            diff = std::max(diff, std::abs(ref[s] - got[s]));
        }
        CHECK(diff / scale < 1e-6);
    }
}

TEST_CASE("spatially constant data reduces to the scalar reaction ODE") {
    auto lat = make_lattice(2, 8);
    Nonlinearity nl = make_allen_cahn(3.0);
    LatticeField u0(lat, 0.5);
    Trajectory traj = solve_quasilinear(nl, u0, 0.2, {0.0, 0.1, 0.2});
    auto f = [&](double y) { return nl.K() * nl.f(y); };
    for (double t : {0.1, 0.2}) {
        double ref = scalar_rk4(f, 0.5, t, 20000);
        const LatticeField& got = traj.fields[traj.node_near(t)];
        for (std::size_t s = 0; s < got.size(); ++s)
            CHECK(std::abs(got[s] - ref) < 1e-8);
    }
}

TEST_CASE("invariant interval holds along random reaction-diffusion runs") {
    std::mt19937_64 rng(43);
    auto lat = make_lattice(1, 32);
    Nonlinearity nl = make_allen_cahn(4.0);
    LatticeField u0 = random_field(lat, rng, -0.9, 0.9);
    auto env = comparison_envelope(nl, u0);
    CHECK(env.first == -1.2);
    CHECK(env.second == 1.2);
    Trajectory traj = solve_quasilinear(nl, u0, 0.3, uniform_times(0.3, 30));
    for (const LatticeField& f : traj.fields) {
        CHECK(f.min() >= env.first - 1e-8);
        CHECK(f.max() <= env.second + 1e-8);
    }
}

TEST_CASE("linear solver: trivial coefficient cases") {
    std::mt19937_64 rng(44);
    auto lat = make_lattice(1, 16);
    LatticeField u0 = random_field(lat, rng, -0.8, 0.8);

    LinearProblem p;
    p.lattice = lat;
    p.a = [lat](double) { return EdgeCoefficients(lat, 1.0, 1.0, 1.0); };
    p.u0 = u0;
    p.c_plus = 1.0;
    Trajectory lin = solve_linear_divergence(p, 0.1, {0.0, 0.1});
    Trajectory heat = solve_quasilinear(make_linear_heat(), u0, 0.1, {0.0, 0.1});
    CHECK(max_field_diff(lin.fields[1], heat.fields[1]) < 1e-10);

    // mass conservation without a source
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t s = 0; s < u0.size(); ++s) {
        m0 += lin.fields[0][s];
        m1 += lin.fields[1][s];
    }
    CHECK(std::abs(m1 - m0) / lat->num_sites() < 1e-8);

    // constant source on top of the zero state integrates to u = t
    LinearProblem q = p;
    q.u0 = LatticeField(lat, 0.0);
    q.g = [lat](double) { return LatticeField(lat, 1.0); };
    Trajectory ramp = solve_linear_divergence(q, 0.25, {0.0, 0.1, 0.25});
    for (std::size_t i = 0; i < ramp.times.size(); ++i)
        for (std::size_t s = 0; s < u0.size(); ++s)
            CHECK(std::abs(ramp.fields[i][s] - ramp.times[i]) < 1e-9);
}

TEST_CASE("freezing the coefficients along a run reproduces the run") {
    auto lat = make_lattice(1, 8);
    Nonlinearity nl = make_allen_cahn(2.0);
    LatticeField u0 = mode_field(lat, 0.3, 1, 0.1);
    const double T = 0.02;
    const int M = 1000;
    std::vector<double> nodes = uniform_times(T, M);
    Trajectory ref = solve_quasilinear(nl, u0, T, nodes);

    std::vector<EdgeCoefficients> as;
    std::vector<LatticeField> gs;
    for (const LatticeField& u : ref.fields) {
        as.push_back(coefficients_from_state(u, nl));
        LatticeField g(lat);
        for (std::size_t s = 0; s < g.size(); ++s) g[s] = nl.K() * nl.f(u[s]);
        gs.push_back(g);
    }
    LinearProblem p;
    p.lattice = lat;
    p.a = tabulate_coefficients(nodes, as);
    p.g = tabulate_sources(nodes, gs);
    p.u0 = u0;
    p.c_plus = nl.c_plus();
    Trajectory lin = solve_linear_divergence(p, T, {0.0, T / 2, T});
    CHECK(max_field_diff(lin.fields[2], ref.fields[M]) < 1e-7);
}

TEST_CASE("transformed-state route agrees with the direct route") {
    std::mt19937_64 rng(45);
    auto lat = make_lattice(1, 8);
    Nonlinearity nl = make_allen_cahn(2.0);
    LatticeField u0 = random_field(lat, rng, -0.7, 0.7);
    Trajectory direct = solve_quasilinear(nl, u0, 0.05, {0.0, 0.05});
    Trajectory psi = solve_nondivergence_psi(nl, u0, 0.05, {0.0, 0.05});
    for (std::size_t s = 0; s < u0.size(); ++s)
        CHECK(std::abs(nl.phi_inverse(psi.fields[1][s]) - direct.fields[1][s]) < 1e-6);

    // identity flux: the two routes are the same equation
    Nonlinearity heat = make_linear_heat();
    Trajectory a = solve_quasilinear(heat, u0, 0.05, {0.0, 0.05});
    Trajectory b = solve_nondivergence_psi(heat, u0, 0.05, {0.0, 0.05});
    CHECK(max_field_diff(a.fields[1], b.fields[1]) < 1e-10);

    // constant data: psi follows the scalar ODE psi' = phi'(u) K f(u)
    LatticeField c0(lat, 0.4);
    Trajectory pc = solve_nondivergence_psi(nl, c0, 0.1, {0.0, 0.1});
    auto f = [&](double y) {
        double u = nl.phi_inverse(y);
        return nl.dphi(u) * nl.K() * nl.f(u);
    };
    double ref = scalar_rk4(f, nl.phi(0.4), 0.1, 20000);
    for (std::size_t s = 0; s < c0.size(); ++s) CHECK(std::abs(pc.fields[1][s] - ref) < 1e-8);
}

TEST_CASE("gradient system tracks the gradient of the transformed state") {
    std::mt19937_64 rng(46);
    auto lat = make_lattice(2, 8);
    Nonlinearity nl = make_allen_cahn(4.0);
    LatticeField u0 = mode_field(lat, 0.25, 1, 0.1);
    const double T = 0.03;
    GradientSystemResult res = solve_gradient_system(nl, u0, T, {0.0, T / 2, T});
    CHECK(res.max_curl_residual < 1e-8);

    Trajectory direct = solve_quasilinear(nl, u0, T, {0.0, T / 2, T});
    auto pos = positive_directions(2);
    for (std::size_t i = 0; i < direct.times.size(); ++i) {
        LatticeField phi_u(lat);
        for (std::size_t s = 0; s < phi_u.size(); ++s)
            phi_u[s] = nl.phi(direct.fields[i][s]);
        for (int d = 0; d < 2; ++d) {
            LatticeField g = grad_forward(phi_u, pos[d]);
            CHECK(max_field_diff(res.xi[d].fields[i], g) < 1e-6);
        }
    }

    // constant data: all gradients stay at zero
    GradientSystemResult flat = solve_gradient_system(nl, LatticeField(lat, 0.3), 0.05, {0.0, 0.05});
    for (int d = 0; d < 2; ++d) CHECK(flat.xi[d].fields[1].max_abs() < 1e-12);
}

TEST_CASE("cylinder heat solve: constant boundary and exact polynomial solution") {
    auto lat = make_lattice(2, 16);
    ParabolicCylinder Q(lat, 0.06, {0.5, 0.5}, 0.2);
    CHECK(Q.t0() == doctest::Approx(0.06 - 0.04));
    CHECK(!Q.interior_sites().empty());
    CHECK(!Q.boundary_sites().empty());
    for (std::size_t b : Q.boundary_sites()) CHECK(!Q.contains_site(b));

    ConstantCoefficients a(2, std::vector<double>{1.0, 1.0, 0.7, 0.7});

    // constant boundary pins a constant solution
    Trajectory const_b;
    const_b.lattice = lat;
    const_b.times = {Q.t0(), Q.t1()};
    const_b.fields = {LatticeField(lat, 0.3), LatticeField(lat, 0.3)};
    Trajectory vc = solve_heat_on_cylinder(Q, a, const_b);
    for (const LatticeField& f : vc.fields)
        for (std::size_t s = 0; s < f.size(); ++s) CHECK(std::abs(f[s] - 0.3) < 1e-12);

    // alpha cubic in the unwrapped coordinates => beta := Delta_a alpha is
    // linear and the exact solution alpha + t beta is reproduced by the
    // integrator without truncation error.
    auto unwrap = [&](std::size_t s) {
        auto z = lat->position_of(s);
        for (double& zi : z) {
            double d = zi - 0.5;
            d -= std::round(d);
            zi = d;  // displacement from the center, in [-1/2, 1/2)
        }
        return z;
    };
    LatticeField alpha(lat), beta(lat);
    for (std::size_t s = 0; s < lat->num_sites(); ++s) {
        auto z = unwrap(s);
        double x = z[0], y = z[1];
        alpha[s] = 0.3 * x * x * x + 0.2 * x * y * y - 0.5 * y * y * y + x * x + 0.7 * y + 0.2;
        beta[s] = 1.0 * (1.8 * x + 2.0) + 0.7 * (0.4 * x - 3.0 * y);
    }
    // sanity: beta is the constant-coefficient operator applied to alpha on
    // the sites the integrator touches
    LatticeField lap = constant_laplacian(a, alpha);
    for (std::size_t s : Q.interior_sites()) CHECK(lap[s] == doctest::Approx(beta[s]).epsilon(1e-9));

    Trajectory poly_b;
    poly_b.lattice = lat;
    poly_b.times = uniform_times(Q.t1(), 12);
    for (double t : poly_b.times) {
        LatticeField f(lat);
        for (std::size_t s = 0; s < f.size(); ++s) f[s] = alpha[s] + t * beta[s];
        poly_b.fields.push_back(f);
    }
    Trajectory v = solve_heat_on_cylinder(Q, a, poly_b);
    for (std::size_t i = 0; i < v.times.size(); ++i)
        for (std::size_t s : Q.interior_sites())
            CHECK(std::abs(v.fields[i][s] - (alpha[s] + v.times[i] * beta[s])) < 1e-8);
    // off the interior the returned values copy the boundary data exactly
    for (std::size_t i = 0; i < v.times.size(); ++i)
        for (std::size_t s = 0; s < lat->num_sites(); ++s)
            if (!Q.contains_site(s))
                CHECK(v.fields[i][s] == doctest::Approx(alpha[s] + v.times[i] * beta[s]).epsilon(1e-12));
}

TEST_CASE("dense propagator: identity, mass, symmetry, composition") {
    std::mt19937_64 rng(47);
    auto lat = make_lattice(1, 8);
    EdgeCoefficients a0 = random_edge_coefficients(lat, rng, 0.5, 1.5);
    EdgeCoefficients a1 = random_edge_coefficients(lat, rng, 0.5, 1.5);

    LinearProblem fixed;
    fixed.lattice = lat;
    fixed.a = [a0](double) { return a0; };
    fixed.u0 = LatticeField(lat, 0.0);
    fixed.c_plus = 1.5;

    DenseMatrix I = propagator(fixed, 0.3, 0.3);
    CHECK(I.max_abs_diff(DenseMatrix::identity(lat->num_sites())) == 0.0);

    DenseMatrix P = propagator(fixed, 0.0, 0.1);
    for (std::size_t i = 0; i < P.size; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < P.size; ++j) row += P.at(i, j);
        CHECK(std::abs(row - 1.0) < 1e-9);
        for (std::size_t j = 0; j < P.size; ++j)
            CHECK(std::abs(P.at(i, j) - P.at(j, i)) < 1e-9);
    }

    LinearProblem sched = fixed;
    sched.a = tabulate_coefficients({0.0, 0.1}, {a0, a1});
    DenseMatrix full = propagator(sched, 0.0, 0.1);
    DenseMatrix left = propagator(sched, 0.05, 0.1);
    DenseMatrix right = propagator(sched, 0.0, 0.05);
    CHECK(left.multiply(right).max_abs_diff(full) < 1e-7);
}

TEST_CASE("propagator-based reconstruction matches the direct solve") {
    std::mt19937_64 rng(48);
    auto lat = make_lattice(1, 8);
    EdgeCoefficients a0 = random_edge_coefficients(lat, rng, 0.6, 1.4);
    EdgeCoefficients a1 = random_edge_coefficients(lat, rng, 0.6, 1.4);
    EdgeCoefficients a2 = random_edge_coefficients(lat, rng, 0.6, 1.4);

    LinearProblem p;
    p.lattice = lat;
    p.a = tabulate_coefficients({0.0, 0.1, 0.2}, {a0, a1, a2});
    p.u0 = mode_field(lat, 0.4, 1, 0.2);
    p.c_plus = 1.4;

    // no source: reconstruction is the pure propagator term
    Trajectory h = duhamel_reconstruct(p, 0.1, {0.0, 0.1});
    DenseMatrix P = propagator(p, 0.0, 0.1);
    std::vector<double> ref = P.apply(p.u0.values());
    for (std::size_t s = 0; s < ref.size(); ++s)
        CHECK(std::abs(h.fields[1][s] - ref[s]) < 1e-10);

    // smooth source: matches the direct integrator
    LatticeField gshape = mode_field(lat, 0.3, 1, 0.4);
    p.g = [gshape](double t) {
        LatticeField out = gshape;
        for (std::size_t s = 0; s < out.size(); ++s) out[s] *= (1.0 + 0.5 * t);
        return out;
    };
    Trajectory rec = duhamel_reconstruct(p, 0.2, {0.0, 0.1, 0.2});
    Trajectory direct = solve_linear_divergence(p, 0.2, {0.0, 0.1, 0.2});
    double scale = 0.0;
    for (const LatticeField& f : direct.fields) scale = std::max(scale, f.max_abs());
    for (std::size_t i = 0; i < rec.times.size(); ++i)
        CHECK(max_field_diff(rec.fields[i], direct.fields[i]) / scale < 1e-5);
}

TEST_CASE("envelope hypotheses are enforced") {
    auto lat = make_lattice(1, 8);
    // reaction term without the inward sign at the lower end is rejected
    CHECK_THROWS(Nonlinearity("bad", [](double u) { return u; }, [](double) { return 1.0; },
                              [](double) { return 0.0; }, [](double) { return 0.0; },
                              [](double) { return -1.0; }, [](double) { return 0.0; }, 1.0,
                              -1.0, 1.0));

    // one-sided positive envelope for f(u) = 1 - u
    std::mt19937_64 rng(49);
    Nonlinearity drift("drift", [](double u) { return u; }, [](double) { return 1.0; },
                       [](double) { return 0.0; }, [](double) { return 0.0; },
                       [](double u) { return 1.0 - u; }, [](double) { return -1.0; }, 1.0, 0.05,
                       2.0);
    LatticeField u0 = random_field(lat, rng, 0.1, 0.9);
    auto env = comparison_envelope(drift, u0);
    CHECK(env.first > 0.0);

    // initial data outside the declared interval
    Nonlinearity nl = make_allen_cahn(1.0);
    LatticeField wide(lat, 1.3);
    CHECK_THROWS(comparison_envelope(nl, wide));
}

TEST_CASE("maximum principle for divergence and non-divergence evolutions") {
    std::mt19937_64 rng(50);
    auto lat = make_lattice(1, 16);
    LatticeField u0 = random_field(lat, rng, -1.0, 1.0);

    Trajectory heat = solve_quasilinear(make_linear_heat(), u0, 0.1, uniform_times(0.1, 10));
    MaxPrincipleReport rep = check_maximum_principle(heat);
    CHECK(rep.passed);

    Trajectory flat = solve_quasilinear(make_linear_heat(), LatticeField(lat, 0.2), 0.1,
                                        {0.0, 0.1});
    MaxPrincipleReport repc = check_maximum_principle(flat, 0.0);
    CHECK(repc.passed);
    CHECK(repc.max_excess == 0.0);

    // non-divergence evolution with random nonnegative, non-symmetric weights
    EdgeCoefficients b(lat, 0.5, 0.0, 1.0);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (double& v : b.raw()) v = d(rng);
    Trajectory nd;
    nd.lattice = lat;
    std::vector<double> y = u0.values();
    double dt = 0.5 / (4.0 * 1.0 * 1.0 * 16.0 * 16.0);
    double t = 0.0;
    nd.times.push_back(0.0);
    nd.fields.emplace_back(lat, y);
    auto rhs = [&](const std::vector<double>& s) {
        LatticeField f(lat, s);
        return nondivergence_operator_conventional(b, f).values();
    };
    for (int step = 0; step < 200; ++step) {
        auto k1 = rhs(y);
        std::vector<double> tmp(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
        auto k2 = rhs(tmp);
        for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
        auto k3 = rhs(tmp);
        for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + dt * k3[i];
        auto k4 = rhs(tmp);
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        t += dt;
        nd.times.push_back(t);
        nd.fields.emplace_back(lat, y);
    }
    CHECK(check_maximum_principle(nd).passed);
}
