#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "latpde/lattice.hpp"

using namespace latpde;

namespace {

LatticeField random_field(LatticePtr lat, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    LatticeField u(lat);
    for (std::size_t s = 0; s < u.size(); ++s) u[s] = d(rng);
    return u;
}

// Random edge weights consistent across edges: assign one value per positive
// edge and mirror it to the opposite endpoint/direction.
EdgeCoefficients random_edge_coefficients(LatticePtr lat, std::mt19937_64& rng,
                                          double lo = 0.5, double hi = 2.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    EdgeCoefficients a(lat, 0.0, lo, hi);
    for (std::size_t s = 0; s < lat->num_sites(); ++s) {
        for (const Direction& e : positive_directions(lat->dim())) {
            double v = d(rng);
            a.at(s, e) = v;
            a.at(lat->neighbor(s, e), e.negated()) = v;
        }
    }
    return a;
}

}  // namespace

TEST_CASE("forward difference on a delta") {
    auto lat = make_lattice(1, 4);
    LatticeField u(lat, std::vector<double>{0, 1, 0, 0});
    LatticeField g = grad_forward(u, Direction{0, +1});
    CHECK(g[0] == 4);
    CHECK(g[1] == -4);
    CHECK(g[2] == 0.0);
    CHECK(g[3] == 0.0);
}

TEST_CASE("forward difference of a constant vanishes") {
    auto lat = make_lattice(2, 8);
    LatticeField u(lat, 3.25);
    for (const Direction& e : all_directions(2)) CHECK(grad_forward(u, e).max_abs() == 0.0);
}

TEST_CASE("dual difference equals negated shifted forward difference") {
    std::mt19937_64 rng(11);
    auto lat = make_lattice(1, 16);
    LatticeField u = random_field(lat, rng);
    Direction e{0, +1};
    LatticeField gd = grad_dual(u, e);
    LatticeField gf = grad_forward(u, e);
    for (std::size_t s = 0; s < u.size(); ++s) {
        std::size_t sm = lat->neighbor(s, e.negated());
        CHECK(gd[s] == -gf[sm]);
    }
}

TEST_CASE("dual difference on a delta") {
    auto lat = make_lattice(1, 4);
    LatticeField u(lat, std::vector<double>{0, 1, 0, 0});
    LatticeField g = grad_dual(u, Direction{0, +1});
    CHECK(g[0] == 0.0);
    CHECK(g[1] == -4);
    CHECK(g[2] == 4);
    CHECK(g[3] == 0.0);
}

TEST_CASE("forward/dual adjointness under the normalized inner product") {
    std::mt19937_64 rng(12);
    for (int n : {1, 2}) {
        auto lat = make_lattice(n, 8);
        LatticeField u = random_field(lat, rng), v = random_field(lat, rng);
        for (const Direction& e : all_directions(n)) {
            double lhs = inner_product(grad_forward(u, e), v);
            double rhs = inner_product(u, grad_dual(v, e));
            CHECK(std::abs(lhs - rhs) < 1e-12 * 8 * 8);
        }
    }
}

TEST_CASE("laplacian on a delta and constant") {
    auto lat = make_lattice(1, 4);
    LatticeField u(lat, std::vector<double>{0, 1, 0, 0});
    LatticeField d = laplacian(u);
    CHECK(d[0] == 16);
    CHECK(d[1] == -32);
    CHECK(d[2] == 16);
    CHECK(d[3] == 0.0);
    CHECK(laplacian(LatticeField(lat, 2.0)).max_abs() == 0.0);
}

TEST_CASE("laplacian sums to zero") {
    std::mt19937_64 rng(13);
    auto lat = make_lattice(2, 8);
    LatticeField u = random_field(lat, rng);
    LatticeField d = laplacian(u);
    double total = 0.0;
    for (std::size_t s = 0; s < d.size(); ++s) total += d[s];
    CHECK(std::abs(total) < 1e-9);
}

TEST_CASE("laplacian equals dual-composition forms") {
    // The stencil form, the positive-direction dual composition, and the
    // all-direction forward sum must agree pointwise.
    std::mt19937_64 rng(14);
    for (int n : {1, 2, 3}) {
        int N = n == 3 ? 8 : 64;
        auto lat = make_lattice(n, N);
        LatticeField u = random_field(lat, rng);
        LatticeField d = laplacian(u);
        LatticeField d2(lat);
        for (const Direction& e : positive_directions(n)) {
            LatticeField t = grad_dual(grad_forward(u, e), e);
            for (std::size_t s = 0; s < u.size(); ++s) d2[s] -= t[s];
        }
        LatticeField d3(lat);
        double N1 = static_cast<double>(N);
        for (const Direction& e : all_directions(n)) {
            LatticeField g = grad_forward(u, e);
            for (std::size_t s = 0; s < u.size(); ++s) d3[s] += N1 * g[s];
        }
        for (std::size_t s = 0; s < u.size(); ++s) {
            CHECK(std::abs(d[s] - d2[s]) < 1e-12 * N * N);
            CHECK(std::abs(d[s] - d3[s]) < 1e-12 * N * N);
        }
    }
}

TEST_CASE("divergence operator with unit weights is the laplacian") {
    std::mt19937_64 rng(15);
    auto lat = make_lattice(2, 8);
    LatticeField u = random_field(lat, rng);
    EdgeCoefficients ones(lat, 1.0, 1.0, 1.0);
    LatticeField lhs = divergence_operator(ones, u);
    LatticeField rhs = laplacian(u);
    for (std::size_t s = 0; s < u.size(); ++s) CHECK(lhs[s] == rhs[s]);
}

TEST_CASE("divergence operator is self-adjoint and matches the energy form") {
    std::mt19937_64 rng(16);
    auto lat = make_lattice(2, 8);
    EdgeCoefficients a = random_edge_coefficients(lat, rng);
    LatticeField u = random_field(lat, rng), v = random_field(lat, rng);
    LatticeField Lu = divergence_operator(a, u), Lv = divergence_operator(a, v);
    CHECK(std::abs(inner_product(Lu, v) - inner_product(u, Lv)) < 1e-12 * 64 * 2);
    CHECK(std::abs(dirichlet_form(a, u, u) + inner_product(Lu, u)) < 1e-12 * 64 * 4);
}

TEST_CASE("divergence operator equals the half-sum dual form") {
    // N^2 sum_{|e|=1} a_{x,e}(u(x+e)-u(x)) == -1/2 sum_{|e|=1} grad_dual_e(a grad_e u)
    std::mt19937_64 rng(17);
    auto lat = make_lattice(2, 8);
    const double N = 8;
    EdgeCoefficients a = random_edge_coefficients(lat, rng);
    LatticeField u = random_field(lat, rng);
    LatticeField lhs = divergence_operator(a, u);
    LatticeField rhs(lat);
    for (const Direction& e : all_directions(2)) {
        // field F_e(x) = a_{x,e} grad_e u(x)
        LatticeField F(lat);
        LatticeField g = grad_forward(u, e);
        for (std::size_t s = 0; s < u.size(); ++s) F[s] = a.at(s, e) * g[s];
        for (std::size_t s = 0; s < u.size(); ++s) {
            std::size_t sm = lat->neighbor(s, e.negated());
            rhs[s] -= 0.5 * N * (F[sm] - F[s]);
        }
    }
    for (std::size_t s = 0; s < u.size(); ++s) CHECK(std::abs(lhs[s] - rhs[s]) < 1e-10 * N * N);
}

TEST_CASE("divergence operator rejects inconsistent edge weights") {
    auto lat = make_lattice(1, 4);
    EdgeCoefficients a(lat, 1.0, 0.5, 2.0);
    a.at(0, Direction{0, +1}) = 1.5;  // mirror at site 1, -e left at 1.0
    LatticeField u(lat, 0.0);
    CHECK_THROWS_AS(divergence_operator(a, u), std::invalid_argument);
}

TEST_CASE("constant-coefficient laplacian: unit weights, product rule, anisotropic stencil") {
    std::mt19937_64 rng(18);
    auto lat = make_lattice(2, 8);
    LatticeField u = random_field(lat, rng), v = random_field(lat, rng);

    ConstantCoefficients ones(2, 1.0);
    LatticeField l1 = constant_laplacian(ones, u), l2 = laplacian(u);
    for (std::size_t s = 0; s < u.size(); ++s) CHECK(l1[s] == doctest::Approx(l2[s]).epsilon(1e-14));

    // product rule: D_a(uv) - u D_a v - v D_a u = sum_e a_e grad_e u grad_e v
    ConstantCoefficients a(2, std::vector<double>{1.0, 1.0, 2.0, 2.0});
    LatticeField uv(lat);
    for (std::size_t s = 0; s < u.size(); ++s) uv[s] = u[s] * v[s];
    LatticeField lhs = constant_laplacian(a, uv);
    LatticeField du = constant_laplacian(a, u), dv = constant_laplacian(a, v);
    LatticeField rhs(lat);
    for (const Direction& e : all_directions(2)) {
        LatticeField gu = grad_forward(u, e), gv = grad_forward(v, e);
        for (std::size_t s = 0; s < u.size(); ++s) rhs[s] += a.at(e) * gu[s] * gv[s];
    }
    for (std::size_t s = 0; s < u.size(); ++s) {
        double res = lhs[s] - u[s] * dv[s] - v[s] * du[s] - rhs[s];
        CHECK(std::abs(res) < 1e-10 * 64);
    }

    // anisotropic weights on a delta: stencil value checked by hand
    auto lat4 = make_lattice(2, 4);
    LatticeField delta(lat4, 0.0);
    delta[lat4->index_of({1, 1})] = 1.0;
    LatticeField ld = constant_laplacian(ConstantCoefficients(2, {1.0, 1.0, 2.0, 2.0}), delta);
    // at the center: 16 * (1*(0-1)+1*(0-1)+2*(0-1)+2*(0-1)) = -96
    CHECK(ld[lat4->index_of({1, 1})] == doctest::Approx(-96.0));
    // axis-0 neighbors carry weight 1, axis-1 neighbors weight 2
    CHECK(ld[lat4->index_of({0, 1})] == doctest::Approx(16.0));
    CHECK(ld[lat4->index_of({2, 1})] == doctest::Approx(16.0));
    CHECK(ld[lat4->index_of({1, 0})] == doctest::Approx(32.0));
    CHECK(ld[lat4->index_of({1, 2})] == doctest::Approx(32.0));
}

TEST_CASE("constant laplacian rejects odd weights") {
    auto lat = make_lattice(1, 4);
    CHECK_THROWS_AS(constant_laplacian(ConstantCoefficients(1, {1.0, 2.0}), LatticeField(lat, 0.0)),
                    std::invalid_argument);
}

TEST_CASE("non-divergence operator sign convention and stencil") {
    std::mt19937_64 rng(19);
    auto lat = make_lattice(2, 8);
    LatticeField u = random_field(lat, rng);

    // weights 1/2 in every direction reproduce the negated laplacian
    EdgeCoefficients half(lat, 0.5, 0.5, 0.5);
    LatticeField lhs = nondivergence_operator(half, u);
    LatticeField neg = laplacian(u);
    for (std::size_t s = 0; s < u.size(); ++s)
        CHECK(std::abs(lhs[s] + neg[s]) < 1e-10 * 64);

    CHECK(nondivergence_operator(half, LatticeField(lat, 7.0)).max_abs() == 0.0);

    // random nonnegative weights on a delta: hand stencil at one site
    auto lat4 = make_lattice(1, 4);
    EdgeCoefficients b(lat4, 0.0, 0.0, 10.0);
    std::uniform_real_distribution<double> d(0.0, 2.0);
    for (std::size_t s = 0; s < 4; ++s)
        for (const Direction& e : all_directions(1)) b.at(s, e) = d(rng);
    LatticeField delta(lat4, std::vector<double>{0, 1, 0, 0});
    LatticeField out = nondivergence_operator(b, delta);
    Direction ep{0, +1}, em{0, -1};
    // at site 0 only the second difference through the +e neighbor is nonzero
    double exp0 = 16.0 * (b.at(0, ep) + b.at(0, em)) * (-1.0);
    CHECK(out[0] == doctest::Approx(exp0).epsilon(1e-12));
    double exp1 = 16.0 * (b.at(1, ep) + b.at(1, em)) * 2.0;
    CHECK(out[1] == doctest::Approx(exp1).epsilon(1e-12));
    // the conventional helper is the exact negation
    LatticeField conv = nondivergence_operator_conventional(b, delta);
    for (std::size_t s = 0; s < 4; ++s) CHECK(conv[s] == -out[s]);
}

TEST_CASE("inner product basics") {
    auto lat = make_lattice(1, 4);
    LatticeField u(lat, std::vector<double>{0, 1, 0, 0});
    CHECK(inner_product(u, u) == 0.25);
    LatticeField one(lat, 1.0);
    std::mt19937_64 rng(20);
    LatticeField w = random_field(lat, rng);
    double mean = 0;
    for (std::size_t s = 0; s < 4; ++s) mean += w[s] / 4;
    CHECK(inner_product(w, one) == doctest::Approx(mean).epsilon(1e-15));
    // bilinearity
    LatticeField v = random_field(lat, rng);
    LatticeField combo(lat);
    for (std::size_t s = 0; s < 4; ++s) combo[s] = 2.0 * w[s] + 3.0 * v[s];
    CHECK(std::abs(inner_product(combo, u) - 2 * inner_product(w, u) - 3 * inner_product(v, u)) <
          1e-12);
}

TEST_CASE("energy form hand value and lower bound") {
    auto lat = make_lattice(1, 4);
    EdgeCoefficients ones(lat, 1.0, 1.0, 1.0);
    LatticeField u(lat, std::vector<double>{0, 1, 0, 0});
    CHECK(dirichlet_form(ones, u, u) == doctest::Approx(8.0).epsilon(1e-14));
    CHECK(dirichlet_form(ones, LatticeField(lat, 5.0), LatticeField(lat, 5.0)) == 0.0);

    std::mt19937_64 rng(21);
    auto lat8 = make_lattice(2, 8);
    EdgeCoefficients a = random_edge_coefficients(lat8, rng, 0.5, 2.0);
    LatticeField w = random_field(lat8, rng);
    CHECK(dirichlet_form(a, w, w) >= 0.5 * dirichlet_form(EdgeCoefficients(lat8, 1.0, 1.0, 1.0), w, w) - 1e-12);
}

TEST_CASE("summation by parts: full torus, ball domain, quadratic form") {
    std::mt19937_64 rng(22);
    for (int n : {1, 2}) {
        auto lat = make_lattice(n, 8);
        LatticeField F = random_field(lat, rng), G = random_field(lat, rng);
        SiteMask full(lat->num_sites(), 1);
        for (const Direction& e : all_directions(n))
            CHECK(sbp_residual(F, G, full, e, SbpMode::Plain) < 1e-12 * 8 * lat->num_sites());

        // discrete ball around the center, F cut to zero outside and on the rim
        SiteMask ball(lat->num_sites(), 0);
        std::vector<double> ctr(n, 0.5);
        for (std::size_t s = 0; s < lat->num_sites(); ++s)
            ball[s] = torus_distance(lat->position_of(s), ctr) < 0.3 ? 1 : 0;
        LatticeField Fc = F;
        for (std::size_t s = 0; s < lat->num_sites(); ++s)
            if (!ball[s]) Fc[s] = 0.0;
        LatticeField abar = random_field(lat, rng, 0.5, 2.0);
        EdgeCoefficients a = random_edge_coefficients(lat, rng);
        for (const Direction& e : all_directions(n)) {
            CHECK(sbp_residual(Fc, G, ball, e, SbpMode::Plain) < 1e-11 * 8 * lat->num_sites());
            CHECK(sbp_residual(Fc, G, ball, e, SbpMode::Weighted, &abar) <
                  1e-11 * 8 * lat->num_sites());
        }
        CHECK(sbp_residual(Fc, G, ball, Direction{0, +1}, SbpMode::Quadratic, nullptr, &a) <
              1e-10 * 64 * lat->num_sites());

        // F nonzero on the rim is a precondition violation
        CHECK_THROWS_AS(sbp_residual(F, G, ball, Direction{0, +1}, SbpMode::Plain),
                        std::invalid_argument);
    }
}

TEST_CASE("difference operators commute with each other and with shifts") {
    std::mt19937_64 rng(23);
    auto lat = make_lattice(2, 8);
    LatticeField u = random_field(lat, rng);
    Direction e{0, +1}, ep{1, -1};
    LatticeField a = grad_forward(grad_forward(u, ep), e);
    LatticeField b = grad_forward(grad_forward(u, e), ep);
    for (std::size_t s = 0; s < u.size(); ++s) CHECK(std::abs(a[s] - b[s]) < 1e-10 * 64);
    // shift by an arbitrary vector, then difference == difference, then shift
    std::vector<int> shift{3, 5};
    LatticeField g = grad_forward(u, e);
    for (std::size_t s = 0; s < u.size(); ++s) {
        std::size_t t = lat->shifted(s, shift);
        double lhs = 8.0 * (u[lat->neighbor(t, e)] - u[t]);
        CHECK(lhs == g[t]);
    }
}

TEST_CASE("first-order product rules") {
    std::mt19937_64 rng(24);
    auto lat = make_lattice(2, 16);
    LatticeField u = random_field(lat, rng), v = random_field(lat, rng);
    for (const Direction& e : all_directions(2)) {
        LatticeField gu = grad_forward(u, e), gv = grad_forward(v, e);
        LatticeField uv(lat), u2(lat);
        for (std::size_t s = 0; s < u.size(); ++s) { uv[s] = u[s] * v[s]; u2[s] = u[s] * u[s]; }
        LatticeField guv = grad_forward(uv, e), gu2 = grad_forward(u2, e);
        for (std::size_t s = 0; s < u.size(); ++s) {
            std::size_t sp = lat->neighbor(s, e);
            // asymmetric form
            CHECK(std::abs(guv[s] - (v[sp] * gu[s] + u[s] * gv[s])) < 1e-10 * 256);
            // symmetrized form
            double sym = 0.5 * ((u[s] + u[sp]) * gv[s] + (v[s] + v[sp]) * gu[s]);
            CHECK(std::abs(guv[s] - sym) < 1e-10 * 256);
            // square rule
            CHECK(std::abs(gu2[s] - (u[s] + u[sp]) * gu[s]) < 1e-10 * 256);
        }
    }
}

TEST_CASE("torus distance") {
    CHECK(torus_distance({0.1}, {0.9}) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(torus_distance({0.0, 0.0}, {0.5, 0.5}) == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));
    CHECK(torus_distance_linf({0.1, 0.4}, {0.95, 0.6}) == doctest::Approx(0.2).epsilon(1e-12));
    std::mt19937_64 rng(25);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> a{d(rng), d(rng)}, b{d(rng), d(rng)}, c{d(rng), d(rng)};
        CHECK(torus_distance(a, a) == 0.0);
        CHECK(torus_distance(a, b) == doctest::Approx(torus_distance(b, a)).epsilon(1e-14));
        CHECK(torus_distance(a, c) <= torus_distance(a, b) + torus_distance(b, c) + 1e-12);
    }
}

TEST_CASE("field csv round trip") {
    std::mt19937_64 rng(26);
    auto lat = make_lattice(2, 4);
    LatticeField u = random_field(lat, rng);
    std::string path = "test_field_roundtrip.csv";
    dump_field_csv(u, path);
    LatticeField v = load_field_csv(lat, path);
    for (std::size_t s = 0; s < u.size(); ++s) CHECK(u[s] == v[s]);
    std::remove(path.c_str());
}
