#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "latpde/interpolation.hpp"
#include "latpde/lattice.hpp"

using namespace latpde;

namespace {

LatticeField random_field(LatticePtr lat, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    LatticeField u(lat);
    for (std::size_t s = 0; s < u.size(); ++s) u[s] = d(rng);
    return u;
}

std::vector<std::vector<double>> random_points(int n, int count, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    std::vector<std::vector<double>> pts(count, std::vector<double>(n));
    for (auto& p : pts)
        for (double& x : p) x = d(rng);
    return pts;
}

}  // namespace

TEST_CASE("midpoint value and lattice-point agreement") {
    auto lat = make_lattice(1, 4);
    LatticeField u(lat, std::vector<double>{0, 1, 0, 0});
    InterpolatedField ut = interpolate(u);
    CHECK(ut({0.125}) == doctest::Approx(0.5).epsilon(1e-15));
    for (std::size_t s = 0; s < u.size(); ++s)
        CHECK(ut(lat->position_of(s)) == doctest::Approx(u[s]).epsilon(1e-15));
}

TEST_CASE("2d box center averages the four corners") {
    std::mt19937_64 rng(31);
    auto lat = make_lattice(2, 4);
    LatticeField u = random_field(lat, rng);
    InterpolatedField ut = interpolate(u);
    double ctr = ut({0.125, 0.125});
    double mean = (u[lat->index_of({0, 0})] + u[lat->index_of({0, 1})] +
                   u[lat->index_of({1, 0})] + u[lat->index_of({1, 1})]) / 4.0;
    CHECK(ctr == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("convexity, periodicity, linearity") {
    std::mt19937_64 rng(32);
    auto lat = make_lattice(2, 8);
    LatticeField u = random_field(lat, rng), v = random_field(lat, rng);
    InterpolatedField ut = interpolate(u), vt = interpolate(v);
    LatticeField combo(lat);
    for (std::size_t s = 0; s < u.size(); ++s) combo[s] = 1.5 * u[s] - 0.25 * v[s];
    InterpolatedField ct = interpolate(combo);
    for (const auto& z : random_points(2, 300, rng)) {
        double val = ut(z);
        CHECK(val >= u.min() - 1e-14);
        CHECK(val <= u.max() + 1e-14);
        std::vector<double> zs{z[0] + 1.0, z[1] - 2.0};
        CHECK(ut(zs) == doctest::Approx(val).epsilon(1e-12));
        CHECK(ct(z) == doctest::Approx(1.5 * ut(z) - 0.25 * vt(z)).epsilon(1e-12));
    }
}

TEST_CASE("sampled sup of the interpolation equals the lattice sup") {
    std::mt19937_64 rng(33);
    auto lat = make_lattice(2, 8);
    LatticeField u = random_field(lat, rng);
    InterpolatedField ut = interpolate(u);
    double sup = 0.0;
    for (const auto& z : stratified_points(*lat, 4)) sup = std::max(sup, std::abs(ut(z)));
    CHECK(sup == doctest::Approx(u.max_abs()).epsilon(1e-14));
}

TEST_CASE("1d partial derivative is the per-cell difference quotient") {
    std::mt19937_64 rng(34);
    auto lat = make_lattice(1, 8);
    LatticeField u = random_field(lat, rng);
    InterpolatedField ut = interpolate(u);
    LatticeField g = grad_forward(u, Direction{0, +1});
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        double z = d(rng);
        int cell = static_cast<int>(std::floor(z * 8)) % 8;
        CHECK(ut.partial(0, {z}) == doctest::Approx(g[cell]).epsilon(1e-12));
    }
}

TEST_CASE("partial derivative: finite-difference cross-check and convexity bound") {
    std::mt19937_64 rng(35);
    auto lat = make_lattice(2, 8);
    LatticeField u = random_field(lat, rng);
    InterpolatedField ut = interpolate(u);
    std::uniform_real_distribution<double> d(0.01, 0.99);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> z{d(rng), d(rng)};
        for (int ax = 0; ax < 2; ++ax) {
            // keep clear of cell faces so the centered stencil stays in one cell
            double fr = z[ax] * 8 - std::floor(z[ax] * 8);
            if (fr < 1e-3 || fr > 1.0 - 1e-3) continue;
            const double h = 1e-7;
            std::vector<double> zp = z, zm = z;
            zp[ax] += h;
            zm[ax] -= h;
            double fd = (ut(zp) - ut(zm)) / (2 * h);
            double an = ut.partial(ax, z);
            CHECK(an == doctest::Approx(fd).epsilon(1e-5));

            // convex-combination bound by the adjacent difference quotients
            LatticeField g = grad_forward(u, Direction{ax, +1});
            InterpolatedField gt = interpolate(g);
            std::vector<int> base(2);
            base[0] = static_cast<int>(std::floor(z[0] * 8)) % 8;
            base[1] = static_cast<int>(std::floor(z[1] * 8)) % 8;
            double lo = 1e300, hi = -1e300;
            for (int o = 0; o < 2; ++o) {
                std::vector<int> c = base;
                c[1 - ax] = (c[1 - ax] + o) % 8;
                lo = std::min(lo, g[lat->index_of(c)]);
                hi = std::max(hi, g[lat->index_of(c)]);
            }
            CHECK(an >= lo - 1e-12);
            CHECK(an <= hi + 1e-12);
        }
    }
}

TEST_CASE("difference quotient commutes with interpolation") {
    std::mt19937_64 rng(36);
    for (int n : {1, 2}) {
        auto lat = make_lattice(n, 8);
        LatticeField u = random_field(lat, rng);
        auto pts = random_points(n, 100, rng);
        for (const Direction& e : all_directions(n))
            CHECK(grad_commute_residual(u, e, pts) < 1e-12 * 8 * 2);
        // at lattice points both sides are the same table lookup
        std::vector<std::vector<double>> lp;
        for (std::size_t s = 0; s < lat->num_sites(); ++s) lp.push_back(lat->position_of(s));
        for (const Direction& e : all_directions(n))
            CHECK(grad_commute_residual(u, e, lp) < 1e-12 * 8 * 2);
    }
}
