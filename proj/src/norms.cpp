#include "latpde/norms.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "latpde/interpolation.hpp"

namespace latpde {

namespace {

// Spatial candidate list shared by all time nodes: every lattice site, plus
// stratified continuum offsets when interpolating.
struct SpatialCandidates {
    std::vector<SamplePoint> pts;  // ti left at 0; filled per draw
};

SpatialCandidates spatial_candidates(const TorusLattice& lat, bool interpolated, int strat_m) {
    SpatialCandidates c;
    for (std::size_t s = 0; s < lat.num_sites(); ++s) {
        SamplePoint p;
        p.site = s;
        p.z = lat.position_of(s);
        c.pts.push_back(std::move(p));
    }
    if (interpolated) {
        const int n = lat.dim();
        const int N = lat.mesh();
        std::vector<int> off(n, 0);
        auto advance = [&](std::vector<int>& idx) {
            for (int ax = n - 1; ax >= 0; --ax) {
                if (++idx[ax] < strat_m) return true;
                idx[ax] = 0;
            }
            return false;
        };
        for (std::size_t s = 0; s < lat.num_sites(); ++s) {
            std::vector<double> base = lat.position_of(s);
            std::fill(off.begin(), off.end(), 0);
            do {
                SamplePoint p;
                p.site = s;  // cell base; site value unused for continuum points
                p.z = base;
                for (int ax = 0; ax < n; ++ax)
                    p.z[ax] += (off[ax] + 0.5) / (static_cast<double>(strat_m) * N);
                c.pts.push_back(std::move(p));
            } while (advance(off));
        }
    }
    return c;
}

std::vector<std::size_t> eligible_nodes(const Trajectory& traj, double t_floor) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < traj.times.size(); ++i)
        if (traj.times[i] >= t_floor - 1e-15) out.push_back(i);
    if (out.empty()) throw std::invalid_argument("no trajectory nodes at or above t_floor");
    return out;
}

// Evaluates the trajectory field or its direction-wise scaled differences at
// sample points, on the lattice or through the polylinear extension.
class Evaluator {
public:
    Evaluator(const Trajectory& traj, bool interpolated)
        : traj_(traj), interpolated_(interpolated), cache_(traj.fields.size()) {}

    double value(const SamplePoint& p) const {
        if (!interpolated_) return traj_.fields[p.ti][p.site];
        return interp(p.ti)(p.z);
    }

    double gradient(const SamplePoint& p, const Direction& e) const {
        const TorusLattice& L = *traj_.lattice;
        if (!interpolated_) {
            const LatticeField& f = traj_.fields[p.ti];
            return L.mesh() * (f[L.neighbor(p.site, e)] - f[p.site]);
        }
        return interp(p.ti).grad_scaled(e, p.z);
    }

private:
    const InterpolatedField& interp(std::size_t ti) const {
        if (!cache_[ti]) cache_[ti] = std::make_unique<InterpolatedField>(traj_.fields[ti]);
        return *cache_[ti];
    }

    const Trajectory& traj_;
    bool interpolated_;
    mutable std::vector<std::unique_ptr<InterpolatedField>> cache_;
};

double pair_numerator(const Evaluator& ev, const SamplePoint& X, const SamplePoint& Y, int k,
                      int n) {
    if (k == 0) return std::abs(ev.value(X) - ev.value(Y));
    double worst = 0.0;
    for (const Direction& e : positive_directions(n))
        worst = std::max(worst, std::abs(ev.gradient(X, e) - ev.gradient(Y, e)));
    return worst;
}

}  // namespace

PairSet make_space_time_pairs(const Trajectory& traj, bool interpolated, std::size_t max_pairs,
                              std::uint64_t seed, double t_floor, int strat_m) {
    const TorusLattice& L = *traj.lattice;
    SpatialCandidates cand = spatial_candidates(L, interpolated, strat_m);
    std::vector<std::size_t> nodes = eligible_nodes(traj, t_floor);

    PairSet out;
    const std::size_t total = nodes.size() * cand.pts.size();
    if (total * (total - 1) / 2 <= max_pairs) {
        // small case: exhaustive over all distinct point pairs
        for (std::size_t ti : nodes)
            for (const SamplePoint& sp : cand.pts) {
                SamplePoint p = sp;
                p.ti = ti;
                out.points.push_back(std::move(p));
            }
        for (std::uint32_t i = 0; i < out.points.size(); ++i)
            for (std::uint32_t j = i + 1; j < out.points.size(); ++j) out.pairs.emplace_back(i, j);
        return out;
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dn(0, nodes.size() - 1);
    std::uniform_int_distribution<std::size_t> ds(0, cand.pts.size() - 1);
    out.points.reserve(2 * max_pairs);
    while (out.pairs.size() < max_pairs) {
        std::size_t ta = nodes[dn(rng)], tb = nodes[dn(rng)];
        std::size_t sa = ds(rng), sb = ds(rng);
        if (ta == tb && sa == sb) continue;
        SamplePoint A = cand.pts[sa];
        A.ti = ta;
        SamplePoint B = cand.pts[sb];
        B.ti = tb;
        out.points.push_back(std::move(A));
        out.points.push_back(std::move(B));
        out.pairs.emplace_back(static_cast<std::uint32_t>(out.points.size() - 2),
                               static_cast<std::uint32_t>(out.points.size() - 1));
    }
    return out;
}

PairSet make_same_site_pairs(const Trajectory& traj, std::size_t max_pairs, std::uint64_t seed,
                             double t_floor) {
    const TorusLattice& L = *traj.lattice;
    std::vector<std::size_t> nodes = eligible_nodes(traj, t_floor);
    PairSet out;
    const std::size_t total = L.num_sites() * nodes.size() * (nodes.size() - 1) / 2;
    auto push_point = [&](std::size_t ti, std::size_t site) {
        SamplePoint p;
        p.ti = ti;
        p.site = site;
        p.z = L.position_of(site);
        out.points.push_back(std::move(p));
        return static_cast<std::uint32_t>(out.points.size() - 1);
    };
    if (total <= max_pairs) {
        for (std::size_t s = 0; s < L.num_sites(); ++s)
            for (std::size_t i = 0; i < nodes.size(); ++i)
                for (std::size_t j = i + 1; j < nodes.size(); ++j)
                    out.pairs.emplace_back(push_point(nodes[i], s), push_point(nodes[j], s));
        return out;
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dn(0, nodes.size() - 1);
    std::uniform_int_distribution<std::size_t> ds(0, L.num_sites() - 1);
    while (out.pairs.size() < max_pairs) {
        std::size_t ia = dn(rng), ib = dn(rng);
        if (ia == ib) continue;
        std::size_t s = ds(rng);
        out.pairs.emplace_back(push_point(nodes[ia], s), push_point(nodes[ib], s));
    }
    return out;
}

double ck_norm(const LatticeField& u, int k) {
    if (k < 0 || k > 4) throw std::invalid_argument("ck_norm supports k in 0..4");
    const int n = u.lattice().dim();
    double total = u.max_abs();
    std::vector<LatticeField> level{u};
    for (int i = 1; i <= k; ++i) {
        std::vector<LatticeField> next;
        for (const LatticeField& f : level)
            for (const Direction& e : all_directions(n)) {
                next.push_back(grad_forward(f, e));
                total += next.back().max_abs();
            }
        level = std::move(next);
    }
    return total;
}

double holder_seminorm(const Trajectory& traj, const SeminormSpec& spec, const PairSet& pairs) {
    if (pairs.pairs.empty()) throw std::invalid_argument("empty pair set");
    if (spec.flavor != Flavor::Bracket)
        throw std::invalid_argument("holder_seminorm expects the bracket flavor");
    const double alpha = spec.a - spec.k;
    if (!(alpha > 0.0) || alpha > 1.0 + 1e-12)
        throw std::invalid_argument("bracket order must satisfy a = k + alpha, alpha in (0,1]");
    Evaluator ev(traj, spec.interpolated);
    const int n = traj.lattice->dim();
    double best = 0.0;
    for (const auto& [ia, ib] : pairs.pairs) {
        const SamplePoint& X = pairs.points[ia];
        const SamplePoint& Y = pairs.points[ib];
        double tX = traj.times[X.ti], tY = traj.times[Y.ti];
        double dist = std::max(std::sqrt(std::abs(tX - tY)), torus_distance(X.z, Y.z));
        if (dist < 1e-15) continue;
        double w = 1.0;
        if (!spec.unweighted) {
            double dmin = std::sqrt(std::min(tX, tY));
            w = std::pow(dmin, spec.a + spec.b);
        }
        if (w == 0.0) continue;
        double num = pair_numerator(ev, X, Y, spec.k, n);
        best = std::max(best, w * num / std::pow(dist, alpha));
    }
    return best;
}

double time_seminorm(const Trajectory& traj, const SeminormSpec& spec, const PairSet& pairs) {
    if (pairs.pairs.empty()) throw std::invalid_argument("empty pair set");
    Evaluator ev(traj, spec.interpolated);
    const int n = traj.lattice->dim();
    double best = 0.0;
    for (const auto& [ia, ib] : pairs.pairs) {
        const SamplePoint& X = pairs.points[ia];
        const SamplePoint& Y = pairs.points[ib];
        double tX = traj.times[X.ti], tY = traj.times[Y.ti];
        double dt = std::abs(tX - tY);
        if (dt < 1e-15) continue;
        double w = 1.0;
        if (!spec.unweighted) {
            double dmin = std::sqrt(std::min(tX, tY));
            w = std::pow(dmin, spec.a + spec.b);
        }
        if (w == 0.0) continue;
        double num = pair_numerator(ev, X, Y, spec.k, n);
        best = std::max(best, w * num / std::pow(dt, spec.a / 2.0));
    }
    return best;
}

double weighted_sup(const Trajectory& traj, double b, const PairSet& set, int k,
                    bool interpolated) {
    if (set.points.empty()) throw std::invalid_argument("empty sample set");
    Evaluator ev(traj, interpolated);
    const int n = traj.lattice->dim();
    double best = 0.0;
    for (const SamplePoint& p : set.points) {
        double w = std::pow(std::sqrt(traj.times[p.ti]), b);
        if (w == 0.0) continue;
        double v;
        if (k == 0) {
            v = std::abs(ev.value(p));
        } else {
            v = 0.0;
            for (const Direction& e : positive_directions(n))
                v = std::max(v, std::abs(ev.gradient(p, e)));
        }
        best = std::max(best, w * v);
    }
    return best;
}

double oscillation(const Trajectory& traj, const ParabolicCylinder& Q, bool use_interpolation) {
    const TorusLattice& L = *traj.lattice;
    double lo = 1e300, hi = -1e300;
    bool any = false;
    for (std::size_t ti = 0; ti < traj.times.size(); ++ti) {
        double t = traj.times[ti];
        if (t <= Q.t0() + 1e-12 || t > Q.t1() + 1e-12) continue;
        const LatticeField& f = traj.fields[ti];
        for (std::size_t s : Q.interior_sites()) {
            lo = std::min(lo, f[s]);
            hi = std::max(hi, f[s]);
            any = true;
        }
        if (use_interpolation) {
            InterpolatedField ut(f);
            for (const auto& z : stratified_points(L, 2)) {
                if (torus_distance(z, Q.center()) >= Q.radius()) continue;
                double v = ut(z);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                any = true;
            }
        }
    }
    if (!any) throw std::invalid_argument("cylinder contains no trajectory samples");
    return hi - lo;
}

CampanatoProfile campanato_profile(const Trajectory& traj, double t1,
                                   const std::vector<double>& y,
                                   const std::vector<double>& radii, int points_per_cell) {
    const TorusLattice& L = *traj.lattice;
    const int n = L.dim();
    const int res = points_per_cell * L.mesh();  // quadrature points per axis
    const double hq = 1.0 / res;

    CampanatoProfile prof;
    prof.t1 = t1;
    prof.center = y;
    for (double r : radii) {
        if (!(r > 0.0) || !(r * r < t1))
            throw std::invalid_argument("campanato radius must satisfy 0 < r, r^2 < t1");
        // time nodes inside (t1 - r^2, t1]
        std::vector<std::size_t> nodes;
        for (std::size_t ti = 0; ti < traj.times.size(); ++ti)
            if (traj.times[ti] > t1 - r * r - 1e-12 && traj.times[ti] <= t1 + 1e-12)
                nodes.push_back(ti);
        if (nodes.size() < 2) throw std::invalid_argument("cylinder covers fewer than two nodes");

        // spatial quadrature points inside the ball (midpoint rule)
        std::vector<std::vector<double>> zs;
        std::vector<int> idx(n, 0);
        auto advance = [&](std::vector<int>& v) {
            for (int ax = n - 1; ax >= 0; --ax) {
                if (++v[ax] < res) return true;
                v[ax] = 0;
            }
            return false;
        };
        do {
            std::vector<double> z(n);
            for (int ax = 0; ax < n; ++ax) z[ax] = (idx[ax] + 0.5) * hq;
            if (torus_distance(z, y) < r) zs.push_back(std::move(z));
        } while (advance(idx));
        if (zs.empty()) throw std::invalid_argument("empty cylinder at requested radius");

        const double cell = std::pow(hq, n);
        double W = 0.0;
        std::vector<double> mean(n, 0.0);
        double sq = 0.0;
        auto pos = positive_directions(n);
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            double wt;
            if (k == 0)
                wt = 0.5 * (traj.times[nodes[1]] - traj.times[nodes[0]]);
            else if (k + 1 == nodes.size())
                wt = 0.5 * (traj.times[nodes[k]] - traj.times[nodes[k - 1]]);
            else
                wt = 0.5 * (traj.times[nodes[k + 1]] - traj.times[nodes[k - 1]]);
            std::vector<InterpolatedField> grads;
            for (const Direction& e : pos)
                grads.emplace_back(grad_forward(traj.fields[nodes[k]], e));
            for (const auto& z : zs) {
                double w = wt * cell;
                W += w;
                for (int d = 0; d < n; ++d) {
                    double g = grads[d](z);
                    mean[d] += w * g;
                    sq += w * g * g;
                }
            }
        }
        double centered = sq;
        for (int d = 0; d < n; ++d) centered -= mean[d] * mean[d] / W;
        prof.radii.push_back(r);
        prof.omega.push_back(std::max(centered, 0.0));
    }
    return prof;
}

InterpolationInequalityReport interpolation_inequality_check(const Trajectory& traj, double alpha,
                                                             std::size_t max_pairs,
                                                             std::uint64_t seed) {
    if (!(alpha > 0.0) || !(alpha < 1.0))
        throw std::invalid_argument("interpolation inequality needs alpha in (0,1)");
    PairSet pairs = make_space_time_pairs(traj, true, max_pairs, seed);

    InterpolationInequalityReport rep;
    rep.U1 = weighted_sup(traj, 1.0, pairs, 1, true);
    // oscillation over the sampled points
    double lo = 1e300, hi = -1e300;
    Evaluator ev(traj, true);
    for (const SamplePoint& p : pairs.points) {
        double v = ev.value(p);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    rep.osc = hi - lo;

    SeminormSpec star;
    star.a = 1.0 + alpha;
    star.b = 0.0;
    star.k = 1;
    star.interpolated = true;
    rep.bracket_star = holder_seminorm(traj, star, pairs);
    rep.rhs1 = 3.0 * std::pow(rep.osc, alpha / (1.0 + alpha)) *
               std::pow(rep.osc + rep.bracket_star, 1.0 / (1.0 + alpha));
    rep.passed1 = rep.U1 <= rep.rhs1 + 1e-12;

    rep.U2 = weighted_sup(traj, 2.0, pairs, 1, true);
    rep.sup_w1 = weighted_sup(traj, 1.0, pairs, 0, true);
    SeminormSpec w1 = star;
    w1.b = 1.0;
    rep.bracket_w1 = holder_seminorm(traj, w1, pairs);
    rep.rhs2 = 5.0 * std::pow(rep.sup_w1, alpha / (1.0 + alpha)) *
               std::pow(rep.sup_w1 + rep.bracket_w1, 1.0 / (1.0 + alpha));
    rep.passed2 = rep.U2 <= rep.rhs2 + 1e-12;
    return rep;
}

IterationBoundReport iteration_bound(const std::vector<std::pair<double, double>>& omega_samples,
                                     const std::function<double(double)>& sigma, double abar,
                                     double delta, double tau, double R0) {
    if (!(tau > 0.0) || !(tau < 1.0) || !(delta > 0.0) || !(delta < abar))
        throw std::invalid_argument("iteration bound needs 0 < tau < 1 and 0 < delta < abar");
    IterationBoundReport rep;
    std::vector<std::pair<double, double>> om = omega_samples;
    std::sort(om.begin(), om.end());
    if (om.size() < 2) {
        rep.failure = "need at least two omega samples";
        return rep;
    }
    const double tol = 1e-12;
    for (std::size_t i = 0; i + 1 < om.size(); ++i) {
        if (om[i + 1].second < om[i].second - tol) {
            rep.failure = "omega is not increasing at r = " + std::to_string(om[i + 1].first);
            return rep;
        }
    }
    for (std::size_t i = 0; i + 1 < om.size(); ++i) {
        double r0 = om[i].first, r1 = om[i + 1].first;
        if (sigma(r1) < sigma(r0) - tol) {
            rep.failure = "sigma is not increasing at r = " + std::to_string(r1);
            return rep;
        }
        if (sigma(r1) / std::pow(r1, delta) > sigma(r0) / std::pow(r0, delta) + tol) {
            rep.failure = "sigma(r)/r^delta is not nonincreasing at r = " + std::to_string(r1);
            return rep;
        }
    }
    auto omega_at = [&](double r) -> const double* {
        for (const auto& [rr, vv] : om)
            if (std::abs(rr - r) <= 1e-9 * std::max(1.0, r)) return &vv;
        return nullptr;
    };
    // contraction hypothesis wherever both r and tau*r are sampled
    int checked = 0;
    for (const auto& [r, v] : om) {
        if (r > R0 + tol) {
            rep.failure = "sample radius above R0";
            return rep;
        }
        if (const double* vt = omega_at(tau * r)) {
            ++checked;
            if (*vt > std::pow(tau, abar) * v + sigma(r) + tol) {
                rep.failure = "contraction hypothesis fails at r = " + std::to_string(r);
                return rep;
            }
        }
    }
    if (checked == 0) {
        rep.failure = "grid contains no (r, tau r) pairs to check the contraction hypothesis";
        return rep;
    }
    const double* oR0 = omega_at(R0);
    if (!oR0) {
        rep.failure = "R0 must be one of the sampled radii";
        return rep;
    }
    rep.hypotheses_ok = true;
    rep.C = std::max(std::pow(tau, abar),
                     std::pow(tau, -delta) / (std::pow(tau, delta) - std::pow(tau, abar)));
    rep.conclusion_ok = true;
    rep.worst_margin = 1e300;
    for (const auto& [r, v] : om) {
        double bound = rep.C * (std::pow(r / R0, abar) * (*oR0) + sigma(r));
        double margin = bound - v;
        rep.worst_margin = std::min(rep.worst_margin, margin);
        if (margin < -tol) rep.conclusion_ok = false;
    }
    return rep;
}

EnvelopeFit fit_envelope(const std::vector<double>& xs, const std::vector<double>& ys, int bins) {
    EnvelopeFit fit;
    if (xs.size() != ys.size()) throw std::invalid_argument("mismatched sample arrays");
    double lx_min = 1e300, lx_max = -1e300;
    std::vector<std::pair<double, double>> logs;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) continue;
        double lx = std::log(xs[i]);
        logs.emplace_back(lx, std::log(ys[i]));
        lx_min = std::min(lx_min, lx);
        lx_max = std::max(lx_max, lx);
    }
    if (logs.size() < 8 || lx_max - lx_min < 1e-9) return fit;  // degenerate

    std::vector<double> bx(bins, 0.0), by(bins, -1e300);
    std::vector<bool> used(bins, false);
    for (const auto& [lx, ly] : logs) {
        int b = static_cast<int>((lx - lx_min) / (lx_max - lx_min) * bins);
        b = std::clamp(b, 0, bins - 1);
        if (ly > by[b]) {
            by[b] = ly;
            bx[b] = lx;
            used[b] = true;
        }
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    int m = 0;
    for (int b = 0; b < bins; ++b) {
        if (!used[b]) continue;
        ++m;
        sx += bx[b];
        sy += by[b];
        sxx += bx[b] * bx[b];
        sxy += bx[b] * by[b];
        syy += by[b] * by[b];
    }
    if (m < 3) return fit;
    double det = m * sxx - sx * sx;
    if (std::abs(det) < 1e-12) return fit;
    double slope = (m * sxy - sx * sy) / det;
    double inter = (sy - slope * sx) / m;
    double ss_tot = syy - sy * sy / m;
    double ss_res = 0.0;
    for (int b = 0; b < bins; ++b) {
        if (!used[b]) continue;
        double e = by[b] - (slope * bx[b] + inter);
        ss_res += e * e;
    }
    fit.valid = true;
    fit.exponent = slope;
    fit.constant = std::exp(inter);
    fit.r2 = ss_tot > 1e-15 ? 1.0 - ss_res / ss_tot : 1.0;
    fit.bins_used = m;
    return fit;
}

EnvelopeFit fit_holder_exponent(const Trajectory& traj, double t_floor, FitMode mode,
                                std::size_t max_pairs, std::uint64_t seed) {
    const TorusLattice& L = *traj.lattice;
    std::vector<std::size_t> nodes = eligible_nodes(traj, t_floor);
    if (t_floor <= 0.0) throw std::invalid_argument("exponent fit needs t_floor > 0");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dn(0, nodes.size() - 1);
    std::uniform_int_distribution<std::size_t> ds(0, L.num_sites() - 1);
    std::vector<double> xs, ys;
    std::size_t attempts = 0;
    while (xs.size() < max_pairs && attempts < 4 * max_pairs) {
        ++attempts;
        std::size_t ia = dn(rng), ib = dn(rng), sa = ds(rng), sb = ds(rng);
        if (mode == FitMode::Space) ib = ia;
        if (mode == FitMode::Time) sb = sa;
        if (ia == ib && sa == sb) continue;
        double t = traj.times[nodes[ia]], s = traj.times[nodes[ib]];
        double dist = torus_distance(L.position_of(sa), L.position_of(sb));
        double modulus = std::max(std::sqrt(std::abs(t - s)), dist) / std::sqrt(std::min(t, s));
        double diff = std::abs(traj.fields[nodes[ia]][sa] - traj.fields[nodes[ib]][sb]);
        if (modulus <= 0.0 || diff <= 0.0) continue;
        xs.push_back(modulus);
        ys.push_back(diff);
    }
    return fit_envelope(xs, ys);
}

}  // namespace latpde
