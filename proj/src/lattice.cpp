#include "latpde/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace latpde {

std::vector<Direction> all_directions(int n) {
    std::vector<Direction> out;
    out.reserve(2 * n);
    for (int ax = 0; ax < n; ++ax) {
        out.push_back(Direction{ax, +1});
        out.push_back(Direction{ax, -1});
    }
    return out;
}

std::vector<Direction> positive_directions(int n) {
    std::vector<Direction> out;
    out.reserve(n);
    for (int ax = 0; ax < n; ++ax) out.push_back(Direction{ax, +1});
    return out;
}

TorusLattice::TorusLattice(int n, int N) : n_(n), N_(N) {
    if (n < 1 || n > 3) throw std::invalid_argument("lattice dimension must be in [1,3]");
    if (N < 1) throw std::invalid_argument("mesh count must be positive");
    sites_ = 1;
    for (int i = 0; i < n; ++i) sites_ *= static_cast<std::size_t>(N);
    if (sites_ > (std::size_t{1} << 31)) throw std::invalid_argument("lattice too large");

    nbr_.resize(sites_ * 2 * n_);
    std::vector<int> c(n_, 0);
    for (std::size_t s = 0; s < sites_; ++s) {
        for (int ax = 0; ax < n_; ++ax) {
            std::vector<int> cp = c;
            cp[ax] = (c[ax] + 1) % N_;
            nbr_[s * 2 * n_ + 2 * ax] = static_cast<std::uint32_t>(index_of(cp));
            cp[ax] = (c[ax] - 1 + N_) % N_;
            nbr_[s * 2 * n_ + 2 * ax + 1] = static_cast<std::uint32_t>(index_of(cp));
        }
        // advance row-major coordinates (last axis fastest)
        for (int ax = n_ - 1; ax >= 0; --ax) {
            if (++c[ax] < N_) break;
            c[ax] = 0;
        }
    }
}

std::size_t TorusLattice::shifted(std::size_t site, const std::vector<int>& shift) const {
    std::vector<int> c = coords_of(site);
    for (int ax = 0; ax < n_; ++ax) {
        int v = (c[ax] + shift[ax]) % N_;
        if (v < 0) v += N_;
        c[ax] = v;
    }
    return index_of(c);
}

std::size_t TorusLattice::index_of(const std::vector<int>& coords) const {
    std::size_t idx = 0;
    for (int ax = 0; ax < n_; ++ax) idx = idx * N_ + static_cast<std::size_t>(coords[ax]);
    return idx;
}

std::vector<int> TorusLattice::coords_of(std::size_t site) const {
    std::vector<int> c(n_);
    for (int ax = n_ - 1; ax >= 0; --ax) {
        c[ax] = static_cast<int>(site % N_);
        site /= N_;
    }
    return c;
}

std::vector<double> TorusLattice::position_of(std::size_t site) const {
    std::vector<int> c = coords_of(site);
    std::vector<double> z(n_);
    for (int ax = 0; ax < n_; ++ax) z[ax] = static_cast<double>(c[ax]) / N_;
    return z;
}

LatticePtr make_lattice(int n, int N) { return std::make_shared<TorusLattice>(n, N); }

LatticeField::LatticeField(LatticePtr lat, double fill)
    : lat_(std::move(lat)), v_(lat_->num_sites(), fill) {}

LatticeField::LatticeField(LatticePtr lat, std::vector<double> values)
    : lat_(std::move(lat)), v_(std::move(values)) {
    if (v_.size() != lat_->num_sites()) throw std::invalid_argument("value count != site count");
}

double LatticeField::min() const { return *std::min_element(v_.begin(), v_.end()); }
double LatticeField::max() const { return *std::max_element(v_.begin(), v_.end()); }
double LatticeField::max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
}

EdgeCoefficients::EdgeCoefficients(LatticePtr lat, double fill, double c_minus, double c_plus)
    : lat_(std::move(lat)), v_(lat_->num_sites() * 2 * lat_->dim(), fill),
      c_minus_(c_minus), c_plus_(c_plus) {}

double EdgeCoefficients::symmetry_defect() const {
    double worst = 0.0;
    const auto& L = *lat_;
    for (std::size_t s = 0; s < L.num_sites(); ++s) {
        for (const Direction& d : all_directions(L.dim())) {
            std::size_t t = L.neighbor(s, d);
            worst = std::max(worst, std::abs(at(s, d) - at(t, d.negated())));
        }
    }
    return worst;
}

void EdgeCoefficients::validate(double tol) const {
    if (symmetry_defect() > tol)
        throw std::invalid_argument("edge coefficients not consistent across edges");
    for (double x : v_) {
        if (x < c_minus_ - 1e-14 || x > c_plus_ + 1e-14)
            throw std::invalid_argument("edge coefficient outside declared bounds");
    }
}

ConstantCoefficients::ConstantCoefficients(int n, double fill) : n_(n), v_(2 * n, fill) {}

ConstantCoefficients::ConstantCoefficients(int n, std::vector<double> per_direction)
    : n_(n), v_(std::move(per_direction)) {
    if (v_.size() != static_cast<std::size_t>(2 * n))
        throw std::invalid_argument("need one weight per signed direction");
}

void ConstantCoefficients::validate() const {
    for (int ax = 0; ax < n_; ++ax) {
        if (v_[2 * ax] != v_[2 * ax + 1])
            throw std::invalid_argument("constant coefficients must be even in the direction");
    }
}

LatticeField grad_forward(const LatticeField& u, const Direction& e) {
    const TorusLattice& L = u.lattice();
    const double N = static_cast<double>(L.mesh());
    LatticeField out(u.lattice_ptr());
    for (std::size_t s = 0; s < L.num_sites(); ++s)
        out[s] = N * (u[L.neighbor(s, e)] - u[s]);
    return out;
}

LatticeField grad_dual(const LatticeField& u, const Direction& e) {
    return grad_forward(u, e.negated());
}

LatticeField laplacian(const LatticeField& u) {
    const TorusLattice& L = u.lattice();
    const double N2 = static_cast<double>(L.mesh()) * L.mesh();
    LatticeField out(u.lattice_ptr());
    const auto dirs = all_directions(L.dim());
    for (std::size_t s = 0; s < L.num_sites(); ++s) {
        double acc = 0.0;
        for (const Direction& e : dirs) acc += u[L.neighbor(s, e)] - u[s];
        out[s] = N2 * acc;
    }
    return out;
}

LatticeField divergence_operator(const EdgeCoefficients& a, const LatticeField& u) {
    if (!a.lattice().same_as(u.lattice())) throw std::invalid_argument("lattice mismatch");
    a.validate(1e-12);
    const TorusLattice& L = u.lattice();
    const double N2 = static_cast<double>(L.mesh()) * L.mesh();
    LatticeField out(u.lattice_ptr());
    const auto dirs = all_directions(L.dim());
    for (std::size_t s = 0; s < L.num_sites(); ++s) {
        double acc = 0.0;
        for (const Direction& e : dirs) acc += a.at(s, e) * (u[L.neighbor(s, e)] - u[s]);
        out[s] = N2 * acc;
    }
    return out;
}

LatticeField constant_laplacian(const ConstantCoefficients& a, const LatticeField& u) {
    a.validate();
    const TorusLattice& L = u.lattice();
    if (a.dim() != L.dim()) throw std::invalid_argument("dimension mismatch");
    const double N2 = static_cast<double>(L.mesh()) * L.mesh();
    LatticeField out(u.lattice_ptr());
    const auto dirs = all_directions(L.dim());
    for (std::size_t s = 0; s < L.num_sites(); ++s) {
        double acc = 0.0;
        for (const Direction& e : dirs) acc += a.at(e) * (u[L.neighbor(s, e)] - u[s]);
        out[s] = N2 * acc;
    }
    return out;
}

LatticeField nondivergence_operator(const EdgeCoefficients& a, const LatticeField& u) {
    if (!a.lattice().same_as(u.lattice())) throw std::invalid_argument("lattice mismatch");
    const TorusLattice& L = u.lattice();
    const double N2 = static_cast<double>(L.mesh()) * L.mesh();
    LatticeField out(u.lattice_ptr());
    const auto dirs = all_directions(L.dim());
    for (std::size_t s = 0; s < L.num_sites(); ++s) {
        double acc = 0.0;
        // grad_dual_e grad_e u(x) = -N^2 (u(x+e) - 2u(x) + u(x-e))
        for (const Direction& e : dirs) {
            double second = u[L.neighbor(s, e)] - 2.0 * u[s] + u[L.neighbor(s, e.negated())];
            acc += a.at(s, e) * (-second);
        }
        out[s] = N2 * acc;
    }
    return out;
}

LatticeField nondivergence_operator_conventional(const EdgeCoefficients& a, const LatticeField& u) {
    LatticeField out = nondivergence_operator(a, u);
    for (double& x : out.values()) x = -x;
    return out;
}

double inner_product(const LatticeField& u, const LatticeField& v) {
    if (!u.lattice().same_as(v.lattice())) throw std::invalid_argument("lattice mismatch");
    double acc = 0.0;
    for (std::size_t s = 0; s < u.size(); ++s) acc += u[s] * v[s];
    return acc / static_cast<double>(u.size());
}

double dirichlet_form(const EdgeCoefficients& a, const LatticeField& u, const LatticeField& v) {
    const TorusLattice& L = u.lattice();
    const double N = static_cast<double>(L.mesh());
    const auto dirs = all_directions(L.dim());
    double acc = 0.0;
    for (std::size_t s = 0; s < L.num_sites(); ++s) {
        for (const Direction& e : dirs) {
            std::size_t t = L.neighbor(s, e);
            acc += a.at(s, e) * (N * (u[t] - u[s])) * (N * (v[t] - v[s]));
        }
    }
    return acc / (2.0 * static_cast<double>(L.num_sites()));
}

SiteMask outer_boundary(const TorusLattice& lat, const SiteMask& lambda) {
    SiteMask out(lat.num_sites(), 0);
    const auto dirs = all_directions(lat.dim());
    for (std::size_t s = 0; s < lat.num_sites(); ++s) {
        if (lambda[s]) continue;
        for (const Direction& e : dirs) {
            if (lambda[lat.neighbor(s, e)]) { out[s] = 1; break; }
        }
    }
    return out;
}

double sbp_residual(const LatticeField& F, const LatticeField& G, const SiteMask& lambda,
                    const Direction& e, SbpMode mode,
                    const LatticeField* abar, const EdgeCoefficients* a) {
    const TorusLattice& L = F.lattice();
    if (!L.same_as(G.lattice())) throw std::invalid_argument("lattice mismatch");
    if (lambda.size() != L.num_sites()) throw std::invalid_argument("mask size mismatch");

    SiteMask bdry = outer_boundary(L, lambda);
    for (std::size_t s = 0; s < L.num_sites(); ++s) {
        if (bdry[s] && F[s] != 0.0)
            throw std::invalid_argument("F must vanish on the outer boundary of the domain");
    }

    const double N = static_cast<double>(L.mesh());
    auto weighted_G = [&](std::size_t s) {
        double g = G[s];
        if (mode == SbpMode::Weighted) g *= (*abar)[s];
        return g;
    };

    double lhs = 0.0, rhs = 0.0;
    if (mode == SbpMode::Quadratic) {
        if (a == nullptr) throw std::invalid_argument("quadratic mode needs edge coefficients");
        const auto pos = positive_directions(L.dim());
        for (std::size_t s = 0; s < L.num_sites(); ++s) {
            if (!lambda[s]) continue;
            for (const Direction& d : pos) {
                // grad_dual_d (a grad_d G)(x) = N * (a_{x-d,d} grad_d G(x-d) - a_{x,d} grad_d G(x))
                std::size_t sm = L.neighbor(s, d.negated());
                std::size_t sp = L.neighbor(s, d);
                double gfwd_here = N * (G[sp] - G[s]);
                double gfwd_prev = N * (G[s] - G[sm]);
                lhs += F[s] * N * (a->at(sm, d) * gfwd_prev - a->at(s, d) * gfwd_here);
            }
        }
        for (std::size_t s = 0; s < L.num_sites(); ++s) {
            for (const Direction& d : pos) {
                std::size_t sp = L.neighbor(s, d);
                if (!lambda[s] && !lambda[sp]) continue;
                double gF = N * (F[sp] - F[s]);
                double gG = N * (G[sp] - G[s]);
                rhs += a->at(s, d) * gF * gG;
            }
        }
    } else {
        if (mode == SbpMode::Weighted && abar == nullptr)
            throw std::invalid_argument("weighted mode needs a per-site weight");
        for (std::size_t s = 0; s < L.num_sites(); ++s) {
            if (!lambda[s]) continue;
            std::size_t sm = L.neighbor(s, e.negated());
            lhs += F[s] * N * (weighted_G(sm) - weighted_G(s));
        }
        for (std::size_t s = 0; s < L.num_sites(); ++s) {
            std::size_t sp = L.neighbor(s, e);
            if (!lambda[s] && !lambda[sp]) continue;
            double w = (mode == SbpMode::Weighted) ? (*abar)[s] : 1.0;
            rhs += N * (F[sp] - F[s]) * w * G[s];
        }
    }
    return std::abs(lhs - rhs);
}

double torus_distance(const std::vector<double>& z1, const std::vector<double>& z2) {
    double acc = 0.0;
    for (std::size_t i = 0; i < z1.size(); ++i) {
        double d = std::abs(z1[i] - z2[i]);
        d -= std::floor(d);  // reduce to [0,1)
        d = std::min(d, 1.0 - d);
        acc += d * d;
    }
    return std::sqrt(acc);
}

double torus_distance_linf(const std::vector<double>& z1, const std::vector<double>& z2) {
    double m = 0.0;
    for (std::size_t i = 0; i < z1.size(); ++i) {
        double d = std::abs(z1[i] - z2[i]);
        d -= std::floor(d);
        d = std::min(d, 1.0 - d);
        m = std::max(m, d);
    }
    return m;
}

void dump_field_csv(const LatticeField& u, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const TorusLattice& L = u.lattice();
    for (int ax = 0; ax < L.dim(); ++ax) out << "x" << ax << ",";
    out << "value\n";
    out.precision(17);
    for (std::size_t s = 0; s < L.num_sites(); ++s) {
        auto c = L.coords_of(s);
        for (int v : c) out << v << ",";
        out << u[s] << "\n";
    }
    if (!out) throw std::runtime_error("write failure on " + path);
}

LatticeField load_field_csv(LatticePtr lat, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty csv " + path);
    LatticeField u(lat);
    std::vector<char> seen(lat->num_sites(), 0);
    std::vector<int> coords(lat->dim());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        for (int ax = 0; ax < lat->dim(); ++ax) {
            if (!std::getline(ss, tok, ',')) throw std::runtime_error("short row in " + path);
            coords[ax] = std::stoi(tok);
        }
        if (!std::getline(ss, tok, ',')) throw std::runtime_error("short row in " + path);
        std::size_t s = lat->index_of(coords);
        u[s] = std::stod(tok);
        seen[s] = 1;
    }
    for (char c : seen)
        if (!c) throw std::runtime_error("csv " + path + " does not cover every site");
    return u;
}

}  // namespace latpde
