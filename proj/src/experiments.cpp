#include "latpde/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "latpde/norms.hpp"
#include "latpde/parametrix.hpp"

namespace latpde {
namespace {

// ---- config parsing -------------------------------------------------------

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& s) {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("bad number in config: '" + s + "'");
    return v;
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& val) {
    if (key == "experiment") cfg.experiment = val;
    else if (key == "n") cfg.n = static_cast<int>(to_double(val));
    else if (key == "N") {
        cfg.N_list.clear();
        for (const auto& t : split_list(val)) cfg.N_list.push_back(static_cast<int>(to_double(t)));
    } else if (key == "K") {
        cfg.K_list.clear();
        for (const auto& t : split_list(val)) cfg.K_list.push_back(to_double(t));
    } else if (key == "nonlinearity") cfg.nonlinearity = val;
    else if (key == "initial_data") cfg.initial_data = val;
    else if (key == "T") cfg.T = to_double(val);
    else if (key == "t_floor") cfg.t_floor = to_double(val);
    else if (key == "samples") cfg.samples = static_cast<int>(to_double(val));
    else if (key == "replicas") cfg.replicas = static_cast<int>(to_double(val));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(val));
    else if (key == "jobs") cfg.jobs = static_cast<int>(to_double(val));
    else if (key == "out") cfg.out_dir = val;
    else if (key == "uniformity_rough") cfg.uniformity_rough = to_double(val);
    else if (key == "uniformity_smooth") cfg.uniformity_smooth = to_double(val);
    else if (key == "energy.num_centers" || key == "num_centers")
        cfg.num_centers = static_cast<int>(to_double(val));
    else if (key == "energy.radii" || key == "radii") {
        cfg.radii.clear();
        for (const auto& t : split_list(val)) cfg.radii.push_back(to_double(t));
    } else if (key == "energy.alpha" || key == "alpha") cfg.alpha = to_double(val);
    else if (key == "kernel.N") cfg.kernel_N = static_cast<int>(to_double(val));
    else if (key == "kernel.gap") cfg.kernel_gap = to_double(val);
    else if (key == "kernel.k_max") cfg.k_max = static_cast<int>(to_double(val));
    else if (key == "kernel.quad_nodes") cfg.quad_nodes = static_cast<int>(to_double(val));
    else throw std::invalid_argument("unknown config key: '" + key + "'");
}

// ---- deterministic randomness --------------------------------------------

double uniform01(std::mt19937_64& rng) {
    // 53 uniform bits; identical across platforms, unlike the distribution
    // templates.
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t cell_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (a * 1000003ULL + b + 1ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---- shared helpers -------------------------------------------------------

double resolved_t_floor(const ExperimentConfig& cfg) {
    return cfg.t_floor >= 0.0 ? cfg.t_floor : 0.01 * cfg.T;
}

bool is_rough(const ExperimentConfig& cfg) { return cfg.initial_data == "rough"; }

// For rough data the weighted sup peaks near t = 1/N^2, where the initial
// roughness is being smoothed; the floor must sit below the peak (while
// staying clear of the first few integrator steps) and the recorded nodes
// must resolve it.  Returns the per-cell floor and appends geometric
// early-time nodes to the uniform grid.
double rough_floor(double t_floor, int N) { return std::min(t_floor, 0.25 / (N * double(N))); }

std::vector<double> rough_times(double T, int samples, double floor) {
    std::vector<double> times = uniform_times(T, samples);
    for (double t = 0.5 * times[1]; t > floor * (1.0 - 1e-12); t *= 0.5) times.push_back(t);
    std::sort(times.begin(), times.end());
    return times;
}

// sup over recorded nodes with t >= t_floor of t^{weight_pow} * ||u(t)||_{C^k}.
double weighted_ck_sup(const Trajectory& traj, double t_floor, double weight_pow, int k) {
    double best = 0.0;
    for (std::size_t i = 0; i < traj.num_times(); ++i) {
        double t = traj.times[i];
        if (t < t_floor - 1e-12) continue;
        double w = weight_pow == 0.0 ? 1.0 : std::pow(t, weight_pow);
        best = std::max(best, w * ck_norm(traj.fields[i], k));
    }
    return best;
}

void run_cells(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
    int threads = std::max(1, jobs);
    if (threads == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    std::size_t workers = std::min(static_cast<std::size_t>(threads), count);
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

void check_uniformity(std::vector<SweepRow>& rows, const std::string& metric, double K,
                      const std::vector<int>& N_list, const std::vector<double>& values,
                      double threshold, std::uint64_t seed, int n) {
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double ratio = lo > 0.0 ? hi / lo : (hi > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    SweepRow row;
    row.n = n;
    row.N = 0;
    row.K = K;
    row.seed = seed;
    row.metric = metric + "_N_ratio";
    row.value = ratio;
    rows.push_back(row);
    if (ratio >= threshold) {
        std::ostringstream msg;
        msg << "uniformity failure for " << metric << " at K=" << K << ": ratio " << ratio
            << " >= " << threshold << " across N={";
        for (std::size_t i = 0; i < N_list.size(); ++i)
            msg << (i ? "," : "") << N_list[i] << ":" << values[i];
        msg << "}";
        throw std::runtime_error(msg.str());
    }
}

void fit_k_exponent(std::vector<SweepRow>& rows, const std::string& metric, int n, int N,
                    std::uint64_t seed, const std::vector<double>& Ks,
                    const std::vector<double>& vals) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < Ks.size(); ++i)
        if (Ks[i] > 0.0 && vals[i] > 0.0) {
            xs.push_back(Ks[i]);
            ys.push_back(vals[i]);
        }
    if (xs.size() < 2) return;
    // Direct log-log least squares: one point per K, no binning needed.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double m = static_cast<double>(xs.size());
    const double det = m * sxx - sx * sx;
    if (std::abs(det) < 1e-12) throw std::runtime_error("K-exponent fit failed for " + metric);
    EnvelopeFit fit;
    fit.valid = true;
    fit.exponent = (m * sxy - sx * sy) / det;
    fit.constant = std::exp((sy - fit.exponent * sx) / m);
    SweepRow row;
    row.n = n;
    row.N = N;
    row.K = 0.0;
    row.seed = seed;
    row.metric = metric + "_K_exponent";
    row.value = fit.exponent;
    row.exponent = fit.exponent;
    row.constant = fit.constant;
    rows.push_back(row);
}

std::string fmt_num(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

// ---- config ---------------------------------------------------------------

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line, section;
    while (std::getline(ss, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line without '=': '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        apply_key(cfg, key, val);
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

// ---- initial data ---------------------------------------------------------

LatticeField make_initial_data(LatticePtr lat, const std::string& kind, const Nonlinearity& nl,
                               std::uint64_t seed) {
    const double lo = nl.u_minus() + 0.1, hi = nl.u_plus() - 0.1;
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    LatticeField u(lat);
    if (kind == "rough") {
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = lo + (hi - lo) * uniform01(rng);
        return u;
    }
    if (kind == "constant") {
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = mid + 0.1 * half;
        return u;
    }
    if (kind == "smooth" || kind == "smooth-simple") {
        const double two_pi = 2.0 * std::acos(-1.0);
        for (std::size_t i = 0; i < u.size(); ++i) {
            std::vector<double> z = lat->position_of(i);
            double g;
            if (kind == "smooth") {
                g = 0.55 * std::sin(two_pi * z[0]) + 0.25 * std::cos(2 * two_pi * z[0]) +
                    0.12 * std::sin(3 * two_pi * z[0]);
                if (lat->dim() > 1) g *= std::cos(two_pi * z[1]);
            } else {
                g = 0.8 * std::sin(two_pi * z[0]);
                if (lat->dim() > 1) g *= std::cos(two_pi * z[1]);
            }
            u[i] = mid + 0.9 * half * g;  // |g| <= 0.92 / 0.8, stays inside [lo, hi]
        }
        return u;
    }
    if (kind.rfind("csv:", 0) == 0) return load_field_csv(lat, kind.substr(4));
    throw std::invalid_argument("unknown initial data kind: '" + kind + "'");
}

// ---- first-derivative sweep ----------------------------------------------

std::vector<SweepRow> run_first_schauder_sweep(const ExperimentConfig& cfg) {
    const double t_floor = resolved_t_floor(cfg);
    const bool rough = is_rough(cfg);
    const std::string metric = rough ? "c1_weighted_sup" : "c1_sup";
    const std::size_t cells = cfg.N_list.size() * cfg.K_list.size();
    std::vector<double> value(cells, 0.0), final_value(cells, 0.0), envelope_rise(cells, 0.0);

    run_cells(cells, cfg.jobs, [&](std::size_t cell) {
        const std::size_t iN = cell / cfg.K_list.size(), iK = cell % cfg.K_list.size();
        const int N = cfg.N_list[iN];
        const double K = cfg.K_list[iK];
        LatticePtr lat = make_lattice(cfg.n, N);
        Nonlinearity nl = make_nonlinearity(cfg.nonlinearity, K);
        const double floor = rough ? rough_floor(t_floor, N) : 0.0;
        const std::vector<double> times =
            rough ? rough_times(cfg.T, cfg.samples, floor) : uniform_times(cfg.T, cfg.samples);
        const int reps = std::max(1, cfg.replicas);
        double acc = 0.0, fin = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
            // Seed depends on (N, replica) only, so every K sees the same
            // data and the K-variation of the metrics is purely dynamical.
            LatticeField u0 =
                make_initial_data(lat, cfg.initial_data, nl, cell_seed(cfg.seed, N, rep));
            Trajectory traj = solve_quasilinear(nl, u0, cfg.T, times);
            acc += weighted_ck_sup(traj, floor, rough ? 0.5 : 0.0, 1);
            fin += std::pow(cfg.T, rough ? 0.5 : 0.0) * ck_norm(traj.fields.back(), 1);
            if (K == 0.0 && rep == 0) {
                // Pure diffusion: the C^1 norm must be a nonincreasing envelope.
                double prev = ck_norm(traj.fields[0], 1), rise = 0.0;
                for (std::size_t i = 1; i < traj.num_times(); ++i) {
                    double cur = ck_norm(traj.fields[i], 1);
                    rise = std::max(rise, cur - prev);
                    prev = cur;
                }
                envelope_rise[cell] = rise;
                if (rise > 1e-8 * (1.0 + ck_norm(traj.fields[0], 1)))
                    throw std::runtime_error("diffusive C^1 envelope increased by " +
                                             std::to_string(rise) + " at N=" + std::to_string(N));
            }
        }
        value[cell] = acc / reps;
        final_value[cell] = fin / reps;
    });

    std::vector<SweepRow> rows;
    for (std::size_t iN = 0; iN < cfg.N_list.size(); ++iN) {
        std::vector<double> per_K;
        for (std::size_t iK = 0; iK < cfg.K_list.size(); ++iK) {
            std::size_t cell = iN * cfg.K_list.size() + iK;
            SweepRow row;
            row.n = cfg.n;
            row.N = cfg.N_list[iN];
            row.K = cfg.K_list[iK];
            row.seed = cell_seed(cfg.seed, cfg.N_list[iN], 0);
            row.metric = metric;
            row.value = value[cell];
            rows.push_back(row);
            if (cfg.K_list[iK] == 0.0) {
                row.metric = "c1_envelope_max_increase";
                row.value = envelope_rise[cell];
                rows.push_back(row);
            }
            // The K-growth of the bound constant acts at reaction time
            // scales, so the exponent is fitted on the end-of-run values;
            // the early diffusive peak that dominates the sup is K-blind.
            per_K.push_back(final_value[cell]);
        }
        fit_k_exponent(rows, metric, cfg.n, cfg.N_list[iN], cfg.seed, cfg.K_list, per_K);
    }
    const double threshold = rough ? cfg.uniformity_rough : cfg.uniformity_smooth;
    for (std::size_t iK = 0; iK < cfg.K_list.size(); ++iK) {
        std::vector<double> per_N;
        for (std::size_t iN = 0; iN < cfg.N_list.size(); ++iN)
            per_N.push_back(value[iN * cfg.K_list.size() + iK]);
        check_uniformity(rows, metric, cfg.K_list[iK], cfg.N_list, per_N, threshold, cfg.seed,
                         cfg.n);
    }
    return rows;
}

// ---- second-derivative sweep ---------------------------------------------

std::vector<SweepRow> run_second_schauder_sweep(const ExperimentConfig& cfg) {
    const double t_floor = resolved_t_floor(cfg);
    const bool rough = is_rough(cfg);
    // Weight by t for rough data, sqrt(t) for the 3-mode smooth preset, and
    // nothing for the gentlest (1-mode) preset.
    double weight_pow = 1.0;
    std::string metric = "c2_t_weighted_sup";
    if (!rough) {
        weight_pow = cfg.initial_data == "smooth-simple" ? 0.0 : 0.5;
        metric = weight_pow == 0.0 ? "c2_sup" : "c2_sqrt_t_weighted_sup";
    }
    const std::size_t cells = cfg.N_list.size() * cfg.K_list.size();
    std::vector<double> value(cells, 0.0), final_value(cells, 0.0);
    std::vector<double> xi_err(cfg.N_list.size(), 0.0);

    run_cells(cells, cfg.jobs, [&](std::size_t cell) {
        const std::size_t iN = cell / cfg.K_list.size(), iK = cell % cfg.K_list.size();
        const int N = cfg.N_list[iN];
        const double K = cfg.K_list[iK];
        LatticePtr lat = make_lattice(cfg.n, N);
        Nonlinearity nl = make_nonlinearity(cfg.nonlinearity, K);
        const double floor = rough ? rough_floor(t_floor, N) : (weight_pow == 0.0 ? 0.0 : t_floor);
        const std::vector<double> times =
            rough ? rough_times(cfg.T, cfg.samples, floor) : uniform_times(cfg.T, cfg.samples);
        const int reps = std::max(1, cfg.replicas);
        double acc = 0.0, fin = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
            // Shared data across the K-list, as in the first sweep.
            LatticeField u0r =
                make_initial_data(lat, cfg.initial_data, nl, cell_seed(cfg.seed, N, rep));
            Trajectory traj = solve_quasilinear(nl, u0r, cfg.T, times);
            acc += weighted_ck_sup(traj, floor, weight_pow, 2);
            fin += std::pow(cfg.T, weight_pow) * ck_norm(traj.fields.back(), 2);
        }
        value[cell] = acc / reps;
        final_value[cell] = fin / reps;
        LatticeField u0 = make_initial_data(lat, cfg.initial_data, nl, cell_seed(cfg.seed, N, 0));
        if (iK == 0) {
            // Cross-check the second differences through the co-evolved flux
            // gradients: D_{e1} D_{e2} u = D_{e1} ( xi_{e2} / a_{x,e2} ).
            GradientSystemResult gs =
                solve_gradient_system(nl, u0, cfg.T, {0.5 * cfg.T, cfg.T});
            const LatticeField& u = gs.u.fields.back();
            EdgeCoefficients a = coefficients_from_state(u, nl);
            double worst = 0.0;
            for (const Direction& e1 : positive_directions(cfg.n))
                for (int d2 = 0; d2 < cfg.n; ++d2) {
                    Direction e2 = positive_directions(cfg.n)[d2];
                    LatticeField direct = grad_forward(grad_forward(u, e2), e1);
                    LatticeField h(lat);
                    const LatticeField& xi = gs.xi[d2].fields.back();
                    for (std::size_t i = 0; i < h.size(); ++i) h[i] = xi[i] / a.at(i, e2);
                    LatticeField via_flux = grad_forward(h, e1);
                    double scale = 1e-12 + direct.max_abs();
                    for (std::size_t i = 0; i < h.size(); ++i)
                        worst = std::max(worst, std::abs(direct[i] - via_flux[i]) / scale);
                }
            xi_err[iN] = worst;
            if (worst >= 1e-4)
                throw std::runtime_error("flux-gradient second-difference cross-check failed: " +
                                         std::to_string(worst));
        }
    });

    std::vector<SweepRow> rows;
    for (std::size_t iN = 0; iN < cfg.N_list.size(); ++iN) {
        std::vector<double> per_K;
        for (std::size_t iK = 0; iK < cfg.K_list.size(); ++iK) {
            std::size_t cell = iN * cfg.K_list.size() + iK;
            SweepRow row;
            row.n = cfg.n;
            row.N = cfg.N_list[iN];
            row.K = cfg.K_list[iK];
            row.seed = cell_seed(cfg.seed, cfg.N_list[iN], 0);
            row.metric = metric;
            row.value = value[cell];
            rows.push_back(row);
            per_K.push_back(final_value[cell]);
        }
        SweepRow xr;
        xr.n = cfg.n;
        xr.N = cfg.N_list[iN];
        xr.K = cfg.K_list[0];
        xr.seed = cfg.seed;
        xr.metric = "xi_route_rel_error";
        xr.value = xi_err[iN];
        rows.push_back(xr);
        fit_k_exponent(rows, metric, cfg.n, cfg.N_list[iN], cfg.seed, cfg.K_list, per_K);
    }
    const double threshold = rough ? cfg.uniformity_rough : cfg.uniformity_smooth;
    for (std::size_t iK = 0; iK < cfg.K_list.size(); ++iK) {
        std::vector<double> per_N;
        for (std::size_t iN = 0; iN < cfg.N_list.size(); ++iN)
            per_N.push_back(value[iN * cfg.K_list.size() + iK]);
        check_uniformity(rows, metric, cfg.K_list[iK], cfg.N_list, per_N, threshold, cfg.seed,
                         cfg.n);
    }
    return rows;
}

// ---- energy comparison ----------------------------------------------------

namespace {

struct EnergyCell {
    bool skipped = false;
    bool trivial = false;  // both sides negligible
    double lhs = 0.0, rhs = 0.0, constant = 0.0;
};

EnergyCell energy_cell(const Trajectory& traj, const Nonlinearity& nl, double alpha,
                       double coeff_seminorm, const std::vector<double>& y, double r) {
    EnergyCell out;
    LatticePtr lat = traj.lattice;
    const int n = lat->dim(), N = lat->mesh();
    const double t1 = traj.times.back();
    ParabolicCylinder Q(lat, t1, y, r);
    if (Q.interior_sites().empty()) {
        out.skipped = true;
        return out;
    }

    // Freeze the edge coefficients at the lattice site nearest the center,
    // at the apex time, symmetrized per axis.
    std::vector<int> cc(n);
    for (int d = 0; d < n; ++d)
        cc[d] = static_cast<int>(std::lround(y[d] * N)) % N;
    std::size_t center = lat->index_of(cc);
    EdgeCoefficients a1 = coefficients_from_state(traj.fields.back(), nl);
    std::vector<double> frozen(2 * n);
    for (int d = 0; d < n; ++d) {
        Direction e{d, +1};
        double v = 0.5 * (a1.at(center, e) + a1.at(center, e.negated()));
        frozen[2 * d] = frozen[2 * d + 1] = v;
    }
    Trajectory v = solve_heat_on_cylinder(Q, ConstantCoefficients(n, frozen), traj);

    // Edges with at least one endpoint in the ball, per positive direction.
    std::vector<Direction> pos = positive_directions(n);
    std::vector<std::vector<std::size_t>> edges(pos.size());
    for (std::size_t d = 0; d < pos.size(); ++d)
        for (std::size_t s = 0; s < lat->num_sites(); ++s)
            if (Q.contains_site(s) || Q.contains_site(lat->neighbor(s, pos[d])))
                edges[d].push_back(s);

    const double inv_vol = std::pow(static_cast<double>(N), -n);
    double sup_grad = 0.0, sup_w = 0.0, sup_g = 0.0;
    std::vector<double> energy(v.num_times(), 0.0);
    for (std::size_t j = 0; j < v.num_times(); ++j) {
        const LatticeField uj = traj.sample(v.times[j]);
        const LatticeField& vj = v.fields[j];
        for (std::size_t d = 0; d < pos.size(); ++d) {
            double acc = 0.0;
            for (std::size_t s : edges[d]) {
                std::size_t nb = lat->neighbor(s, pos[d]);
                double gw = N * ((uj[nb] - vj[nb]) - (uj[s] - vj[s]));
                double gu = N * (uj[nb] - uj[s]);
                acc += gw * gw;
                sup_grad = std::max(sup_grad, std::abs(gu));
            }
            energy[j] += inv_vol * acc;
        }
        for (std::size_t s : Q.interior_sites()) {
            sup_w = std::max(sup_w, std::abs(uj[s] - vj[s]));
            sup_g = std::max(sup_g, std::abs(nl.K() * nl.f(uj[s])));
        }
    }
    for (std::size_t j = 0; j + 1 < v.num_times(); ++j)
        out.lhs += 0.5 * (v.times[j + 1] - v.times[j]) * (energy[j] + energy[j + 1]);

    const double dY = std::sqrt(t1);
    const double band = (r + (1.0 + std::sqrt(static_cast<double>(n))) / N) / dY;
    const double vol = std::pow(r + 1.0 / N, n);
    double term1 = coeff_seminorm * coeff_seminorm * std::pow(band, 2.0 * alpha) * vol * r * r *
                   sup_grad * sup_grad;
    double term2 = sup_g * vol * std::pow(r / dY, 1.0 + alpha) * sup_w;
    out.rhs = term1 + term2;
    if (out.rhs < 1e-14 || out.lhs < 1e-14) {
        out.trivial = true;
        out.constant = 0.0;
    } else {
        out.constant = out.lhs / out.rhs;
    }
    return out;
}

}  // namespace

std::vector<SweepRow> run_energy_experiment(const ExperimentConfig& cfg) {
    const double K = cfg.K_list.empty() ? 1.0 : cfg.K_list.front();
    const double dY = std::sqrt(cfg.T);
    for (double r : cfg.radii)
        if (!(r > 0.0 && r < 0.5 * dY))
            throw std::invalid_argument("energy radius must lie in (0, sqrt(T)/2)");

    std::vector<std::vector<double>> centers;
    for (int c = 0; c < cfg.num_centers; ++c)
        centers.push_back(std::vector<double>(cfg.n, (c + 0.5) / cfg.num_centers));

    std::vector<SweepRow> rows;
    std::vector<double> max_per_N;
    for (int N : cfg.N_list) {
        LatticePtr lat = make_lattice(cfg.n, N);
        Nonlinearity nl = make_nonlinearity(cfg.nonlinearity, K);
        LatticeField u0 = make_initial_data(lat, cfg.initial_data, nl, cell_seed(cfg.seed, N, 0));
        Trajectory traj = solve_quasilinear(nl, u0, cfg.T, uniform_times(cfg.T, cfg.samples));

        // Measured weighted Hölder seminorm of the state-dependent edge
        // coefficients, max over positive directions.
        double A = 0.0;
        for (const Direction& e : positive_directions(cfg.n)) {
            Trajectory ta;
            ta.lattice = lat;
            ta.times = traj.times;
            for (const LatticeField& u : traj.fields) {
                EdgeCoefficients a = coefficients_from_state(u, nl);
                LatticeField f(lat);
                for (std::size_t i = 0; i < f.size(); ++i) f[i] = a.at(i, e);
                ta.fields.push_back(f);
            }
            SeminormSpec spec;
            spec.a = cfg.alpha;
            spec.b = 0.0;
            spec.flavor = Flavor::Bracket;
            PairSet pairs = make_space_time_pairs(ta, false, 20000, cfg.seed);
            A = std::max(A, holder_seminorm(ta, spec, pairs));
        }
        {
            SweepRow row;
            row.n = cfg.n;
            row.N = N;
            row.K = K;
            row.seed = cfg.seed;
            row.metric = "coefficient_seminorm";
            row.value = A;
            rows.push_back(row);
        }

        std::map<double, double> max_per_r;
        for (std::size_t ci = 0; ci < centers.size(); ++ci)
            for (double r : cfg.radii) {
                EnergyCell cell = energy_cell(traj, nl, cfg.alpha, A, centers[ci], r);
                std::ostringstream tag;
                tag << "[y=" << fmt_num(centers[ci][0]) << ",r=" << fmt_num(r) << "]";
                SweepRow row;
                row.n = cfg.n;
                row.N = N;
                row.K = K;
                row.seed = cfg.seed;
                if (cell.skipped) {
                    row.metric = "energy_skipped" + tag.str();
                    row.value = 1.0;
                    rows.push_back(row);
                    continue;
                }
                row.metric = "energy_constant" + tag.str();
                row.value = cell.constant;
                rows.push_back(row);
                if (!cell.trivial) {
                    auto it = max_per_r.find(r);
                    if (it == max_per_r.end() || cell.constant > it->second)
                        max_per_r[r] = cell.constant;
                }
            }

        if (!max_per_r.empty()) {
            double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
            for (const auto& [r, m] : max_per_r) {
                lo = std::min(lo, m);
                hi = std::max(hi, m);
                SweepRow row;
                row.n = cfg.n;
                row.N = N;
                row.K = K;
                row.seed = cfg.seed;
                row.metric = "energy_max_constant[r=" + fmt_num(r) + "]";
                row.value = m;
                rows.push_back(row);
            }
            SweepRow row;
            row.n = cfg.n;
            row.N = N;
            row.K = K;
            row.seed = cfg.seed;
            row.metric = "energy_spread_over_r";
            row.value = hi / lo;
            rows.push_back(row);
            if (hi / lo >= 2.0)
                throw std::runtime_error("energy implied constant spreads " +
                                         std::to_string(hi / lo) + "x across radii at N=" +
                                         std::to_string(N));
            max_per_N.push_back(hi);
        }
    }
    if (max_per_N.size() > 1) {
        double lo = *std::min_element(max_per_N.begin(), max_per_N.end());
        double hi = *std::max_element(max_per_N.begin(), max_per_N.end());
        SweepRow row;
        row.n = cfg.n;
        row.N = 0;
        row.K = K;
        row.seed = cfg.seed;
        row.metric = "energy_spread_over_N";
        row.value = hi / lo;
        rows.push_back(row);
        if (hi / lo >= 2.0)
            throw std::runtime_error("energy implied constant spreads " +
                                     std::to_string(hi / lo) + "x across the N-list");
    }
    return rows;
}

// ---- kernel experiment ----------------------------------------------------

std::vector<SweepRow> run_kernel_experiment(const ExperimentConfig& cfg) {
    const int N = cfg.kernel_N;
    const double K = cfg.K_list.empty() ? 1.0 : cfg.K_list.front();
    const double gap = cfg.kernel_gap;
    LatticePtr lat = make_lattice(cfg.n, N);
    Nonlinearity nl = make_nonlinearity(cfg.nonlinearity, K);

    auto add = [&](std::vector<SweepRow>& rows, const std::string& metric, double value,
                   double exponent = std::numeric_limits<double>::quiet_NaN(),
                   double constant = std::numeric_limits<double>::quiet_NaN()) {
        SweepRow row;
        row.n = cfg.n;
        row.N = N;
        row.K = K;
        row.seed = cfg.seed;
        row.metric = metric;
        row.value = value;
        row.exponent = exponent;
        row.constant = constant;
        rows.push_back(row);
    };
    std::vector<SweepRow> rows;

    // Edge coefficients from a short smooth quasilinear run, rewritten into
    // second-order form.
    LatticeField u0 = make_initial_data(lat, "smooth", nl, cfg.seed);
    Trajectory warm = solve_quasilinear(nl, u0, gap, {gap});
    EdgeCoefficients a = coefficients_from_state(warm.fields.back(), nl);
    OperatorLt op = rewrite_divergence(a);
    double d0 = 0.0;
    for (std::size_t s = 0; s < lat->num_sites(); ++s)
        for (const Direction& e : all_directions(cfg.n)) d0 = std::max(d0, std::abs(op.b(s, e)));
    op.set_bounds(nl.c_minus(), nl.c_plus(), d0);

    DenseMatrix oracle = dense_lt_propagator(op, 0.0, gap);

    // Series depth refinement at the base quadrature.
    double prev = std::numeric_limits<double>::infinity();
    double base_err = 0.0;
    for (int k = 1; k <= cfg.k_max; ++k) {
        LeviTabulation tab = levi_iterate(op, 0.0, gap, k, cfg.quad_nodes);
        KernelGrid ker = assemble_parametrix(op, tab);
        double err = ker.mats.back().max_abs_diff(oracle);
        add(rows, "kernel_oracle_error[k_max=" + std::to_string(k) + "]", err);
        if (err > prev + 1e-12)
            throw std::runtime_error("kernel error not monotone in series depth");
        prev = err;
        if (k == cfg.k_max) {
            base_err = err;
            add(rows, "kernel_conservation", ker.conservation_defect());
            add(rows, "kernel_min_value", ker.min_value());
            for (std::size_t lv = 0; lv < tab.level_sup.size(); ++lv)
                add(rows, "kernel_series_level[" + std::to_string(lv + 1) + "]",
                    tab.level_sup[lv]);
        }
    }
    if (base_err > 1e-3)
        throw std::runtime_error("kernel vs dense oracle error " + std::to_string(base_err) +
                                 " exceeds 1e-3");

    // Quadrature refinement (3 dyadic levels ending at the configured one).
    prev = std::numeric_limits<double>::infinity();
    for (int m : {cfg.quad_nodes / 4, cfg.quad_nodes / 2, cfg.quad_nodes}) {
        LeviTabulation tab = levi_iterate(op, 0.0, gap, cfg.k_max, m);
        KernelGrid ker = assemble_parametrix(op, tab);
        double err = ker.mats.back().max_abs_diff(oracle);
        add(rows, "kernel_oracle_error[m=" + std::to_string(m) + "]", err);
        if (err > prev + 1e-12)
            throw std::runtime_error("kernel error not monotone under quadrature refinement");
        prev = err;
    }

    double dual = duality_residual(op, 0.0, gap);
    add(rows, "kernel_duality_residual", dual);
    if (dual >= 1e-6)
        throw std::runtime_error("kernel duality residual " + std::to_string(dual));

    // Constant-coefficient degeneracy: the correction series vanishes
    // identically, so the assembled kernel is the frozen kernel; the gap to
    // the dense oracle is pure integrator-grid noise.
    {
        EdgeCoefficients ac(lat, 1.0, 0.9, 1.1);
        OperatorLt opc = rewrite_divergence(ac);
        opc.set_bounds(0.9, 1.1, 0.0);
        LeviTabulation tab = levi_iterate(opc, 0.0, gap, cfg.k_max, cfg.quad_nodes);
        double level_max = 0.0;
        for (double s : tab.level_sup) level_max = std::max(level_max, s);
        add(rows, "kernel_constant_series_sup", level_max);
        if (level_max > 1e-10)
            throw std::runtime_error("constant-coefficient series correction is nonzero");
        KernelGrid ker = assemble_parametrix(opc, tab);
        double err = ker.mats.back().max_abs_diff(dense_lt_propagator(opc, 0.0, gap));
        add(rows, "kernel_constant_vs_oracle", err);
        if (err > 1e-5)
            throw std::runtime_error("constant-coefficient kernel vs oracle error " +
                                     std::to_string(err));
    }

    // Gaussian envelope fits for the frozen kernel and its differences.
    {
        ConstantCoefficients a0 = op.frozen_at(0);
        std::vector<double> calib, valid;
        for (int i = 0; i < 24; ++i) calib.push_back(0.01 * std::pow(20.0, i / 23.0));
        for (int i = 0; i + 1 < 24; ++i) valid.push_back(std::sqrt(calib[i] * calib[i + 1]));
        for (int order = 0; order <= 2; ++order) {
            GaussianFitReport rep = kernel_gradient_bounds_check(lat, a0, order, calib, valid);
            add(rows, "gaussian_fit_order" + std::to_string(order),
                static_cast<double>(rep.violations), rep.k_hat, rep.c_hat);
            if (rep.violations != 0)
                throw std::runtime_error("Gaussian envelope violated at order " +
                                         std::to_string(order));
        }
    }
    return rows;
}

// ---- reporting ------------------------------------------------------------

void emit_report(const std::vector<SweepRow>& rows, const ExperimentConfig& cfg) {
    if (rows.empty()) throw std::invalid_argument("no rows to report");
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    std::vector<SweepRow> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(), [](const SweepRow& a, const SweepRow& b) {
        if (a.n != b.n) return a.n < b.n;
        if (a.N != b.N) return a.N < b.N;
        if (a.K != b.K) return a.K < b.K;
        return a.metric < b.metric;
    });

    auto open = [](const fs::path& p) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + p.string());
        return out;
    };

    {
        std::ofstream out = open(fs::path(cfg.out_dir) / "rows.csv");
        out << "n,N,K,seed,metric,value,exponent,constant\n";
        for (const SweepRow& r : sorted)
            out << r.n << "," << r.N << "," << fmt_num(r.K) << "," << r.seed << "," << r.metric
                << "," << fmt_num(r.value) << "," << fmt_num(r.exponent) << ","
                << fmt_num(r.constant) << "\n";
    }
    {
        // Plot-friendly series: x is the radius for bracketed [..r=..] rows,
        // the reaction strength otherwise.
        std::ofstream out = open(fs::path(cfg.out_dir) / "plot.csv");
        out << "series,x,y\n";
        for (const SweepRow& r : sorted) {
            std::string series = r.metric.substr(0, r.metric.find('['));
            double x = r.K;
            std::size_t rp = r.metric.find("r=");
            if (rp != std::string::npos) x = std::stod(r.metric.substr(rp + 2));
            out << series << "@N" << r.N << "," << fmt_num(x) << "," << fmt_num(r.value) << "\n";
        }
    }
    {
        std::ofstream out = open(fs::path(cfg.out_dir) / "summary.txt");
        out << "experiment: " << cfg.experiment << "\n";
        out << "n: " << cfg.n << "\nN:";
        for (int N : cfg.N_list) out << " " << N;
        out << "\nK:";
        for (double K : cfg.K_list) out << " " << fmt_num(K);
        out << "\nnonlinearity: " << cfg.nonlinearity << "\ninitial_data: " << cfg.initial_data
            << "\nT: " << fmt_num(cfg.T) << "\nt_floor: " << fmt_num(resolved_t_floor(cfg))
            << "\nsamples: " << cfg.samples << "\nseed: " << cfg.seed << "\n\n";
        std::map<std::string, std::pair<double, double>> ranges;
        std::map<std::string, int> counts;
        for (const SweepRow& r : sorted) {
            std::string key = r.metric.substr(0, r.metric.find('['));
            auto it = ranges.find(key);
            if (it == ranges.end())
                ranges[key] = {r.value, r.value};
            else {
                it->second.first = std::min(it->second.first, r.value);
                it->second.second = std::max(it->second.second, r.value);
            }
            ++counts[key];
        }
        for (const auto& [key, mm] : ranges)
            out << key << ": count=" << counts[key] << " min=" << fmt_num(mm.first)
                << " max=" << fmt_num(mm.second) << "\n";
        out << "\nrows: " << sorted.size() << "\n";
    }
}

std::vector<SweepRow> run_experiment(const ExperimentConfig& cfg) {
    std::vector<SweepRow> rows;
    if (cfg.experiment == "sweep-first") rows = run_first_schauder_sweep(cfg);
    else if (cfg.experiment == "sweep-second") rows = run_second_schauder_sweep(cfg);
    else if (cfg.experiment == "energy") rows = run_energy_experiment(cfg);
    else if (cfg.experiment == "kernel") rows = run_kernel_experiment(cfg);
    else throw std::invalid_argument("unknown experiment: '" + cfg.experiment + "'");
    emit_report(rows, cfg);
    return rows;
}

}  // namespace latpde
