// Command-line driver for the lattice parabolic PDE experiments: direct
// solves with invariant checks, the derivative-scaling sweeps, the cylinder
// energy comparison, the kernel construction checks, and seminorm reports.
// Every run is a pure function of (config, seed); outputs are deterministic.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latpde/experiments.hpp"
#include "latpde/norms.hpp"
#include "latpde/solvers.hpp"

namespace {

using namespace latpde;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    const TorusLattice& L = *traj.lattice;
    out << "t";
    for (int d = 0; d < L.dim(); ++d) out << ",x" << d;
    out << ",value\n";
    for (std::size_t ti = 0; ti < traj.num_times(); ++ti)
        for (std::size_t s = 0; s < L.num_sites(); ++s) {
            out << fmt(traj.times[ti]);
            for (int c : L.coords_of(s)) out << "," << c;
            out << "," << fmt(traj.fields[ti][s]) << "\n";
        }
}

// Solves one cell (first N, first K) and enforces the maximum principle and
// the invariant-interval envelope before writing the trajectory.
Trajectory solve_cell(const ExperimentConfig& cfg) {
    const int N = cfg.N_list.front();
    const double K = cfg.K_list.front();
    LatticePtr lat = make_lattice(cfg.n, N);
    Nonlinearity nl = make_nonlinearity(cfg.nonlinearity, K);
    LatticeField u0 = make_initial_data(lat, cfg.initial_data, nl, cfg.seed);
    Trajectory traj = solve_quasilinear(nl, u0, cfg.T, uniform_times(cfg.T, cfg.samples));
    auto [lo, hi] = comparison_envelope(nl, u0);
    for (const LatticeField& f : traj.fields)
        if (f.min() < lo - 1e-8 || f.max() > hi + 1e-8)
            throw std::runtime_error("solution left the invariant interval");
    return traj;
}

int run_solve(const ExperimentConfig& cfg) {
    Trajectory traj = solve_cell(cfg);
    MaxPrincipleReport mp = check_maximum_principle(traj);
    std::filesystem::path dir(cfg.out_dir);
    write_trajectory_csv(traj, dir / "trajectory.csv");
    dump_field_csv(traj.fields.back(), (dir / "final_state.csv").string());
    std::ofstream out = open_out(dir / "summary.txt");
    out << "experiment: solve\nn: " << cfg.n << "\nN: " << cfg.N_list.front()
        << "\nK: " << fmt(cfg.K_list.front()) << "\nT: " << fmt(cfg.T)
        << "\nseed: " << cfg.seed << "\nnodes: " << traj.num_times()
        << "\nfinal_min: " << fmt(traj.fields.back().min())
        << "\nfinal_max: " << fmt(traj.fields.back().max())
        << "\nmax_principle: " << (mp.passed ? "pass" : "FAIL")
        << "\nmax_excess: " << fmt(mp.max_excess) << "\nmin_excess: " << fmt(mp.min_excess)
        << "\n";
    if (!mp.passed) {
        std::cerr << "maximum principle violated (excess " << mp.max_excess << ")\n";
        return 1;
    }
    return 0;
}

int run_norms(const ExperimentConfig& cfg) {
    Trajectory traj = solve_cell(cfg);
    const double t_floor = cfg.t_floor >= 0.0 ? cfg.t_floor : 0.01 * cfg.T;
    PairSet pairs = make_space_time_pairs(traj, false, 50000, cfg.seed, t_floor);
    PairSet tpairs = make_same_site_pairs(traj, 50000, cfg.seed, t_floor);

    struct Entry {
        std::string id;
        double a, b;
        std::string flavor;
        double value;
    };
    std::vector<Entry> entries;
    entries.push_back({"c0_final", 0, 0, "sup", ck_norm(traj.fields.back(), 0)});
    entries.push_back({"c1_final", 1, 0, "sup", ck_norm(traj.fields.back(), 1)});
    entries.push_back({"c2_final", 2, 0, "sup", ck_norm(traj.fields.back(), 2)});
    {
        SeminormSpec spec;
        spec.a = 0.5;
        entries.push_back({"space_time_bracket", 0.5, 0, "bracket",
                           holder_seminorm(traj, spec, pairs)});
        entries.push_back({"time_bracket", 0.5, 0, "bracket", time_seminorm(traj, spec, tpairs)});
        spec.a = 1.5;
        spec.k = 1;
        entries.push_back({"gradient_bracket", 1.5, 0, "bracket",
                           holder_seminorm(traj, spec, pairs)});
    }
    entries.push_back({"weighted_gradient_sup", 0, 1, "sup",
                       weighted_sup(traj, 1.0, pairs, 1)});
    EnvelopeFit nash = fit_holder_exponent(traj, t_floor, FitMode::NashCombined);
    entries.push_back({"nash_exponent", nash.exponent, 0, "fit", nash.exponent});
    entries.push_back({"nash_r2", nash.r2, 0, "fit", nash.r2});

    std::filesystem::path dir(cfg.out_dir);
    std::ofstream out = open_out(dir / "norms.csv");
    out << "norm_id,a,b,flavor,value,n,N,K,seed\n";
    for (const Entry& e : entries)
        out << e.id << "," << fmt(e.a) << "," << fmt(e.b) << "," << e.flavor << ","
            << fmt(e.value) << "," << cfg.n << "," << cfg.N_list.front() << ","
            << fmt(cfg.K_list.front()) << "," << cfg.seed << "\n";
    std::ofstream sum = open_out(dir / "summary.txt");
    sum << "experiment: norms\nrows: " << entries.size() << "\nnash_exponent: "
        << fmt(nash.exponent) << "\nnash_r2: " << fmt(nash.r2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lattice reaction-diffusion verification experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    int jobs = 0;
    bool have_seed = false, have_out = false, have_jobs = false;

    std::vector<CLI::App*> subs;
    for (const char* name : {"solve", "sweep-first", "sweep-second", "energy", "kernel", "norms"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "configuration file (key = value)");
        sub->add_option("--out", out_dir, "output directory")->each([&](const std::string&) {
            have_out = true;
        });
        sub->add_option("--seed", seed, "random seed")->each([&](const std::string&) {
            have_seed = true;
        });
        sub->add_option("--jobs", jobs, "worker threads")->each([&](const std::string&) {
            have_jobs = true;
        });
        subs.push_back(sub);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        latpde::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = latpde::parse_config_file(config_path);
        cfg.experiment = app.get_subcommands().front()->get_name();
        if (have_out) cfg.out_dir = out_dir;
        if (have_seed) cfg.seed = seed;
        if (have_jobs) cfg.jobs = jobs;

        if (cfg.experiment == "solve") return run_solve(cfg);
        if (cfg.experiment == "norms") return run_norms(cfg);
        latpde::run_experiment(cfg);
        return 0;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}
