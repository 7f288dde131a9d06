#include "epi/diffusion.hpp"
#include "epi/dynamics.hpp"
#include "epi/final_size.hpp"
#include "epi/model.hpp"
#include "epi/reduced.hpp"
#include "epi/scenario_io.hpp"
#include "epi/spectral.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "heteroepi 0.1.0";

struct RunConfig {
    std::string scenario_path;
    std::string out_dir = ".";
    Eigen::Index n_override = 0;
    double tol = 1e-10;
    double t_max = 50.0;
    double step = 0.0;
    double output_every = 0.1;
    double diffusivity = 1.0;
    bool collapse_exposed = false;
    std::string formats = "json";
    std::string beta_scales = "0.5,1,2";

    bool wants(const std::string& fmt) const {
        return formats.find(fmt) != std::string::npos;
    }

    json echo(const std::string& subcommand) const {
        return json{{"subcommand", subcommand},
                    {"scenario", scenario_path},
                    {"out", out_dir},
                    {"n", n_override},
                    {"tol", tol},
                    {"tmax", t_max},
                    {"step", step},
                    {"output_every", output_every},
                    {"diffusivity", diffusivity},
                    {"formats", formats}};
    }
};

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json field_json(const epi::Field& f) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < f.size(); ++i) arr.push_back(f(i));
    return arr;
}

std::string field_csv(const epi::TraitDomain& domain,
                      const std::vector<std::pair<std::string, const epi::Field*>>& cols) {
    std::ostringstream out;
    out << "node,x";
    for (const auto& [name, f] : cols) out << "," << name;
    out << "\n";
    for (Eigen::Index i = 0; i < domain.size(); ++i) {
        out << i << "," << g17(domain.nodes()(i));
        for (const auto& [name, f] : cols) out << "," << g17((*f)(i));
        out << "\n";
    }
    return out.str();
}

/// Report writer shared by all subcommands; verifies the manifest.
int emit_report(const RunConfig& config, const std::string& subcommand,
                json headline, std::vector<std::string> files, double wall_seconds) {
    const std::string report_path =
        (fs::path(config.out_dir) / "report.json").string();
    json report{{"config", config.echo(subcommand)},
                {"version", kVersion},
                {"headline", std::move(headline)},
                {"files", files},
                {"wall_time_seconds", wall_seconds}};
    char hash[32];
    std::snprintf(hash, sizeof hash, "0x%016llx",
                  static_cast<unsigned long long>(epi::config_hash(report["config"])));
    report["config_hash"] = hash;
    epi::write_json_atomic(report_path, report);
    files.push_back(report_path);
    for (const std::string& f : files)
        if (!fs::exists(f))
            throw std::runtime_error("manifest entry missing on disk: " + f);
    std::printf("%s\n", report.dump(2).c_str());
    return 0;
}

epi::Scenario load(const RunConfig& config) {
    if (!fs::exists(config.scenario_path)) {
        json err{{"error", "scenario file not found"},
                 {"path", config.scenario_path}};
        std::printf("%s\n", err.dump(2).c_str());
        std::exit(2);
    }
    epi::Scenario scenario = epi::load_scenario(config.scenario_path,
                                                config.n_override);
    epi::ValidationReport report = epi::validate(scenario.params,
                                                 scenario.initial);
    if (!report.ok())
        throw std::runtime_error("scenario validation failed: " +
                                 report.summary());
    return scenario;
}

std::string out_path(const RunConfig& config, const std::string& name) {
    fs::create_directories(config.out_dir);
    return (fs::path(config.out_dir) / name).string();
}

void write_csv_atomic(const std::string& path, const std::string& content) {
    epi::write_text_atomic(path, content);
}

std::string trajectory_summary_csv(const epi::TraitDomain& domain,
                                   const epi::Trajectory& traj) {
    std::ostringstream out;
    out << "t,S_total,E_total,I_total,R_total,mass_drift,conserved_drift\n";
    for (size_t k = 0; k < traj.states.size(); ++k) {
        const epi::EpidemicState& s = traj.states[k];
        out << g17(traj.times[k]) << "," << g17(integrate(domain, s.S)) << ","
            << g17(integrate(domain, s.E)) << "," << g17(integrate(domain, s.I))
            << "," << g17(integrate(domain, s.R)) << ","
            << g17(traj.diagnostics[k].mass_drift) << ","
            << g17(traj.diagnostics[k].lyapunov_drift) << "\n";
    }
    return out.str();
}

int run_simulate(const RunConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    epi::Scenario scenario = load(config);
    epi::IntegrationControls controls;
    controls.step = config.step;
    controls.output_every = config.output_every;
    epi::Trajectory traj = epi::integrate_trajectory(scenario, config.t_max,
                                                     controls);
    std::vector<std::string> files;
    if (config.wants("csv")) {
        const std::string p1 = out_path(config, "trajectory.csv");
        const std::string p2 = out_path(config, "summary.csv");
        epi::write_trajectory_csv(scenario.params.domain, traj, p1 + ".tmp");
        fs::rename(p1 + ".tmp", p1);
        write_csv_atomic(p2, trajectory_summary_csv(scenario.params.domain, traj));
        files = {p1, p2};
    } else {
        out_path(config, "");  // ensure the directory exists for report.json
    }
    double max_mass = 0.0, max_lyap = 0.0;
    for (const epi::StepDiagnostics& d : traj.diagnostics) {
        max_mass = std::max(max_mass, d.mass_drift);
        max_lyap = std::max(max_lyap, d.lyapunov_drift);
    }
    json headline{{"r0", epi::r0(scenario)},
                  {"t_end", traj.times.back()},
                  {"step", traj.step_used},
                  {"infected_mass_end",
                   traj.back().infected_mass(scenario.params.domain)},
                  {"max_mass_drift", max_mass},
                  {"max_conserved_drift", max_lyap}};
    const double wall = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - start).count();
    return emit_report(config, "simulate", std::move(headline), std::move(files),
                       wall);
}

int run_final_size(const RunConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    epi::Scenario scenario = load(config);
    epi::FinalSizeProblem problem = epi::make_problem(scenario);
    epi::FinalSizeSolution sol = epi::solve_monotone(problem, config.tol);
    std::vector<std::string> files;
    if (config.wants("csv")) {
        const std::string p = out_path(config, "s_infinity.csv");
        write_csv_atomic(p, field_csv(scenario.params.domain,
                                      {{"S_infinity", &sol.s_infinity},
                                       {"S0", &scenario.initial.S}}));
        files = {p};
    } else {
        out_path(config, "");
    }
    json headline{{"attack_rate", sol.attack_rate},
                  {"residual", sol.residual},
                  {"iterations", sol.iterations},
                  {"radius_at_limit", sol.radius_at_limit},
                  {"r0", epi::r0(scenario)}};
    if (config.wants("json")) headline["s_infinity"] = field_json(sol.s_infinity);
    const double wall = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - start).count();
    return emit_report(config, "final-size", std::move(headline),
                       std::move(files), wall);
}

int run_spectral(const RunConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    epi::Scenario scenario = load(config);
    const epi::ModelParams& params = scenario.params;
    epi::SpectralResult spec = epi::spectral_radius(
        epi::build_operator(params, scenario.initial.S), config.tol);

    json headline{{"r0", spec.radius},
                  {"residual", spec.residual},
                  {"adjoint_residual", spec.adjoint_residual},
                  {"iterations", spec.iterations},
                  {"herd_immunity", spec.radius <= 1.0}};

    // supercritical runs also get T0 and the decay-rate bound
    if (spec.radius > 1.0) {
        epi::IntegrationControls controls;
        controls.step = config.step;
        controls.output_every = config.output_every;
        controls.t_max = config.t_max;
        epi::LongTimeResult limit = epi::long_time_limit(scenario, controls);
        const double r_inf = epi::radius_at(params, limit.state.S);
        headline["r_infinity"] = r_inf;
        try {
            headline["t0"] = epi::find_t0(limit.trajectory, params);
        } catch (const std::exception& e) {
            headline["t0"] = nullptr;
            headline["t0_note"] = e.what();
        }
        if (r_inf < 1.0) {
            epi::DecayRateEstimate est = epi::estimate_decay_rate(params,
                                                                  limit.state.S,
                                                                  r_inf);
            headline["lambda"] = est.lambda;
            headline["theta"] = est.theta;
        }
    }

    std::vector<std::string> files;
    if (config.wants("csv")) {
        const std::string p = out_path(config, "eigenfunctions.csv");
        write_csv_atomic(p, field_csv(params.domain, {{"phi", &spec.phi},
                                                      {"psi", &spec.psi}}));
        files = {p};
    } else {
        out_path(config, "");
    }
    const double wall = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - start).count();
    return emit_report(config, "spectral", std::move(headline), std::move(files),
                       wall);
}

int run_diffusion(const RunConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    epi::Scenario scenario = load(config);
    const epi::ModelParams& params = scenario.params;

    epi::DiffusionControls controls;
    controls.step = config.step;
    controls.output_every = config.output_every;
    controls.diffusivity = config.diffusivity;
    epi::Trajectory traj = epi::integrate_diffusion(scenario, config.t_max,
                                                    controls);
    epi::DiffusionFinalSize fs_sol = epi::solve_final_size_diffusion(
        scenario, config.tol, 1000000, config.diffusivity);
    epi::DiffusionSpectralResult spec = epi::kdelta_eigenpair(
        params, scenario.initial.S, 1e-10, nullptr, config.diffusivity);

    std::vector<std::string> files;
    if (config.wants("csv")) {
        const std::string p1 = out_path(config, "summary.csv");
        const std::string p2 = out_path(config, "s_infinity.csv");
        const std::string p3 = out_path(config, "lambda_curve.csv");
        write_csv_atomic(p1, trajectory_summary_csv(params.domain, traj));
        write_csv_atomic(p2, field_csv(params.domain,
                                       {{"S_infinity", &fs_sol.s_infinity},
                                        {"Phi_0", &fs_sol.phi_0},
                                        {"Phi_infinity", &fs_sol.phi_infinity}}));
        std::ostringstream curve;
        curve << "M,Lambda\n";
        for (const auto& [m, lam] : spec.lambda_curve)
            curve << g17(m) << "," << g17(lam) << "\n";
        write_csv_atomic(p3, curve.str());
        files = {p1, p2, p3};
    } else {
        out_path(config, "");
    }
    json headline{{"r0_diffusion", spec.m_star},
                  {"eigen_residual", spec.residual},
                  {"attack_rate", fs_sol.attack_rate},
                  {"final_size_residual", fs_sol.residual},
                  {"damping_events", fs_sol.damping_events},
                  {"infected_mass_end", traj.back().infected_mass(params.domain)}};
    const double wall = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - start).count();
    return emit_report(config, "diffusion", std::move(headline), std::move(files),
                       wall);
}

int run_reduced(const RunConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    epi::Scenario scenario = load(config);
    epi::ReducedSystem system = epi::rankN_sir_reduce(scenario,
                                                      config.collapse_exposed);
    epi::ReducedTrajectory traj = epi::integrate_reduced(system, config.t_max);
    epi::MInfinity m_inf = epi::m_infinity(system);

    json headline{{"rank", system.rank()},
                  {"m_inf", field_json(m_inf.m)},
                  {"stationarity", m_inf.stationarity}};
    if (system.rank() == 1) {
        epi::HerdRoot herd = epi::herd_root_rank1(system);
        headline["m_h"] = herd.m_h;
        headline["R0_closed_form"] = herd.r0;
    } else {
        epi::RankNEigen eig = epi::rankN_eigen(scenario.params, scenario.initial.S);
        headline["R0_closed_form"] = eig.matrix.lambda;
    }

    std::vector<std::string> files;
    if (config.wants("csv")) {
        const std::string p = out_path(config, "m_trajectory.csv");
        epi::write_reduced_csv(traj, p + ".tmp");
        fs::rename(p + ".tmp", p);
        files = {p};
    } else {
        out_path(config, "");
    }
    const double wall = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - start).count();
    return emit_report(config, "reduced", std::move(headline), std::move(files),
                       wall);
}

int run_counterexample(const RunConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    epi::Scenario scenario = load(config);
    if (!scenario.two_block)
        throw std::runtime_error("counterexample requires a two_block scenario");
    std::vector<epi::FinalSizeSolution> sols =
        epi::enumerate_block_solutions(scenario, config.tol);

    json listed = json::array();
    for (const epi::FinalSizeSolution& sol : sols) {
        epi::BlockFinalSize blocks = epi::block_values(scenario.params.domain, sol);
        listed.push_back(json{{"s1_infinity", blocks.s1_infinity},
                              {"s2_infinity", blocks.s2_infinity},
                              {"attack_rate", sol.attack_rate},
                              {"residual", sol.residual},
                              {"radius_at_limit", sol.radius_at_limit}});
    }

    // which branch the dynamics select
    epi::IntegrationControls controls;
    controls.t_max = config.t_max;
    epi::LongTimeResult limit = epi::long_time_limit(scenario, controls);
    const epi::Field& w = scenario.params.domain.weights();
    json headline{{"solutions", listed},
                  {"count", sols.size()},
                  {"dynamics_s1_infinity", w(0) * limit.state.S(0)},
                  {"dynamics_s2_infinity", w(1) * limit.state.S(1)}};
    out_path(config, "");
    const double wall = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - start).count();
    return emit_report(config, "counterexample", std::move(headline), {}, wall);
}

struct SweepRow {
    double scale = 1.0;
    bool ok = false;
    std::string error;
    double r0 = 0.0;
    std::optional<double> t0;
    double attack_rate = 0.0;
    std::optional<double> lambda;
};

SweepRow sweep_one(const epi::Scenario& base, double scale, const RunConfig& config) {
    SweepRow row;
    row.scale = scale;
    try {
        epi::Scenario scenario = base;
        scenario.params.beta *= scale;
        if (scenario.params.low_rank)
            for (epi::Field& b : scenario.params.low_rank->beta) b *= scale;

        row.r0 = epi::r0(scenario);
        epi::FinalSizeSolution sol =
            epi::solve_monotone(epi::make_problem(scenario), config.tol);
        row.attack_rate = sol.attack_rate;
        if (row.r0 > 1.0) {
            epi::IntegrationControls controls;
            controls.t_max = config.t_max;
            epi::LongTimeResult limit = epi::long_time_limit(scenario, controls);
            row.t0 = epi::find_t0(limit.trajectory, scenario.params);
            const double r_inf = epi::radius_at(scenario.params, limit.state.S);
            if (r_inf < 1.0)
                row.lambda = epi::estimate_decay_rate(scenario.params,
                                                      limit.state.S, r_inf).lambda;
        }
        row.ok = true;
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

int run_sweep(const RunConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    epi::Scenario base = load(config);

    std::vector<double> scales;
    std::stringstream ss(config.beta_scales);
    for (std::string tok; std::getline(ss, tok, ',');)
        if (!tok.empty()) scales.push_back(std::stod(tok));
    if (scales.empty()) throw std::runtime_error("sweep: empty --beta-scales");

    int workers = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("EPI_WORKERS")) workers = std::atoi(env);
    workers = std::max(1, std::min<int>(workers, static_cast<int>(scales.size())));

    std::vector<SweepRow> rows(scales.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < scales.size();
             i = next.fetch_add(1))
            rows[i] = sweep_one(base, scales[i], config);
    };
    std::vector<std::thread> pool;
    for (int i = 1; i < workers; ++i) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();

    std::ostringstream csv;
    csv << "beta_scale,r0,t0,attack_rate,lambda,error\n";
    for (const SweepRow& row : rows) {
        csv << g17(row.scale) << "," << (row.ok ? g17(row.r0) : "") << ","
            << (row.t0 ? g17(*row.t0) : "") << ","
            << (row.ok ? g17(row.attack_rate) : "") << ","
            << (row.lambda ? g17(*row.lambda) : "") << "," << row.error << "\n";
    }
    const std::string p = out_path(config, "sweep.csv");
    write_csv_atomic(p, csv.str());

    json headline{{"rows", rows.size()},
                  {"failures",
                   std::count_if(rows.begin(), rows.end(),
                                 [](const SweepRow& r) { return !r.ok; })}};
    const double wall = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - start).count();
    return emit_report(config, "sweep", std::move(headline), {p}, wall);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trait-structured SEIR epidemic toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    RunConfig config;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--scenario", config.scenario_path, "Scenario JSON file")
            ->required();
        cmd->add_option("--out", config.out_dir, "Output directory");
        cmd->add_option("--n", config.n_override, "Grid size override")
            ->check(CLI::Range(Eigen::Index{3}, Eigen::Index{100000}));
        cmd->add_option("--tol", config.tol, "Solver tolerance")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--tmax", config.t_max, "Time horizon")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--step", config.step, "RK4 step (0: automatic)");
        cmd->add_option("--output-every", config.output_every,
                        "Output spacing in time");
        cmd->add_option("--format", config.formats,
                        "Comma-separated output formats: csv,json");
        return cmd;
    };

    CLI::App* simulate = add_common(app.add_subcommand("simulate",
        "Integrate the SEIR system and export the trajectory"));
    CLI::App* final_size = add_common(app.add_subcommand("final-size",
        "Solve the final size equation"));
    CLI::App* spectral = add_common(app.add_subcommand("spectral",
        "R0, eigenfunctions, herd-immunity time and decay bound"));
    CLI::App* diffusion = add_common(app.add_subcommand("diffusion",
        "Diffusion variant: PDE run, final size, principal eigenvalue"));
    diffusion->add_option("--nu", config.diffusivity, "Diffusivity")
        ->check(CLI::PositiveNumber);
    CLI::App* reduced = add_common(app.add_subcommand("reduced",
        "Low-rank reduced ODE system"));
    int rank_hint = 0;
    reduced->add_option("--rank", rank_hint, "Expected kernel rank (checked)");
    reduced->add_flag("--collapse-e", config.collapse_exposed,
                      "Merge the exposed compartment into I");
    CLI::App* counterexample = add_common(app.add_subcommand("counterexample",
        "Enumerate the two-block final-size solutions"));
    CLI::App* sweep = add_common(app.add_subcommand("sweep",
        "Run a grid of kernel-scale overrides"));
    sweep->add_option("--beta-scales", config.beta_scales,
                      "Comma-separated multipliers for the contact kernel");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return run_simulate(config);
        if (final_size->parsed()) return run_final_size(config);
        if (spectral->parsed()) return run_spectral(config);
        if (diffusion->parsed()) return run_diffusion(config);
        if (reduced->parsed()) {
            if (rank_hint > 0) {
                epi::Scenario probe = load(config);
                const int actual = probe.params.low_rank
                                       ? probe.params.low_rank->rank() : 0;
                if (actual != rank_hint)
                    throw std::runtime_error(
                        "kernel rank is " + std::to_string(actual) +
                        ", --rank requested " + std::to_string(rank_hint));
            }
            return run_reduced(config);
        }
        if (counterexample->parsed()) return run_counterexample(config);
        if (sweep->parsed()) return run_sweep(config);
    } catch (const std::exception& e) {
        json err{{"error", e.what()}, {"scenario", config.scenario_path}};
        std::printf("%s\n", err.dump(2).c_str());
        return 1;
    }
    return 1;
}
