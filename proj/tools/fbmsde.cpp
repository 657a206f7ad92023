#include "fbmsde/config.hpp"
#include "fbmsde/fbm.hpp"
#include "fbmsde/harness.hpp"
#include "fbmsde/levy_area.hpp"
#include "fbmsde/schemes.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace fbmsde;

namespace {

// Options beyond ExperimentConfig used by individual subcommands.
struct Settings {
    ExperimentConfig exp;
    std::size_t n = 64;
    std::size_t dims = 2;
    std::size_t reps = 2000;
    std::size_t steps_per_unit = 256;
    double s1 = 0.0, t1 = 1.0, s2 = 2.0, t2 = 3.0;
    std::string integrator = "taylor2";
    std::string method = "auto";
};

struct Command {
    std::string name;
    std::string help;
    std::vector<std::string> keys;
    void (*defaults)(Settings&);
    void (*run)(const Settings&, const fs::path&);
};

const std::map<std::string, std::string>& key_help() {
    static const std::map<std::string, std::string> h{
        {"hurst", "Hurst parameter H in (0, 1)"},
        {"horizon", "time horizon T"},
        {"field", "builtin vector field: trig2d, linear2x2, geometric1d, purenoise"},
        {"a", "initial state, comma separated"},
        {"gamma", "Hoelder exponent of the error norm"},
        {"n_min_exp", "smallest resolution 2^k"},
        {"n_max_exp", "largest resolution 2^k"},
        {"ref_factor", "reference refinement factor"},
        {"num_paths", "number of sample paths"},
        {"scheme", "euler, milstein, davie, wz_taylor2, wz_heun"},
        {"seed", "master seed"},
        {"out_dir", "output directory"},
        {"substeps", "Wong-Zakai ODE substeps per cell"},
        {"holder_stride", "node stride of the Hoelder norm"},
        {"threads", "worker threads (0 = all cores)"},
        {"n", "number of grid steps"},
        {"dims", "number of fBm components"},
        {"reps", "Monte Carlo repetitions"},
        {"steps_per_unit", "fine grid steps per unit time"},
        {"s1", "first interval start"},
        {"t1", "first interval end"},
        {"s2", "second interval start"},
        {"t2", "second interval end"},
        {"integrator", "Wong-Zakai ODE integrator: taylor2 or heun"},
        {"method", "fBm sampler: auto, circulant or cholesky"},
    };
    return h;
}

const std::vector<std::string> common_keys{"seed", "threads", "out_dir"};

std::vector<std::string> with_common(std::vector<std::string> keys) {
    keys.insert(keys.end(), common_keys.begin(), common_keys.end());
    return keys;
}

void apply_settings(Settings& s, const KeyValues& kv, const std::vector<std::string>& allowed) {
    using detail::parse_number;
    std::vector<std::string> unknown;
    for (const auto& [key, _] : kv)
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) unknown.push_back(key);
    if (!unknown.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw ParameterError(msg);
    }
    KeyValues rest;
    for (const auto& [key, value] : kv) {
        if (key == "n") s.n = parse_number<std::size_t>(key, value);
        else if (key == "dims") s.dims = parse_number<std::size_t>(key, value);
        else if (key == "reps") s.reps = parse_number<std::size_t>(key, value);
        else if (key == "steps_per_unit") s.steps_per_unit = parse_number<std::size_t>(key, value);
        else if (key == "s1") s.s1 = parse_number<double>(key, value);
        else if (key == "t1") s.t1 = parse_number<double>(key, value);
        else if (key == "s2") s.s2 = parse_number<double>(key, value);
        else if (key == "t2") s.t2 = parse_number<double>(key, value);
        else if (key == "integrator") {
            detail::require(value == "taylor2" || value == "heun", "integrator must be taylor2 or heun");
            s.integrator = value;
        } else if (key == "method") {
            detail::require(value == "auto" || value == "circulant" || value == "cholesky",
                            "method must be auto, circulant or cholesky");
            s.method = value;
        } else rest[key] = value;
    }
    apply_config(s.exp, rest);
}

nlohmann::json resolved(const Settings& s, const std::vector<std::string>& keys) {
    nlohmann::json all = to_json(s.exp);
    all.update(nlohmann::json{{"n", s.n},
                              {"dims", s.dims},
                              {"reps", s.reps},
                              {"steps_per_unit", s.steps_per_unit},
                              {"s1", s.s1},
                              {"t1", s.t1},
                              {"s2", s.s2},
                              {"t2", s.t2},
                              {"integrator", s.integrator},
                              {"method", s.method}});
    nlohmann::json out = nlohmann::json::object();
    for (const auto& k : keys) out[k] = all.at(k);
    return out;
}

std::ofstream open_output(const fs::path& file, std::ios::openmode mode = std::ios::out) {
    std::ofstream os(file, mode);
    if (!os) throw InternalError("cannot write " + file.string());
    return os;
}

void write_json(const fs::path& file, const nlohmann::json& j) {
    auto os = open_output(file);
    os << j.dump(2) << '\n';
}

void write_report(const RateReport& r, const fs::path& dir, bool error_rows = true) {
    if (error_rows) {
        auto os = open_output(dir / "errors.csv");
        write_errors_csv(os, r);
    }
    write_json(dir / "rates.json", to_json(r));
    auto gp = open_output(dir / "plot.gp");
    write_plot_script(gp, r);
    std::cout << r.experiment << ": slope ";
    if (r.fit) std::cout << r.fit->slope;
    else std::cout << "n/a";
    std::cout << " (theory " << r.theory_slope << ", band [" << r.band_lo << ", " << r.band_hi << "]) "
              << (r.pass ? "PASS" : "FAIL") << (r.degenerate ? " degenerate" : "")
              << (r.unreliable ? " unreliable" : "") << '\n';
    for (const auto& note : r.notes) std::cout << "  note: " << note << '\n';
}

std::optional<SamplingMethod> sampling_method(const std::string& m) {
    if (m == "circulant") return SamplingMethod::circulant;
    if (m == "cholesky") return SamplingMethod::cholesky;
    return std::nullopt;
}

void run_fbm_sample(const Settings& s, const fs::path& dir) {
    const FbmSampler sampler(s.exp.hurst, s.exp.horizon, s.n, s.dims, sampling_method(s.method));
    const FbmPath path = sampler.sample(s.exp.seed, 0);
    auto csv = open_output(dir / "path.csv");
    write_csv(csv, path);
    auto bin = open_output(dir / "path.bin", std::ios::out | std::ios::binary);
    write_binary(bin, path);
    std::cout << "fbm-sample: " << s.n << " steps, " << s.dims << " components, "
              << (sampler.method() == SamplingMethod::circulant ? "circulant" : "cholesky") << " sampler\n";
}

void run_simulate(const Settings& s, const fs::path& dir) {
    const BuiltinField builtin = detail::resolve_field(s.exp);
    if (s.exp.scheme == Scheme::euler && s.exp.hurst < 0.5)
        std::cerr << "warning: the Euler scheme is divergent for H < 1/2; the trajectory does not approximate the "
                     "solution\n";
    const std::size_t factor = s.exp.scheme == Scheme::davie ? s.exp.ref_factor : 1;
    detail::require(factor >= 1, "ref_factor must be positive");
    const FbmPath fine = sample_fbm(s.exp.hurst, s.exp.horizon, s.n * factor, builtin.field.dim_noise(), s.exp.seed, 0);
    const Trajectory traj =
        detail::run_scheme(s.exp.scheme, builtin.field, fine, factor, builtin.initial_state, s.exp.substeps);
    auto os = open_output(dir / "trajectory.csv");
    write_trajectory_csv(os, traj);
    std::cout << "simulate: " << to_string(s.exp.scheme) << " on " << s.exp.field << ", Y_T =";
    for (double v : traj.node(traj.grid.n)) std::cout << ' ' << v;
    std::cout << (traj.valid() ? "" : " (non-finite states)") << '\n';
}

void run_convergence(const Settings& s, const fs::path& dir) { write_report(run_scheme_convergence(s.exp), dir); }

void run_holder(const Settings& s, const fs::path& dir) { write_report(run_holder_optimality(s.exp), dir); }

void run_wz(const Settings& s, const fs::path& dir) {
    const OdeIntegrator integ = s.integrator == "heun" ? OdeIntegrator::heun : OdeIntegrator::taylor2;
    write_report(run_wongzakai_gap(s.exp, integ), dir);
}

void run_levy(const Settings& s, const fs::path& dir) {
    s.exp.validate();
    LevyRateOptions opt;
    opt.hurst = s.exp.hurst;
    opt.horizon = s.exp.horizon;
    opt.resolutions = s.exp.resolutions();
    opt.reps = s.reps;
    opt.seed = s.exp.seed;
    opt.ref_factor = s.exp.ref_factor;
    opt.threads = s.exp.threads;
    const RateReport r = run_levy_area_rate(opt);
    auto os = open_output(dir / "area_errors.csv");
    os << "rep,n,area_error\n" << std::setprecision(17);
    for (const ErrorRow& row : r.rows) os << row.path_id << ',' << row.n << ',' << row.sup_error << '\n';
    write_report(r, dir, false);
}

void run_euler_div(const Settings& s, const fs::path& dir) {
    s.exp.validate();
    const EulerDivergenceReport r =
        run_euler_divergence(s.exp.hurst, s.exp.resolutions(), s.exp.num_paths, s.exp.seed, s.exp.threads);
    auto os = open_output(dir / "euler_div.csv");
    os << "n,median_abs_euler,median_milstein_error\n" << std::setprecision(17);
    for (std::size_t q = 0; q < r.resolutions.size(); ++q)
        os << r.resolutions[q] << ',' << r.median_abs_euler[q] << ',' << r.median_milstein_error[q] << '\n';
    write_json(dir / "rates.json", {{"experiment", "euler_divergence"},
                                    {"hurst", r.hurst},
                                    {"resolutions", r.resolutions},
                                    {"median_abs_euler", r.median_abs_euler},
                                    {"median_milstein_error", r.median_milstein_error},
                                    {"median_exact", r.median_exact},
                                    {"tail_decreasing", r.tail_decreasing},
                                    {"final_ratio", r.final_ratio},
                                    {"informational", r.informational},
                                    {"pass", r.pass},
                                    {"runtime_seconds", r.runtime_seconds}});
    std::cout << "euler-div: final ratio " << r.final_ratio << ", Milstein error " << r.median_milstein_error.back()
              << (r.informational ? " (informational)" : r.pass ? " PASS" : " FAIL") << '\n';
}

void run_area_cov(const Settings& s, const fs::path& dir) {
    const CovarianceQuadrature q = area_cross_covariance_quadrature(s.s1, s.t1, s.s2, s.t2, s.exp.hurst);
    const AreaCovarianceEstimate mc = monte_carlo_area_covariance(s.s1, s.t1, s.s2, s.t2, s.exp.hurst, s.exp.num_paths,
                                                                  s.steps_per_unit, s.exp.seed, s.exp.threads);
    const double z = (q.value - mc.covariance) / mc.standard_error;
    write_json(dir / "area_cov.json", {{"quadrature", {{"value", q.value},
                                                       {"order", q.order},
                                                       {"relative_change", q.relative_change},
                                                       {"converged", q.converged}}},
                                       {"monte_carlo", {{"covariance", mc.covariance},
                                                        {"standard_error", mc.standard_error},
                                                        {"mean_first", mc.mean_first},
                                                        {"mean_second", mc.mean_second},
                                                        {"paths", mc.paths},
                                                        {"steps_per_unit", mc.steps_per_unit}}},
                                       {"z_score", z}});
    std::cout << "area-cov: quadrature " << q.value << ", Monte Carlo " << mc.covariance << " +- "
              << mc.standard_error << " (z = " << z << ")\n";
}

const std::vector<std::string> experiment_keys{"hurst",     "horizon",   "field",      "a",
                                               "gamma",     "n_min_exp", "n_max_exp",  "ref_factor",
                                               "num_paths", "scheme",    "substeps",   "holder_stride"};

const std::vector<Command>& commands() {
    static const std::vector<Command> c{
        {"fbm-sample", "sample one fBm path (path.csv, path.bin)",
         with_common({"hurst", "horizon", "n", "dims", "method"}), [](Settings& s) { s.exp.hurst = 0.5; }, run_fbm_sample},
        {"simulate", "solve one SDE path with a chosen scheme (trajectory.csv)",
         with_common({"hurst", "horizon", "field", "a", "n", "scheme", "ref_factor", "substeps"}), [](Settings&) {},
         run_simulate},
        {"convergence", "sup and Hoelder error rates against a fine reference", with_common(experiment_keys),
         [](Settings&) {}, run_convergence},
        {"holder-opt", "Hoelder-norm error rate on the additive-noise field",
         with_common({"hurst", "horizon", "gamma", "n_min_exp", "n_max_exp", "ref_factor", "num_paths", "holder_stride"}),
         [](Settings& s) { s.exp.field = "purenoise"; }, run_holder},
        {"levy-rate", "RMS rate of the discrete Levy-area approximation",
         with_common({"hurst", "horizon", "n_min_exp", "n_max_exp", "ref_factor", "reps"}),
         [](Settings& s) {
             s.exp.hurst = 0.4;
             s.exp.n_min_exp = 3;
             s.exp.ref_factor = 64;
         },
         run_levy},
        {"euler-div", "Euler against simplified Milstein for dY = Y dB",
         with_common({"hurst", "n_min_exp", "n_max_exp", "num_paths"}),
         [](Settings& s) {
             s.exp.field = "geometric1d";
             s.exp.hurst = 0.4;
             s.exp.n_max_exp = 12;
             s.exp.num_paths = 100;
         },
         run_euler_div},
        {"wz-gap", "gap between simplified Milstein and the Wong-Zakai solution",
         with_common({"hurst", "horizon", "field", "a", "n_min_exp", "n_max_exp", "num_paths", "substeps", "integrator"}),
         [](Settings&) {}, run_wz},
        {"area-cov", "Levy-area cross covariance: quadrature against Monte Carlo",
         with_common({"hurst", "s1", "t1", "s2", "t2", "num_paths", "steps_per_unit"}),
         [](Settings& s) {
             s.exp.hurst = 0.75;
             s.exp.num_paths = 10000;
         },
         run_area_cov},
    };
    return c;
}

std::string flag_name(const std::string& key) {
    std::string f = "--" + key;
    std::replace(f.begin(), f.end(), '_', '-');
    return f;
}

int dispatch(const Command& cmd, const std::string& config_path, const KeyValues& flags) {
    Settings s;
    cmd.defaults(s);
    if (!config_path.empty()) apply_settings(s, load_config_file(config_path), cmd.keys);
    apply_settings(s, flags, cmd.keys);
    const fs::path dir = s.exp.out_dir;
    fs::create_directories(dir);
    cmd.run(s, dir);
    write_json(dir / "manifest.json", {{"library_version", std::string(library_version)},
                                       {"subcommand", cmd.name},
                                       {"config", resolved(s, cmd.keys)}});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical schemes for SDEs driven by fractional Brownian motion"};
    app.set_version_flag("--version", std::string(library_version));
    app.require_subcommand(1);

    std::map<std::string, std::string> config_paths;
    std::map<std::string, std::map<std::string, std::pair<CLI::Option*, std::string>>> values;
    for (const Command& cmd : commands()) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        sub->add_option("--config", config_paths[cmd.name], "key = value file or manifest.json");
        auto& slots = values[cmd.name];
        for (const auto& key : cmd.keys) {
            auto& slot = slots[key];
            slot.first = sub->add_option(flag_name(key), slot.second, key_help().at(key));
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "fbmsde: " << e.what() << '\n';
        return 2;
    }

    for (const Command& cmd : commands()) {
        if (!app.got_subcommand(cmd.name)) continue;
        KeyValues flags;
        for (const auto& [key, slot] : values[cmd.name])
            if (slot.first->count() > 0) flags[key] = slot.second;
        try {
            return dispatch(cmd, config_paths[cmd.name], flags);
        } catch (const ParameterError& e) {
            std::cerr << "fbmsde: parameter error: " << e.what() << '\n';
            return 2;
        } catch (const DomainError& e) {
            std::cerr << "fbmsde: domain error: " << e.what() << '\n';
            return 2;
        } catch (const UnsupportedParameterError& e) {
            std::cerr << "fbmsde: unsupported parameter: " << e.what() << '\n';
            return 2;
        } catch (const std::exception& e) {
            std::cerr << "fbmsde: internal error: " << e.what() << '\n';
            return 1;
        }
    }
    return 1;
}
