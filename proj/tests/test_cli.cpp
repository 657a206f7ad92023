#include <json.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Sandbox {
    fs::path root;
    fs::path work;
    fs::path log;

    explicit Sandbox(const std::string& name) {
        root = fs::temp_directory_path() / ("fbmsde_cli_" + name);
        fs::remove_all(root);
        work = root / "work";
        fs::create_directories(work);
        log = root / "stderr.txt";
    }

    // Runs the CLI with cwd = work; stderr goes to `log` outside the work tree.
    int run(const std::string& args) const {
        const std::string cmd = "cd '" + work.string() + "' && '" FBMSDE_CLI "' " + args + " > '" +
                                (root / "stdout.txt").string() + "' 2> '" + log.string() + "'";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const fs::path& p) const {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    std::string stderr_text() const { return read(log); }

    void write(const std::string& name, const std::string& content) const { std::ofstream(work / name) << content; }

    std::vector<std::string> entries(const fs::path& dir) const {
        std::vector<std::string> out;
        for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path().filename().string());
        std::sort(out.begin(), out.end());
        return out;
    }
};

} // namespace

TEST(Cli, FbmSampleIsByteIdenticalAcrossRuns) {
    const Sandbox sb("fbm_sample");
    ASSERT_EQ(sb.run("fbm-sample --hurst 0.5 --n 4 --seed 1 --out-dir first"), 0);
    ASSERT_EQ(sb.run("fbm-sample --hurst 0.5 --n 4 --seed 1 --out-dir second"), 0);
    for (const char* f : {"path.csv", "path.bin"}) {
        const std::string a = sb.read(sb.work / "first" / f), b = sb.read(sb.work / "second" / f);
        EXPECT_FALSE(a.empty());
        EXPECT_EQ(a, b) << f;
    }
    EXPECT_EQ(sb.entries(sb.work), (std::vector<std::string>{"first", "second"}));
    EXPECT_EQ(sb.entries(sb.work / "first"), (std::vector<std::string>{"manifest.json", "path.bin", "path.csv"}));
    const std::string csv = sb.read(sb.work / "first" / "path.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(Cli, UnknownConfigKeysExitTwoAndAreListed) {
    const Sandbox sb("unknown_keys");
    sb.write("bad.cfg", "hurst = 0.7\nhurts = 0.7\ngama = 0.4\n");
    EXPECT_EQ(sb.run("convergence --config bad.cfg --out-dir out"), 2);
    const std::string err = sb.stderr_text();
    EXPECT_NE(err.find("hurts"), std::string::npos);
    EXPECT_NE(err.find("gama"), std::string::npos);
    EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1);
}

TEST(Cli, ParameterErrorsExitTwo) {
    const Sandbox sb("param_errors");
    EXPECT_EQ(sb.run("convergence --hurst 1.5 --out-dir out"), 2);
    EXPECT_EQ(sb.run("simulate --field nosuch --out-dir out"), 2);
    EXPECT_EQ(sb.run("simulate --scheme rk4 --out-dir out"), 2);
    EXPECT_EQ(sb.run("levy-rate --reps 10 --out-dir out"), 2);
    EXPECT_EQ(sb.run("bogus-command"), 2);
    EXPECT_EQ(sb.run("fbm-sample --no-such-flag 1"), 2);
    EXPECT_EQ(sb.run("fbm-sample --n abc"), 2);
    EXPECT_EQ(sb.run("fbm-sample --config missing.cfg"), 2);
}

TEST(Cli, SimulateEulerWarnsBelowHalf) {
    const Sandbox sb("simulate_euler");
    ASSERT_EQ(sb.run("simulate --field geometric1d --scheme euler --hurst 0.4 --out-dir out"), 0);
    EXPECT_NE(sb.stderr_text().find("divergent"), std::string::npos);
    const std::string traj = sb.read(sb.work / "out" / "trajectory.csv");
    EXPECT_NE(traj.find("# scheme: euler"), std::string::npos);
    EXPECT_NE(traj.find("t,y1\n0,1\n"), std::string::npos);

    ASSERT_EQ(sb.run("simulate --field geometric1d --scheme milstein --hurst 0.4 --out-dir out2"), 0);
    EXPECT_EQ(sb.stderr_text().find("divergent"), std::string::npos);
}

TEST(Cli, ConvergenceWritesArtifactsWithExpectedSlope) {
    const Sandbox sb("convergence");
    sb.write("fig2.cfg",
             "# trig2d, H = 0.7\nhurst = 0.7\nfield = trig2d\ngamma = 0.4\nn_min_exp = 4\nn_max_exp = 10\n"
             "ref_factor = 16\nnum_paths = 4\nscheme = milstein\nseed = 2015\nout_dir = fig2\n");
    ASSERT_EQ(sb.run("convergence --config fig2.cfg --threads 1"), 0);
    EXPECT_EQ(sb.entries(sb.work), (std::vector<std::string>{"fig2", "fig2.cfg"}));
    EXPECT_EQ(sb.entries(sb.work / "fig2"),
              (std::vector<std::string>{"errors.csv", "manifest.json", "plot.gp", "rates.json"}));
    const auto rates = nlohmann::json::parse(sb.read(sb.work / "fig2" / "rates.json"));
    EXPECT_NEAR(rates.at("slope").get<double>(), -0.9, 0.15);
    EXPECT_TRUE(rates.at("pass").get<bool>());
    const std::string errors = sb.read(sb.work / "fig2" / "errors.csv");
    EXPECT_EQ(errors.rfind("path_id,n,sup_error,holder_error\n", 0), 0u);
    EXPECT_EQ(std::count(errors.begin(), errors.end(), '\n'), 1 + 4 * 7);

    const auto manifest = nlohmann::json::parse(sb.read(sb.work / "fig2" / "manifest.json"));
    EXPECT_EQ(manifest.at("subcommand"), "convergence");
    EXPECT_FALSE(manifest.at("library_version").get<std::string>().empty());
    EXPECT_EQ(manifest.at("config").at("seed"), 2015);
    EXPECT_EQ(manifest.at("config").at("threads"), 1);
}

TEST(Cli, FlagsOverrideConfig) {
    const Sandbox sb("override");
    sb.write("run.cfg", "hurst = 0.3\nn = 8\nout_dir = cfg_out\n");
    ASSERT_EQ(sb.run("fbm-sample --config run.cfg --n 16 --out-dir flag_out"), 0);
    EXPECT_EQ(sb.entries(sb.work), (std::vector<std::string>{"flag_out", "run.cfg"}));
    const auto manifest = nlohmann::json::parse(sb.read(sb.work / "flag_out" / "manifest.json"));
    EXPECT_EQ(manifest.at("config").at("n"), 16);
    EXPECT_EQ(manifest.at("config").at("hurst"), 0.3);
}

TEST(Cli, ManifestReproducesRunsExactly) {
    const Sandbox sb("manifest");
    struct Case {
        std::string args;
        std::string artifact;
    };
    const std::vector<Case> cases{
        {"simulate --field linear2x2 --scheme davie --hurst 0.6 --n 32 --seed 9", "trajectory.csv"},
        {"wz-gap --n-max-exp 7 --substeps 16 --num-paths 2 --integrator heun", "errors.csv"},
        {"holder-opt --n-max-exp 7 --num-paths 2 --gamma 0.3", "errors.csv"},
        {"levy-rate --reps 500 --n-max-exp 5 --ref-factor 8", "area_errors.csv"},
        {"euler-div --num-paths 10 --n-max-exp 8", "euler_div.csv"},
        {"area-cov --num-paths 200 --steps-per-unit 16", "area_cov.json"},
        {"fbm-sample --method cholesky --n 10 --dims 3", "path.bin"},
    };
    for (std::size_t k = 0; k < cases.size(); ++k) {
        const std::string first = "run" + std::to_string(k);
        ASSERT_EQ(sb.run(cases[k].args + " --out-dir " + first), 0) << cases[k].args << sb.stderr_text();
        const fs::path manifest = sb.work / first / "manifest.json";
        const std::string sub = nlohmann::json::parse(sb.read(manifest)).at("subcommand");
        const std::string again = "again" + std::to_string(k);
        ASSERT_EQ(sb.run(sub + " --config " + manifest.string() + " --out-dir " + again), 0) << sb.stderr_text();
        EXPECT_EQ(sb.read(sb.work / first / cases[k].artifact), sb.read(sb.work / again / cases[k].artifact))
            << cases[k].args;
    }
}

TEST(Cli, HelpAndVersionExitZero) {
    const Sandbox sb("help");
    EXPECT_EQ(sb.run("--help"), 0);
    EXPECT_EQ(sb.run("convergence --help"), 0);
    EXPECT_EQ(sb.run("--version"), 0);
    EXPECT_TRUE(sb.entries(sb.work).empty());
}
