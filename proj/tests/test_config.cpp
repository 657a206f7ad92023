#include "fbmsde/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fbmsde;

namespace {

KeyValues parse(const std::string& text) {
    std::istringstream in(text);
    return parse_key_values(in);
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
    const auto dir = std::filesystem::temp_directory_path() / "fbmsde_test_config";
    std::filesystem::create_directories(dir);
    const auto p = dir / name;
    std::ofstream(p) << content;
    return p;
}

RateReport sample_report() {
    RateReport r;
    r.experiment = "scheme_convergence";
    r.metric = "sup_error";
    r.aggregate = "median";
    r.rate_family = "milstein";
    r.hurst = 0.7;
    r.resolutions = {16, 32, 64};
    r.rows = {{0, 16, 0.25, 0.5}, {0, 32, 0.125, std::nan("")}};
    r.curve = {0.25, 0.125, 0.0625};
    r.fit = fit_loglog_rate(std::vector<double>{16, 32, 64}, r.curve);
    r.theory_slope = -0.9;
    r.band_lo = -1.05;
    r.band_hi = -0.75;
    r.pass = false;
    r.path_slopes = {-1.0};
    r.notes = {"a note"};
    return r;
}

} // namespace

TEST(KeyValues, ParsesCommentsAndWhitespace) {
    const KeyValues kv = parse("# header\n  hurst = 0.6  # trailing\n\nfield=linear2x2\na = 1.5, -2\n");
    ASSERT_EQ(kv.size(), 3u);
    EXPECT_EQ(kv.at("hurst"), "0.6");
    EXPECT_EQ(kv.at("field"), "linear2x2");
    EXPECT_EQ(kv.at("a"), "1.5, -2");
}

TEST(KeyValues, RejectsMalformedLines) {
    EXPECT_THROW(parse("hurst 0.6\n"), ParameterError);
    EXPECT_THROW(parse(" = 3\n"), ParameterError);
}

TEST(ApplyConfig, SetsEveryKey) {
    ExperimentConfig cfg;
    apply_config(cfg, parse("hurst=0.6\nhorizon=2\nfield=linear2x2\na=[3, 4]\ngamma=0.35\nn_min_exp=3\n"
                            "n_max_exp=7\nref_factor=32\nnum_paths=9\nscheme=davie\nseed=18446744073709551615\n"
                            "out_dir=results\nsubsteps=64\nholder_stride=2\nthreads=1\n"));
    EXPECT_EQ(cfg.hurst, 0.6);
    EXPECT_EQ(cfg.horizon, 2.0);
    EXPECT_EQ(cfg.field, "linear2x2");
    EXPECT_EQ(cfg.a, (std::vector<double>{3.0, 4.0}));
    EXPECT_EQ(cfg.gamma, 0.35);
    EXPECT_EQ(cfg.n_min_exp, 3);
    EXPECT_EQ(cfg.n_max_exp, 7);
    EXPECT_EQ(cfg.ref_factor, 32u);
    EXPECT_EQ(cfg.num_paths, 9u);
    EXPECT_EQ(cfg.scheme, Scheme::davie);
    EXPECT_EQ(cfg.seed, 18446744073709551615ull);
    EXPECT_EQ(cfg.out_dir, "results");
    EXPECT_EQ(cfg.substeps, 64u);
    EXPECT_EQ(cfg.holder_stride, 2u);
    EXPECT_EQ(cfg.threads, 1u);
}

TEST(ApplyConfig, UnknownKeysAreAllListed) {
    ExperimentConfig cfg;
    try {
        apply_config(cfg, parse("hurst=0.6\nhurts=0.6\nfeild=trig2d\n"));
        FAIL() << "expected ParameterError";
    } catch (const ParameterError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("hurts"), std::string::npos);
        EXPECT_NE(msg.find("feild"), std::string::npos);
    }
    EXPECT_EQ(cfg.hurst, ExperimentConfig{}.hurst);
}

TEST(ApplyConfig, BadValues) {
    ExperimentConfig cfg;
    EXPECT_THROW(apply_config(cfg, parse("hurst=0.6x\n")), ParameterError);
    EXPECT_THROW(apply_config(cfg, parse("num_paths=-3\n")), ParameterError);
    EXPECT_THROW(apply_config(cfg, parse("n_max_exp=1.5\n")), ParameterError);
    EXPECT_THROW(apply_config(cfg, parse("scheme=rk4\n")), ParameterError);
    EXPECT_THROW(apply_config(cfg, parse("a=1,,x\n")), ParameterError);
}

TEST(ApplyConfig, RestrictedKeySet) {
    ExperimentConfig cfg;
    EXPECT_THROW(apply_config(cfg, parse("substeps=4\n"), {"hurst"}), ParameterError);
    EXPECT_NO_THROW(apply_config(cfg, parse("hurst=0.3\n"), {"hurst"}));
}

TEST(Manifest, JsonRoundTrip) {
    ExperimentConfig cfg;
    cfg.hurst = 0.55;
    cfg.field = "linear2x2";
    cfg.a = {0.25, -1.0};
    cfg.seed = 987654321987ull;
    cfg.scheme = Scheme::wong_zakai_heun;
    nlohmann::json manifest{{"library_version", std::string(library_version)}, {"config", to_json(cfg)}};
    const auto file = temp_file("manifest.json", manifest.dump(2));
    ExperimentConfig back;
    apply_config(back, load_config_file(file));
    EXPECT_EQ(to_json(back), to_json(cfg));

    cfg.a.clear();
    const auto file2 = temp_file("manifest2.json", nlohmann::json{{"config", to_json(cfg)}}.dump());
    ExperimentConfig back2;
    back2.a = {5.0};
    apply_config(back2, load_config_file(file2));
    EXPECT_TRUE(back2.a.empty());
}

TEST(Manifest, KeyValueFileAndErrors) {
    const auto file = temp_file("run.cfg", "hurst = 0.45\nscheme = euler\n");
    const KeyValues kv = load_config_file(file);
    EXPECT_EQ(kv.at("scheme"), "euler");
    EXPECT_THROW(load_config_file(file.parent_path() / "missing.cfg"), ParameterError);
    EXPECT_THROW(load_config_file(temp_file("bad.json", "{\"hurst\": ")), ParameterError);
}

TEST(Artifacts, ErrorsCsv) {
    std::ostringstream os;
    write_errors_csv(os, sample_report());
    std::istringstream in(os.str());
    std::string header, l1, l2, extra;
    std::getline(in, header);
    std::getline(in, l1);
    std::getline(in, l2);
    EXPECT_EQ(header, "path_id,n,sup_error,holder_error");
    EXPECT_EQ(l1, "0,16,0.25,0.5");
    EXPECT_EQ(l2, "0,32,0.125,");
    EXPECT_FALSE(std::getline(in, extra));
}

TEST(Artifacts, RatesJson) {
    const nlohmann::json j = to_json(sample_report());
    EXPECT_EQ(j.at("experiment"), "scheme_convergence");
    EXPECT_NEAR(j.at("slope").get<double>(), -1.0, 1e-12);
    EXPECT_EQ(j.at("theory").get<double>(), -0.9);
    EXPECT_EQ(j.at("band").size(), 2u);
    EXPECT_FALSE(j.at("pass").get<bool>());
    EXPECT_EQ(j.at("curve").size(), 3u);
    EXPECT_EQ(j.at("fit").at("used"), 3u);
    EXPECT_EQ(j.at("notes").at(0), "a note");
    EXPECT_FALSE(j.contains("secondary"));
    RateReport none = sample_report();
    none.fit.reset();
    EXPECT_TRUE(to_json(none).at("slope").is_null());
}

TEST(Artifacts, PlotScript) {
    std::ostringstream os;
    write_plot_script(os, sample_report());
    const std::string s = os.str();
    EXPECT_NE(s.find("set logscale xy"), std::string::npos);
    EXPECT_NE(s.find("0.0625 0.25"), std::string::npos);
    EXPECT_NE(s.find("guide(x) = 0.25 * (x * 16)**(0.9"), std::string::npos);
    EXPECT_NE(s.find("scheme_convergence.png"), std::string::npos);
}
