#pragma once

#include "fbmsde/errors.hpp"
#include "fbmsde/harness.hpp"
#include "fbmsde/schemes.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace fbmsde {

inline constexpr std::string_view library_version = "1.0.0";

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    if constexpr (std::is_floating_point_v<T>) {
        std::size_t used = 0;
        try {
            value = std::stod(text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        require(used == text.size() && used > 0, "config key '" + key + "': '" + text + "' is not a number");
    } else {
        const char* end = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(text.data(), end, value);
        require(ec == std::errc() && ptr == end, "config key '" + key + "': '" + text + "' is not an integer");
    }
    return value;
}

inline std::vector<double> parse_list(const std::string& key, std::string text) {
    for (char& c : text)
        if (c == ',' || c == '[' || c == ']') c = ' ';
    std::istringstream in(text);
    std::vector<double> out;
    for (std::string tok; in >> tok;) out.push_back(parse_number<double>(key, tok));
    require(!out.empty(), "config key '" + key + "' needs at least one value");
    return out;
}

inline const std::vector<std::string>& experiment_keys() {
    static const std::vector<std::string> keys{"hurst",    "horizon",  "field",      "a",       "gamma",
                                               "n_min_exp", "n_max_exp", "ref_factor", "num_paths", "scheme",
                                               "seed",     "out_dir",  "substeps",   "holder_stride", "threads"};
    return keys;
}

} // namespace detail

// `key = value` lines; blank lines and text after '#' are ignored.
inline KeyValues parse_key_values(std::istream& in) {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        detail::require(eq != std::string::npos, "config line " + std::to_string(lineno) + " is not 'key = value'");
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        detail::require(!key.empty(), "config line " + std::to_string(lineno) + " has an empty key");
        kv[key] = value;
    }
    return kv;
}

// Reads either a key-value file or a manifest.json written by a previous run.
inline KeyValues load_config_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    detail::require(in.good(), "cannot open config file " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const std::string head = detail::trim(text);
    if (!head.empty() && head.front() == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ParameterError("config file " + file.string() + " is not valid JSON: " + e.what());
        }
        const nlohmann::json& cfg = j.contains("config") ? j.at("config") : j;
        KeyValues kv;
        for (auto it = cfg.begin(); it != cfg.end(); ++it) {
            if (it->is_string()) kv[it.key()] = it->get<std::string>();
            else if (it->is_array()) {
                std::string joined;
                for (const auto& v : *it) joined += (joined.empty() ? "" : ",") + v.dump();
                kv[it.key()] = joined;
            } else kv[it.key()] = it->dump();
        }
        return kv;
    }
    std::istringstream in2(text);
    return parse_key_values(in2);
}

// Applies the entries of `kv` onto `cfg`. Keys outside `allowed` are reported
// together in one ParameterError.
inline void apply_config(ExperimentConfig& cfg, const KeyValues& kv,
                         const std::vector<std::string>& allowed = detail::experiment_keys()) {
    std::vector<std::string> unknown;
    for (const auto& [key, _] : kv)
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) unknown.push_back(key);
    if (!unknown.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw ParameterError(msg);
    }
    using detail::parse_number;
    for (const auto& [key, value] : kv) {
        if (key == "hurst") cfg.hurst = parse_number<double>(key, value);
        else if (key == "horizon") cfg.horizon = parse_number<double>(key, value);
        else if (key == "field") cfg.field = value;
        else if (key == "a") cfg.a = value.empty() || value == "[]" ? std::vector<double>{} : detail::parse_list(key, value);
        else if (key == "gamma") cfg.gamma = parse_number<double>(key, value);
        else if (key == "n_min_exp") cfg.n_min_exp = parse_number<int>(key, value);
        else if (key == "n_max_exp") cfg.n_max_exp = parse_number<int>(key, value);
        else if (key == "ref_factor") cfg.ref_factor = parse_number<std::size_t>(key, value);
        else if (key == "num_paths") cfg.num_paths = parse_number<std::size_t>(key, value);
        else if (key == "scheme") {
            auto s = parse_scheme(value);
            detail::require(s.has_value(), "config key 'scheme': unknown scheme '" + value + "'");
            cfg.scheme = *s;
        } else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "substeps") cfg.substeps = parse_number<std::size_t>(key, value);
        else if (key == "holder_stride") cfg.holder_stride = parse_number<std::size_t>(key, value);
        else if (key == "threads") cfg.threads = parse_number<std::size_t>(key, value);
    }
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
    return {{"hurst", cfg.hurst},         {"horizon", cfg.horizon},
            {"field", cfg.field},         {"a", cfg.a},
            {"gamma", cfg.gamma},         {"n_min_exp", cfg.n_min_exp},
            {"n_max_exp", cfg.n_max_exp}, {"ref_factor", cfg.ref_factor},
            {"num_paths", cfg.num_paths}, {"scheme", std::string(to_string(cfg.scheme))},
            {"seed", cfg.seed},           {"out_dir", cfg.out_dir},
            {"substeps", cfg.substeps},   {"holder_stride", cfg.holder_stride},
            {"threads", cfg.threads}};
}

// ---------------------------------------------------------------------------
// Report artifacts.

inline void write_errors_csv(std::ostream& os, const RateReport& r) {
    os << "path_id,n,sup_error,holder_error\n" << std::setprecision(17);
    for (const ErrorRow& row : r.rows) {
        os << row.path_id << ',' << row.n << ',' << row.sup_error << ',';
        if (std::isfinite(row.holder_error)) os << row.holder_error;
        os << '\n';
    }
}

inline nlohmann::json to_json(const RateReport& r) {
    auto fit_json = [](const std::optional<RateFit>& f) -> nlohmann::json {
        if (!f) return nullptr;
        return {{"slope", f->slope}, {"intercept", f->intercept}, {"r2", f->r2}, {"used", f->used}};
    };
    nlohmann::json path_slopes = nlohmann::json::array();
    for (double s : r.path_slopes) path_slopes.push_back(std::isfinite(s) ? nlohmann::json(s) : nlohmann::json());
    auto curve_json = [](const std::vector<double>& c) {
        nlohmann::json out = nlohmann::json::array();
        for (double v : c) out.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json());
        return out;
    };
    nlohmann::json j{{"experiment", r.experiment},
                     {"metric", r.metric},
                     {"aggregate", r.aggregate},
                     {"rate_family", r.rate_family},
                     {"hurst", r.hurst},
                     {"slope", r.fit ? nlohmann::json(r.fit->slope) : nlohmann::json()},
                     {"r2", r.fit ? nlohmann::json(r.fit->r2) : nlohmann::json()},
                     {"theory", r.theory_slope},
                     {"band", {r.band_lo, r.band_hi}},
                     {"pass", r.pass},
                     {"degenerate", r.degenerate},
                     {"unreliable", r.unreliable},
                     {"rate_below_resolution", r.rate_below_resolution},
                     {"exploded", r.exploded},
                     {"resolutions", r.resolutions},
                     {"curve", curve_json(r.curve)},
                     {"fit", fit_json(r.fit)},
                     {"path_slopes", path_slopes},
                     {"runtime_seconds", r.runtime_seconds},
                     {"notes", r.notes}};
    if (!r.secondary_metric.empty())
        j["secondary"] = {{"metric", r.secondary_metric},
                          {"curve", curve_json(r.secondary_curve)},
                          {"fit", fit_json(r.secondary_fit)}};
    return j;
}

// gnuplot script: log-log error against 1/n with the theoretical guide line
// anchored at the coarsest resolution.
inline void write_plot_script(std::ostream& os, const RateReport& r) {
    double anchor = 0.0;
    std::size_t anchor_n = 0;
    for (std::size_t q = 0; q < r.curve.size(); ++q)
        if (r.curve[q] > 0.0 && std::isfinite(r.curve[q])) {
            anchor = r.curve[q];
            anchor_n = r.resolutions[q];
            break;
        }
    os << std::setprecision(17);
    os << "set terminal pngcairo size 800,600\n"
       << "set output '" << r.experiment << ".png'\n"
       << "set logscale xy\n"
       << "set xlabel '1/n'\n"
       << "set ylabel '" << r.metric << " (" << r.aggregate << ")'\n"
       << "set key left top\n"
       << "$data << EOD\n";
    for (std::size_t q = 0; q < r.curve.size(); ++q)
        if (r.curve[q] > 0.0 && std::isfinite(r.curve[q])) os << 1.0 / static_cast<double>(r.resolutions[q]) << ' ' << r.curve[q] << '\n';
    os << "EOD\n";
    if (anchor_n > 0) {
        // theory: e(n) = anchor * (n / anchor_n)^theory  <=>  anchor * (x * anchor_n)^(-theory)
        os << "guide(x) = " << anchor << " * (x * " << anchor_n << ")**(" << -r.theory_slope << ")\n"
           << "plot $data using 1:2 with linespoints title 'measured', guide(x) with lines dt 2 title 'slope "
           << r.theory_slope << "'\n";
    } else {
        os << "plot $data using 1:2 with linespoints title 'measured'\n";
    }
}

} // namespace fbmsde
