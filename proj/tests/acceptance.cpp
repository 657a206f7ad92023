// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include "fbmsde/harness.hpp"
#include "fbmsde/increments.hpp"
#include "fbmsde/levy_area.hpp"
#include "fbmsde/schemes.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace fbmsde;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void run(int id, const char* title, double budget_seconds, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > budget_seconds) {
        std::ostringstream os;
        os << out.detail << "; over runtime budget " << budget_seconds << "s";
        out.detail = os.str();
    }
    if (!out.pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", out.pass ? "PASS" : "FAIL", id, title, out.detail.c_str(), secs);
    std::fflush(stdout);
}

double rel_err(double a, double b, double scale) { return std::fabs(a - b) / std::fmax(scale, 1e-300); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome algebraic_identities() {
    std::mt19937_64 gen(7);
    std::uniform_int_distribution<std::size_t> pick_n(2, 64), pick_w(1, 4);
    std::normal_distribution<double> normal;
    std::vector<std::string> broken;

    // δδ = 0 on random grid functions.
    double worst_dd = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = pick_n(gen), w = pick_w(gen);
        Matrix v(n + 1, w);
        for (std::size_t k = 0; k <= n; ++k)
            for (std::size_t c = 0; c < w; ++c) v(k, c) = 10.0 * normal(gen);
        const GridFunction1 f(UniformGrid{1.0, n}, v);
        const GridIncrement2 h = delta1(f);
        const double scale = v.max_abs();
        std::uniform_int_distribution<std::size_t> node(0, n);
        for (int r = 0; r < 20; ++r) {
            std::size_t idx[3] = {node(gen), node(gen), node(gen)};
            std::sort(idx, idx + 3);
            for (double x : delta2_evaluate(h, idx[0], idx[1], idx[2])) worst_dd = std::fmax(worst_dd, std::fabs(x) / scale);
        }
    }
    if (worst_dd > 1e-12) broken.push_back(fmt("delta-delta %.2e", worst_dd));

    double worst_diag = 0.0, worst_parts = 0.0, worst_parts_cell = 0.0, worst_chen = 0.0, worst_prod = 0.0, worst_scheme = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const double hurst = 0.3 + 0.05 * static_cast<double>(trial % 12);
        const std::size_t factor = 1 + trial % 4, n_coarse = 4 + trial;
        const FbmPath fine = sample_fbm(hurst, 1.0 + 0.1 * trial, factor * n_coarse, 3, 99, trial);
        const LevyAreaGrid interp = area_fine_reference(fine, factor);
        const LevyAreaGrid prod = area_linear_interpolant(fine, factor);
        LevyAreaGrid product_method = area_product(subsample(fine, factor));
        const FbmPath coarse = subsample(fine, factor);

        // Diagonal: ∫∫ dB^i dB^i = ½ (δB^i)², over the whole interval.
        const Matrix total = area_over(interp, fine, 0, n_coarse);
        const auto bt = fine.node(fine.n_steps());
        for (std::size_t i = 0; i < 3; ++i)
            worst_diag = std::fmax(worst_diag, rel_err(total(i, i), 0.5 * bt[i] * bt[i], 0.5 * bt[i] * bt[i]));

        // By parts per cell: A(i,j) + A(j,i) = δB^i δB^j. Single product cells
        // satisfy it to the last bit; composed cells carry summation rounding.
        for (std::size_t k = 0; k < n_coarse; ++k) {
            const auto d = coarse.increment(k);
            const double scale = std::fmax(outer(d, d).max_abs(), 1e-300);
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 3; ++j) {
                    const double composed = interp.areas[k](i, j) + interp.areas[k](j, i);
                    const double single = product_method.areas[k](i, j) + product_method.areas[k](j, i);
                    worst_parts = std::fmax(worst_parts, std::fabs(composed - d[i] * d[j]) / scale);
                    worst_parts_cell = std::fmax(worst_parts_cell, std::fabs(single - d[i] * d[j]) / scale);
                }
        }

        // Chen defects.
        std::uniform_int_distribution<std::size_t> node(0, n_coarse);
        for (int r = 0; r < 10; ++r) {
            std::size_t idx[3] = {node(gen), node(gen), node(gen)};
            std::sort(idx, idx + 3);
            const auto a = coarse.increment(idx[0], idx[1]);
            const auto b = coarse.increment(idx[1], idx[2]);
            const double scale = std::fmax(outer(a, b).max_abs() + area_over(interp, fine, idx[0], idx[2]).max_abs(), 1e-300);
            worst_chen = std::fmax(worst_chen, chen_defect(interp, fine, idx[0], idx[1], idx[2]).max_abs() / scale);
            worst_chen = std::fmax(worst_chen, chen_defect(prod, fine, idx[0], idx[1], idx[2]).max_abs() / scale);
            Matrix expected = outer(b, a) - outer(a, b);
            expected *= 0.5;
            const Matrix got = chen_defect(product_method, coarse, idx[0], idx[1], idx[2]);
            worst_prod = std::fmax(worst_prod, (got - expected).max_abs() / std::fmax(outer(a, b).max_abs(), 1e-300));
        }

        // Scheme equivalences on random fields.
        const VectorField fields[] = {make_trig2d(), make_linear2x2()};
        const VectorField& field = fields[trial % 2];
        const FbmPath drv = sample_fbm(hurst, 1.0, 32 + trial, 2, 5, trial);
        std::vector<double> a(field.dim_state());
        for (double& x : a) x = normal(gen);
        const Trajectory z = simplified_milstein(field, drv, a);
        const Trajectory d = davie_milstein(field, drv, area_product(drv), a);
        const Trajectory w = wong_zakai_solve(field, drv, a, 1, OdeIntegrator::taylor2);
        const double scale = std::fmax(z.states.max_abs(), 1e-300);
        worst_scheme = std::fmax(worst_scheme, (z.states - d.states).max_abs() / scale);
        worst_scheme = std::fmax(worst_scheme, (z.states - w.states).max_abs() / scale);
    }
    if (worst_diag > 1e-12) broken.push_back(fmt("diagonal %.2e", worst_diag));
    if (worst_parts > 1e-14) broken.push_back(fmt("by-parts composed %.2e", worst_parts));
    if (worst_parts_cell > 2 * std::numeric_limits<double>::epsilon()) broken.push_back(fmt("by-parts cell %.2e", worst_parts_cell));
    if (worst_chen > 1e-12) broken.push_back(fmt("chen interpolant %.2e", worst_chen));
    if (worst_prod > 1e-12) broken.push_back(fmt("chen product %.2e", worst_prod));
    if (worst_scheme > 1e-13) broken.push_back(fmt("scheme identity %.2e", worst_scheme));

    std::string detail = fmt("dd=%.1e diag=%.1e parts=%.1e", worst_dd, worst_diag, std::fmax(worst_parts, worst_parts_cell)) +
                         fmt(" chen=%.1e prod=%.1e schemes=%.1e", worst_chen, worst_prod, worst_scheme);
    for (const auto& b : broken) detail += "; broken: " + b;
    return {broken.empty(), detail};
}

Outcome fbm_law() {
    const std::size_t N = 100000, n = 64;
    const std::size_t lags[] = {1, 2, 4, 8, 16};
    bool ok = true;
    std::string detail;
    for (double hurst : {0.4, 0.75}) {
        const FbmSampler sampler(hurst, 1.0, n, 1);
        std::vector<double> incs[5], x1(N), x2(N);
        for (auto& v : incs) v.resize(N);
        parallel_for(N, 0, [&](std::size_t p) {
            const FbmPath path = sampler.sample(2024, p);
            const auto& v = path.values();
            // Increments from a fixed interior node, so each statistic averages independent paths.
            constexpr std::size_t base = 20;
            for (std::size_t q = 0; q < 5; ++q) incs[q][p] = v(base + lags[q], 0) - v(base, 0);
            x1[p] = v(base + 1, 0) - v(base, 0);
            x2[p] = v(base + 2, 0) - v(base + 1, 0);
        });
        double worst_z = 0.0;
        for (std::size_t q = 0; q < 5; ++q) {
            double s = 0.0, s2 = 0.0;
            for (double x : incs[q]) s += x * x, s2 += x * x * x * x;
            const double mean = s / N, var = s2 / N - mean * mean;
            const double se = std::sqrt(var / (N - 1));
            const double target = std::pow(static_cast<double>(lags[q]) / n, 2.0 * hurst);
            worst_z = std::fmax(worst_z, std::fabs(mean - target) / se);
        }
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::size_t p = 0; p < N; ++p)
            sx += x1[p], sy += x2[p], sxx += x1[p] * x1[p], syy += x2[p] * x2[p], sxy += x1[p] * x2[p];
        const double cov = sxy / N - sx / N * sy / N;
        const double rho = cov / std::sqrt((sxx / N - sx / N * sx / N) * (syy / N - sy / N * sy / N));
        const double rho_true = std::pow(2.0, 2.0 * hurst - 1.0) - 1.0;
        const double rho_se = (1.0 - rho_true * rho_true) / std::sqrt(static_cast<double>(N));
        const double rho_z = std::fabs(rho - rho_true) / rho_se;
        ok = ok && worst_z < 4.0 && rho_z < 4.0;
        detail += fmt("H=%.2f max|z_var|=%.2f ", hurst, worst_z) + fmt("|z_rho|=%.2f (rho=%.4f); ", rho_z, rho);
    }
    return {ok, detail};
}

Outcome levy_rate() {
    bool ok = true;
    std::string detail;
    for (double hurst : {0.4, 0.75}) {
        LevyRateOptions opt;
        opt.hurst = hurst;
        opt.resolutions = {8, 16, 32, 64, 128, 256, 512, 1024};
        opt.reps = 2000;
        opt.seed = 31;
        const RateReport r = run_levy_area_rate(opt);
        ok = ok && r.pass;
        detail += fmt("H=%.2f slope=%.3f theory=%.2f; ", hurst, r.fit ? r.fit->slope : NAN, r.theory_slope);
    }
    return {ok, detail};
}

Outcome section5() {
    bool ok = true;
    std::string detail;
    for (const char* field : {"trig2d", "linear2x2"}) {
        for (double hurst : {0.7, 0.4}) {
            ExperimentConfig cfg;
            cfg.field = field;
            cfg.hurst = hurst;
            cfg.n_min_exp = 4;
            cfg.n_max_exp = 10;
            cfg.ref_factor = 16;
            cfg.num_paths = 4;
            cfg.gamma = hurst > 0.5 ? 0.4 : 0.35;
            cfg.seed = 2015;
            const RateReport r = run_scheme_convergence(cfg);
            ok = ok && r.pass && !r.unreliable;
            detail += std::string(field) + fmt(" H=%.1f slope=%.3f (theory %.2f); ", hurst,
                                               r.fit ? r.fit->slope : NAN, r.theory_slope);
        }
    }
    return {ok, detail};
}

Outcome holder_optimality() {
    ExperimentConfig cfg;
    cfg.hurst = 0.7;
    cfg.gamma = 0.4;
    cfg.n_min_exp = 4;
    cfg.n_max_exp = 12;
    cfg.num_paths = 32;
    cfg.seed = 77;
    const RateReport r = run_holder_optimality(cfg);
    const double slope = r.fit ? r.fit->slope : NAN;
    return {slope >= -0.45 && slope <= -0.25, fmt("slope=%.3f, required [-0.45, -0.25]", slope)};
}

Outcome euler_divergence() {
    std::vector<std::size_t> res;
    for (int e = 4; e <= 12; ++e) res.push_back(std::size_t{1} << e);
    const EulerDivergenceReport r = run_euler_divergence(0.4, res, 100, 404);
    const double mil = r.median_milstein_error.back();
    const bool ok = r.tail_decreasing && r.final_ratio < 0.1 && mil < 1e-2;
    return {ok, fmt("tail decreasing=%g, |Y|/exp(B1) ratio=%.3g, milstein median error=%.3g",
                    r.tail_decreasing ? 1.0 : 0.0, r.final_ratio, mil)};
}

Outcome wong_zakai_gap() {
    ExperimentConfig cfg;
    cfg.field = "trig2d";
    cfg.hurst = 0.7;
    cfg.n_min_exp = 4;
    cfg.n_max_exp = 10;
    cfg.num_paths = 4;
    cfg.substeps = 256;
    cfg.seed = 256;
    const RateReport r = run_wongzakai_gap(cfg);
    const double slope = r.fit ? r.fit->slope : NAN;
    return {r.pass && std::fabs(slope + 1.1) <= 0.2, fmt("slope=%.3f, required -1.1 +- 0.2", slope)};
}

Outcome covariance_quadrature() {
    const double hurst = 0.75;
    const CovarianceQuadrature q = area_cross_covariance_quadrature(0.0, 1.0, 2.0, 3.0, hurst);
    const AreaCovarianceEstimate mc = monte_carlo_area_covariance(0.0, 1.0, 2.0, 3.0, hurst, 100000, 256, 88);
    const double z = std::fabs(q.value - mc.covariance) / mc.standard_error;
    const bool ok = q.converged && q.relative_change < 1e-8 && z < 4.0;
    return {ok, fmt("quadrature=%.6e (rel change %.1e)", q.value, q.relative_change) +
                    fmt(", monte carlo=%.6e +- %.2e, |z|=%.2f", mc.covariance, mc.standard_error, z)};
}

} // namespace

int main() {
    run(1, "algebraic identities", 60, algebraic_identities);
    run(2, "fBm increment law", 60, fbm_law);
    run(3, "Levy-area rate", 180, levy_rate);
    run(4, "scheme convergence on trig2d and linear2x2", 300, section5);
    run(5, "Holder-rate optimality", 120, holder_optimality);
    run(6, "Euler divergence", 60, euler_divergence);
    run(7, "Wong-Zakai discretisation gap", 120, wong_zakai_gap);
    run(8, "area covariance quadrature", 120, covariance_quadrature);
    std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
