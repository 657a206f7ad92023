#pragma once

#include "fbmsde/errors.hpp"
#include "fbmsde/fbm.hpp"
#include "fbmsde/increments.hpp"
#include "fbmsde/levy_area.hpp"
#include "fbmsde/matrix.hpp"
#include "fbmsde/vector_field.hpp"

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace fbmsde {

struct Provenance {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::string field_id;
};

// Discrete solution on a uniform grid: states is (n+1) x d, row 0 = a.
struct Trajectory {
    UniformGrid grid;
    Matrix states;
    std::string scheme;
    Provenance provenance;
    // First node holding a non-finite state, if any. Schemes never abort.
    std::optional<std::size_t> first_invalid;

    std::size_t dim_state() const noexcept { return states.cols(); }
    std::span<const double> node(std::size_t k) const { return states.row(k); }
    bool valid() const noexcept { return !first_invalid.has_value(); }
};

// Piecewise-linear continuous extension of the trajectory at time t.
inline std::vector<double> evaluate(const Trajectory& traj, double t) {
    if (!(t >= 0.0 && t <= traj.grid.horizon)) throw DomainError("evaluation time outside [0, T]");
    const double r = t / traj.grid.horizon * static_cast<double>(traj.grid.n);
    const auto k = std::min(static_cast<std::size_t>(std::floor(r)), traj.grid.n - 1);
    const double frac = r - static_cast<double>(k);
    std::vector<double> out(traj.dim_state());
    for (std::size_t p = 0; p < out.size(); ++p)
        out[p] = frac == 0.0 ? traj.states(k, p) : traj.states(k, p) + frac * (traj.states(k + 1, p) - traj.states(k, p));
    return out;
}

// Columns t, y1..yd with '#' header lines for scheme, seed, field and n.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "# scheme: " << traj.scheme << '\n'
       << "# seed: " << traj.provenance.seed << '\n'
       << "# stream_id: " << traj.provenance.stream_id << '\n'
       << "# field: " << traj.provenance.field_id << '\n'
       << "# n: " << traj.grid.n << '\n';
    if (traj.first_invalid) os << "# first_invalid: " << *traj.first_invalid << '\n';
    os << "t";
    for (std::size_t p = 0; p < traj.dim_state(); ++p) os << ",y" << (p + 1);
    os << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k <= traj.grid.n; ++k) {
        os << traj.grid.time(k);
        for (double v : traj.node(k)) os << ',' << v;
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// One-step maps.

template <DiffusionField Field>
void euler_step(const Field& field, std::span<const double> y, std::span<const double> dx, std::span<double> out) {
    const Matrix s = field.sigma(y);
    for (std::size_t p = 0; p < y.size(); ++p) {
        double v = y[p];
        for (std::size_t i = 0; i < dx.size(); ++i) v += s(p, i) * dx[i];
        out[p] = v;
    }
}

// Second-order Taylor flow
//   Ψ(z) = z + Σ_i σ^{(i)}(z) dx_i + Σ_{i,j} 𝒟^{(i)}σ^{(j)}(z) area(i,j)
// where area(i,j) stands for ∫∫ dx^i dx^j over the step.
template <DiffusionField Field>
void taylor2_step(const Field& field, std::span<const double> y, std::span<const double> dx, const Matrix& area,
                  std::span<double> out) {
    const Matrix s = field.sigma(y);
    const Jacobian jac = field.jacobian(y);
    const std::size_t m = dx.size();
    for (std::size_t p = 0; p < y.size(); ++p) {
        double v = y[p];
        for (std::size_t i = 0; i < m; ++i) v += s(p, i) * dx[i];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) v += detail::d_operator_component(s, jac, i, j, p) * area(i, j);
        out[p] = v;
    }
}

// Heun (explicit trapezoid) step for the ODE dy = σ(y) dx with a linear driver.
template <DiffusionField Field>
void heun_step(const Field& field, std::span<const double> y, std::span<const double> dx, std::span<double> out) {
    const std::size_t d = y.size();
    const Matrix s0 = field.sigma(y);
    std::vector<double> k0(d, 0.0), pred(d);
    for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t i = 0; i < dx.size(); ++i) k0[p] += s0(p, i) * dx[i];
        pred[p] = y[p] + k0[p];
    }
    const Matrix s1 = field.sigma(pred);
    for (std::size_t p = 0; p < d; ++p) {
        double k1 = 0.0;
        for (std::size_t i = 0; i < dx.size(); ++i) k1 += s1(p, i) * dx[i];
        out[p] = y[p] + 0.5 * (k0[p] + k1);
    }
}

namespace detail {

template <DiffusionField Field>
Trajectory start_trajectory(const Field& field, const FbmPath& path, std::span<const double> a, std::string scheme,
                            std::string field_id) {
    require(path.dims() == field.dim_noise(), "path dimension does not match the field's noise dimension");
    require(a.size() == field.dim_state(), "initial state dimension does not match the field");
    Trajectory traj{UniformGrid{path.horizon(), path.n_steps()}, Matrix(path.n_steps() + 1, a.size()),
                    std::move(scheme), Provenance{path.seed(), path.stream_id(), std::move(field_id)}, std::nullopt};
    std::copy(a.begin(), a.end(), traj.states.row(0).begin());
    return traj;
}

inline void mark_validity(Trajectory& traj, std::size_t k) {
    if (traj.first_invalid) return;
    for (double v : traj.states.row(k))
        if (!std::isfinite(v)) {
            traj.first_invalid = k;
            return;
        }
}

template <class F>
std::string field_name(const F& field) {
    if constexpr (requires { field.id(); })
        return std::string(field.id());
    else
        return "custom";
}

} // namespace detail

// Y_{k+1} = Y_k + Σ_i σ^{(i)}(Y_k) δB^i_k
template <DiffusionField Field>
Trajectory euler(const Field& field, const FbmPath& path, std::span<const double> a) {
    Trajectory traj = detail::start_trajectory(field, path, a, "euler", detail::field_name(field));
    for (std::size_t k = 0; k < path.n_steps(); ++k) {
        const auto dB = path.increment(k);
        euler_step(field, traj.states.row(k), dB, traj.states.row(k + 1));
        detail::mark_validity(traj, k + 1);
    }
    return traj;
}

// Davie's scheme with the product approximation ½ δB^i δB^j of each area,
// which is the second-order Taylor step of the Wong–Zakai ODE on one cell.
template <DiffusionField Field>
Trajectory simplified_milstein(const Field& field, const FbmPath& path, std::span<const double> a) {
    Trajectory traj = detail::start_trajectory(field, path, a, "milstein", detail::field_name(field));
    for (std::size_t k = 0; k < path.n_steps(); ++k) {
        const auto dB = path.increment(k);
        taylor2_step(field, traj.states.row(k), dB, detail::half_outer(dB), traj.states.row(k + 1));
        detail::mark_validity(traj, k + 1);
    }
    return traj;
}

// Y_{k+1} = Y_k + Σ_i σ^{(i)} δB^i + Σ_{i,j} 𝒟^{(i)}σ^{(j)} A_k(i,j) with supplied areas.
template <DiffusionField Field>
Trajectory davie_milstein(const Field& field, const FbmPath& path, const LevyAreaGrid& areas,
                          std::span<const double> a) {
    detail::require(areas.grid == UniformGrid{path.horizon(), path.n_steps()} && areas.areas.size() == path.n_steps(),
                    "area grid does not match the path grid");
    detail::require(areas.dims == path.dims(), "area dimension does not match the path");
    Trajectory traj = detail::start_trajectory(field, path, a, "davie", detail::field_name(field));
    for (std::size_t k = 0; k < path.n_steps(); ++k) {
        const auto dB = path.increment(k);
        taylor2_step(field, traj.states.row(k), dB, areas.areas[k], traj.states.row(k + 1));
        detail::mark_validity(traj, k + 1);
    }
    return traj;
}

enum class OdeIntegrator { taylor2, heun };

constexpr std::string_view to_string(OdeIntegrator i) { return i == OdeIntegrator::taylor2 ? "taylor2" : "heun"; }

// Solves the ODE driven by the piecewise-linear interpolant of the path, with
// every cell split into `substeps` equal parts. On a sub-step the driver
// increment is δB/substeps and its area ½ (δB/substeps) ⊗ (δB/substeps).
template <DiffusionField Field>
Trajectory wong_zakai_solve(const Field& field, const FbmPath& path, std::span<const double> a, std::size_t substeps,
                            OdeIntegrator integrator = OdeIntegrator::taylor2) {
    detail::require(substeps >= 1, "substeps must be at least 1");
    Trajectory traj = detail::start_trajectory(field, path, a, "wong_zakai_" + std::string(to_string(integrator)),
                                               detail::field_name(field));
    const double inv = 1.0 / static_cast<double>(substeps);
    std::vector<double> y(a.size()), next(a.size());
    for (std::size_t k = 0; k < path.n_steps(); ++k) {
        std::vector<double> dx = path.increment(k);
        if (substeps > 1)
            for (double& v : dx) v *= inv;
        const Matrix area = detail::half_outer(dx);
        const auto row = traj.states.row(k);
        std::copy(row.begin(), row.end(), y.begin());
        for (std::size_t s = 0; s < substeps; ++s) {
            if (integrator == OdeIntegrator::taylor2)
                taylor2_step(field, y, dx, area, next);
            else
                heun_step(field, y, dx, next);
            std::swap(y, next);
        }
        std::copy(y.begin(), y.end(), traj.states.row(k + 1).begin());
        detail::mark_validity(traj, k + 1);
    }
    return traj;
}

enum class Scheme { euler, milstein, davie, wong_zakai_taylor2, wong_zakai_heun };

constexpr std::string_view to_string(Scheme s) {
    switch (s) {
    case Scheme::euler: return "euler";
    case Scheme::milstein: return "milstein";
    case Scheme::davie: return "davie";
    case Scheme::wong_zakai_taylor2: return "wz_taylor2";
    case Scheme::wong_zakai_heun: return "wz_heun";
    }
    return "?";
}

inline std::optional<Scheme> parse_scheme(std::string_view name) {
    if (name == "euler") return Scheme::euler;
    if (name == "milstein" || name == "simplified_milstein") return Scheme::milstein;
    if (name == "davie") return Scheme::davie;
    if (name == "wz_taylor2" || name == "wong_zakai" || name == "wong_zakai_taylor2") return Scheme::wong_zakai_taylor2;
    if (name == "wz_heun" || name == "wong_zakai_heun") return Scheme::wong_zakai_heun;
    return std::nullopt;
}

} // namespace fbmsde
