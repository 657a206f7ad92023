#pragma once

#include "fbmsde/errors.hpp"
#include "fbmsde/matrix.hpp"

#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fbmsde {

// Partial derivatives ∂σ_p^{(i)}/∂x_l of a d x m diffusion matrix.
class Jacobian {
public:
    Jacobian(std::size_t d, std::size_t m) : d_(d), m_(m), data_(d * m * d, 0.0) {}

    double& operator()(std::size_t p, std::size_t i, std::size_t l) { return data_[(p * m_ + i) * d_ + l]; }
    double operator()(std::size_t p, std::size_t i, std::size_t l) const { return data_[(p * m_ + i) * d_ + l]; }

    std::size_t dim_state() const noexcept { return d_; }
    std::size_t dim_noise() const noexcept { return m_; }

private:
    std::size_t d_;
    std::size_t m_;
    std::vector<double> data_;
};

// A diffusion coefficient σ: R^d -> R^{d x m}. Column i of sigma(y) is σ^{(i)}(y).
template <class F>
concept DiffusionField = requires(const F& f, std::span<const double> y) {
    { f.dim_state() } -> std::convertible_to<std::size_t>;
    { f.dim_noise() } -> std::convertible_to<std::size_t>;
    { f.sigma(y) } -> std::convertible_to<Matrix>;
    { f.jacobian(y) } -> std::convertible_to<Jacobian>;
};

// Type-erased field. The Jacobian is the supplied closed form when given,
// otherwise central differences with step cbrt(eps) * max(1, |y_l|).
class VectorField {
public:
    using SigmaFn = std::function<Matrix(std::span<const double>)>;
    using JacobianFn = std::function<Jacobian(std::span<const double>)>;

    VectorField(std::string id, std::size_t dim_state, std::size_t dim_noise, SigmaFn sigma,
                JacobianFn jacobian = nullptr)
        : id_(std::move(id)), d_(dim_state), m_(dim_noise), sigma_(std::move(sigma)), jacobian_(std::move(jacobian)) {
        detail::require(d_ >= 1 && m_ >= 1, "vector field dimensions must be positive");
        detail::require(static_cast<bool>(sigma_), "vector field needs a sigma function");
    }

    const std::string& id() const noexcept { return id_; }
    std::size_t dim_state() const noexcept { return d_; }
    std::size_t dim_noise() const noexcept { return m_; }
    bool has_analytic_jacobian() const noexcept { return static_cast<bool>(jacobian_); }

    Matrix sigma(std::span<const double> y) const { return sigma_(y); }

    Jacobian jacobian(std::span<const double> y) const {
        if (jacobian_) return jacobian_(y);
        return finite_difference_jacobian(y);
    }

    Jacobian finite_difference_jacobian(std::span<const double> y) const {
        Jacobian jac(d_, m_);
        const double base = std::cbrt(std::numeric_limits<double>::epsilon());
        std::vector<double> probe(y.begin(), y.end());
        for (std::size_t l = 0; l < d_; ++l) {
            const double h = base * std::fmax(1.0, std::fabs(y[l]));
            probe[l] = y[l] + h;
            const Matrix up = sigma_(probe);
            probe[l] = y[l] - h;
            const Matrix down = sigma_(probe);
            probe[l] = y[l];
            for (std::size_t p = 0; p < d_; ++p)
                for (std::size_t i = 0; i < m_; ++i) jac(p, i, l) = (up(p, i) - down(p, i)) / (2.0 * h);
        }
        return jac;
    }

    // Same field with the closed-form Jacobian dropped.
    VectorField without_jacobian() const { return VectorField(id_ + "-fd", d_, m_, sigma_); }

private:
    std::string id_;
    std::size_t d_;
    std::size_t m_;
    SigmaFn sigma_;
    JacobianFn jacobian_;
};

static_assert(DiffusionField<VectorField>);

namespace detail {

// 𝒟^{(i)}σ^{(j)}_p = Σ_l σ_l^{(i)} ∂_l σ_p^{(j)}
inline double d_operator_component(const Matrix& sigma, const Jacobian& jac, std::size_t i, std::size_t j,
                                   std::size_t p) {
    double s = 0.0;
    for (std::size_t l = 0; l < jac.dim_state(); ++l) s += sigma(l, i) * jac(p, j, l);
    return s;
}

} // namespace detail

// 𝒟^{(i)}σ^{(j)}(y) with 0-based noise indices i, j.
template <DiffusionField Field>
std::vector<double> d_operator(const Field& field, std::span<const double> y, std::size_t i, std::size_t j) {
    detail::require(y.size() == field.dim_state(), "state dimension mismatch");
    detail::require(i < field.dim_noise() && j < field.dim_noise(), "noise index out of range");
    for (double v : y)
        if (!std::isfinite(v)) throw DomainError("d_operator evaluated at a non-finite state");
    const Matrix sigma = field.sigma(y);
    const Jacobian jac = field.jacobian(y);
    std::vector<double> out(field.dim_state());
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = detail::d_operator_component(sigma, jac, i, j, p);
    return out;
}

// ---------------------------------------------------------------------------
// Built-in fields.

// dY = cos(Y) dB^1 + sin(Y) dB^2, scalar state.
inline VectorField make_trig2d() {
    return VectorField(
        "trig2d", 1, 2,
        [](std::span<const double> y) {
            Matrix s(1, 2);
            s(0, 0) = std::cos(y[0]);
            s(0, 1) = std::sin(y[0]);
            return s;
        },
        [](std::span<const double> y) {
            Jacobian j(1, 2);
            j(0, 0, 0) = -std::sin(y[0]);
            j(0, 1, 0) = std::cos(y[0]);
            return j;
        });
}

// dY^1 = Y^2 dB^1, dY^2 = Y^1 dB^2.
inline VectorField make_linear2x2() {
    return VectorField(
        "linear2x2", 2, 2,
        [](std::span<const double> y) {
            Matrix s(2, 2);
            s(0, 0) = y[1];
            s(1, 1) = y[0];
            return s;
        },
        [](std::span<const double>) {
            Jacobian j(2, 2);
            j(0, 0, 1) = 1.0;
            j(1, 1, 0) = 1.0;
            return j;
        });
}

// dY = Y dB, solution exp(B_t) for Y_0 = 1.
inline VectorField make_geometric1d() {
    return VectorField(
        "geometric1d", 1, 1,
        [](std::span<const double> y) {
            Matrix s(1, 1);
            s(0, 0) = y[0];
            return s;
        },
        [](std::span<const double>) {
            Jacobian j(1, 1);
            j(0, 0, 0) = 1.0;
            return j;
        });
}

// dY = dB with σ ≡ I.
inline VectorField make_purenoise(std::size_t dims = 1) {
    return VectorField(
        "purenoise", dims, dims,
        [dims](std::span<const double>) {
            Matrix s(dims, dims);
            for (std::size_t k = 0; k < dims; ++k) s(k, k) = 1.0;
            return s;
        },
        [dims](std::span<const double>) { return Jacobian(dims, dims); });
}

// Constant diffusion matrix.
inline VectorField make_constant_field(Matrix sigma) {
    const std::size_t d = sigma.rows(), m = sigma.cols();
    return VectorField(
        "constant", d, m, [sigma](std::span<const double>) { return sigma; },
        [d, m](std::span<const double>) { return Jacobian(d, m); });
}

struct BuiltinField {
    VectorField field;
    std::vector<double> initial_state;
};

inline std::optional<BuiltinField> builtin_field(const std::string& name) {
    if (name == "trig2d") return BuiltinField{make_trig2d(), {1.0}};
    if (name == "linear2x2") return BuiltinField{make_linear2x2(), {1.0, 2.0}};
    if (name == "geometric1d") return BuiltinField{make_geometric1d(), {1.0}};
    if (name == "purenoise") return BuiltinField{make_purenoise(1), {0.0}};
    return std::nullopt;
}

} // namespace fbmsde
