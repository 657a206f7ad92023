#pragma once

#include "fbmsde/errors.hpp"
#include "fbmsde/fft.hpp"
#include "fbmsde/matrix.hpp"
#include "fbmsde/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace fbmsde {

// Multidimensional path sampled on the uniform grid t_k = kT/n.
// values() is (n+1) x dims with row k = B_{t_k}; row 0 is zero.
class FbmPath {
public:
    FbmPath(double hurst, double horizon, Matrix values, std::uint64_t seed = 0, std::uint64_t stream_id = 0)
        : hurst_(hurst), horizon_(horizon), seed_(seed), stream_id_(stream_id), values_(std::move(values)) {
        detail::require(horizon_ > 0.0 && std::isfinite(horizon_), "path horizon must be positive and finite");
        detail::require(values_.rows() >= 2, "path needs at least one step");
        detail::require(values_.cols() >= 1, "path needs at least one component");
        for (double v : values_.row(0))
            detail::require(v == 0.0, "path must start at the origin");
    }

    double hurst() const noexcept { return hurst_; }
    double horizon() const noexcept { return horizon_; }
    std::size_t n_steps() const noexcept { return values_.rows() - 1; }
    std::size_t dims() const noexcept { return values_.cols(); }
    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    const Matrix& values() const noexcept { return values_; }

    double step() const noexcept { return horizon_ / static_cast<double>(n_steps()); }
    double time(std::size_t k) const noexcept {
        return horizon_ * static_cast<double>(k) / static_cast<double>(n_steps());
    }
    std::span<const double> node(std::size_t k) const { return values_.row(k); }

    // δB over [t_k, t_{k+1}]
    std::vector<double> increment(std::size_t k) const { return increment(k, k + 1); }

    // δB over [t_i, t_j]
    std::vector<double> increment(std::size_t i, std::size_t j) const {
        std::vector<double> d(dims());
        for (std::size_t c = 0; c < dims(); ++c) d[c] = values_(j, c) - values_(i, c);
        return d;
    }

    bool operator==(const FbmPath&) const = default;

private:
    double hurst_;
    double horizon_;
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    Matrix values_;
};

// R(s,t) = ½(s^{2H} + t^{2H} − |t−s|^{2H})
inline double fbm_covariance(double s, double t, double hurst) {
    const double h2 = 2.0 * hurst;
    return 0.5 * (std::pow(s, h2) + std::pow(t, h2) - std::pow(std::fabs(t - s), h2));
}

// Autocovariance of unit-spacing fractional Gaussian noise at integer lag k.
inline double fgn_autocovariance(std::size_t k, double hurst) {
    const double h2 = 2.0 * hurst;
    const double x = static_cast<double>(k);
    if (k == 0) return 1.0;
    return 0.5 * (std::pow(x + 1.0, h2) - 2.0 * std::pow(x, h2) + std::pow(x - 1.0, h2));
}

// Eigenvalues λ_0..λ_n of the 2n-circulant embedding of the Toeplitz matrix
// with first row autocov[0..n]. The remaining eigenvalues mirror these.
inline std::vector<double> circulant_eigenvalues(std::span<const double> autocov) {
    detail::require(autocov.size() >= 2, "circulant embedding needs at least two autocovariances");
    const std::size_t n = autocov.size() - 1;
    const std::size_t len = 2 * n;
    fft::RealBuffer row(len);
    for (std::size_t j = 0; j <= n; ++j) row[j] = autocov[j];
    for (std::size_t j = 1; j < n; ++j) row[len - j] = autocov[j];
    fft::ComplexBuffer spectrum(n + 1);
    fft::forward_real(row, spectrum);
    std::vector<double> eig(n + 1);
    for (std::size_t k = 0; k <= n; ++k) eig[k] = spectrum[k][0];
    return eig;
}

// Clamp round-off negatives; returns the most negative eigenvalue if any
// falls below -rel_tol * max, in which case the embedding is unusable.
inline std::optional<double> clamp_embedding_eigenvalues(std::vector<double>& eig, double rel_tol = 1e-12) {
    const double max_eig = *std::max_element(eig.begin(), eig.end());
    const double floor = -rel_tol * std::fmax(max_eig, 0.0);
    double worst = 0.0;
    bool failed = max_eig <= 0.0;
    for (double& v : eig) {
        if (v < 0.0) {
            if (v < floor) {
                failed = true;
                worst = std::fmin(worst, v);
            } else {
                v = 0.0;
            }
        }
    }
    if (failed) return worst;
    return std::nullopt;
}

enum class SamplingMethod { circulant, cholesky };

// Exact sampler for fBm on a fixed grid. The spectral (or Cholesky) factor is
// computed once; sample() is const and safe to call concurrently.
class FbmSampler {
public:
    FbmSampler(double hurst, double horizon, std::size_t n_steps, std::size_t dims,
               std::optional<SamplingMethod> force = std::nullopt)
        : hurst_(hurst), horizon_(horizon), n_(n_steps), dims_(dims) {
        detail::require(std::isfinite(hurst) && hurst > 0.0 && hurst < 1.0, "hurst must lie in (0, 1)");
        detail::require(std::isfinite(horizon) && horizon > 0.0, "horizon must be positive");
        detail::require(n_steps >= 1, "n_steps must be at least 1");
        detail::require(dims >= 1, "dims must be at least 1");
        scale_ = std::pow(horizon / static_cast<double>(n_steps), hurst);

        std::vector<double> autocov(n_ + 1);
        for (std::size_t k = 0; k <= n_; ++k) autocov[k] = fgn_autocovariance(k, hurst);

        if (force != SamplingMethod::cholesky) {
            std::vector<double> eig = circulant_eigenvalues(autocov);
            auto bad = clamp_embedding_eigenvalues(eig);
            if (!bad || force == SamplingMethod::circulant) {
                if (bad) {
                    std::ostringstream os;
                    os << "circulant embedding has negative eigenvalue " << *bad;
                    throw InternalError(os.str());
                }
                method_ = SamplingMethod::circulant;
                const double len = 2.0 * static_cast<double>(n_);
                spectral_.resize(n_ + 1);
                for (std::size_t k = 0; k <= n_; ++k) {
                    const bool real_mode = (k == 0 || k == n_);
                    spectral_[k] = std::sqrt(eig[k] / (real_mode ? len : 2.0 * len));
                }
                return;
            }
            fallback_eigenvalue_ = *bad;
        }
        method_ = SamplingMethod::cholesky;
        build_cholesky(autocov);
    }

    double hurst() const noexcept { return hurst_; }
    double horizon() const noexcept { return horizon_; }
    std::size_t n_steps() const noexcept { return n_; }
    std::size_t dims() const noexcept { return dims_; }
    SamplingMethod method() const noexcept { return method_; }
    // Most negative embedding eigenvalue when the Cholesky fallback was taken.
    std::optional<double> fallback_eigenvalue() const noexcept { return fallback_eigenvalue_; }

    FbmPath sample(std::uint64_t seed, std::uint64_t stream_id) const {
        Matrix values(n_ + 1, dims_);
        std::vector<double> noise(n_);
        for (std::size_t c = 0; c < dims_; ++c) {
            GaussianStream stream(seed, stream_id, c);
            if (method_ == SamplingMethod::circulant)
                sample_noise_circulant(stream, noise);
            else
                sample_noise_cholesky(stream, noise);
            double acc = 0.0;
            for (std::size_t k = 0; k < n_; ++k) {
                acc += scale_ * noise[k];
                values(k + 1, c) = acc;
            }
        }
        return FbmPath(hurst_, horizon_, std::move(values), seed, stream_id);
    }

private:
    void sample_noise_circulant(GaussianStream& stream, std::vector<double>& out) const {
        const std::size_t len = 2 * n_;
        fft::ComplexBuffer w(n_ + 1);
        w[0][0] = spectral_[0] * stream();
        w[0][1] = 0.0;
        for (std::size_t k = 1; k < n_; ++k) {
            w[k][0] = spectral_[k] * stream();
            w[k][1] = spectral_[k] * stream();
        }
        w[n_][0] = spectral_[n_] * stream();
        w[n_][1] = 0.0;
        fft::RealBuffer y(len);
        fft::backward_to_real(w, y);
        for (std::size_t k = 0; k < n_; ++k) out[k] = y[k];
    }

    void sample_noise_cholesky(GaussianStream& stream, std::vector<double>& out) const {
        std::vector<double> z(n_);
        for (double& v : z) v = stream();
        for (std::size_t r = 0; r < n_; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c <= r; ++c) s += chol_(r, c) * z[c];
            out[r] = s;
        }
    }

    void build_cholesky(const std::vector<double>& autocov) {
        chol_ = Matrix(n_, n_);
        for (std::size_t r = 0; r < n_; ++r) {
            for (std::size_t c = 0; c <= r; ++c) {
                double s = autocov[r - c];
                for (std::size_t k = 0; k < c; ++k) s -= chol_(r, k) * chol_(c, k);
                if (r == c) {
                    if (!(s > 0.0)) {
                        std::ostringstream os;
                        os << "fBm covariance is not positive definite (pivot " << s << " at row " << r << ")";
                        if (fallback_eigenvalue_) os << " after embedding eigenvalue " << *fallback_eigenvalue_;
                        throw InternalError(os.str());
                    }
                    chol_(r, r) = std::sqrt(s);
                } else {
                    chol_(r, c) = s / chol_(c, c);
                }
            }
        }
    }

    double hurst_;
    double horizon_;
    std::size_t n_;
    std::size_t dims_;
    double scale_ = 1.0;
    SamplingMethod method_ = SamplingMethod::circulant;
    std::optional<double> fallback_eigenvalue_;
    std::vector<double> spectral_;
    Matrix chol_;
};

inline FbmPath sample_fbm(double hurst, double horizon, std::size_t n_steps, std::size_t dims,
                          std::uint64_t seed, std::uint64_t stream_id) {
    return FbmSampler(hurst, horizon, n_steps, dims).sample(seed, stream_id);
}

// B^{n,T}_t: the piecewise-linear interpolant of the path at time t.
inline std::vector<double> interpolate_linear(const FbmPath& path, double t) {
    if (!(t >= 0.0 && t <= path.horizon()))
        throw DomainError("interpolation time outside [0, T]");
    const double n = static_cast<double>(path.n_steps());
    const double r = t / path.horizon() * n;
    const double nearest = std::round(r);
    const auto& v = path.values();
    if (std::fabs(r - nearest) <= 4.0 * std::numeric_limits<double>::epsilon() * std::fmax(1.0, r)) {
        auto row = v.row(static_cast<std::size_t>(nearest));
        return {row.begin(), row.end()};
    }
    const auto k = std::min(static_cast<std::size_t>(std::floor(r)), path.n_steps() - 1);
    const double frac = r - static_cast<double>(k);
    std::vector<double> out(path.dims());
    for (std::size_t c = 0; c < path.dims(); ++c)
        out[c] = v(k, c) + frac * (v(k + 1, c) - v(k, c));
    return out;
}

// Restriction of the same realisation to the grid {k * factor * T / n}.
inline FbmPath subsample(const FbmPath& path, std::size_t factor) {
    detail::require(factor >= 1 && path.n_steps() % factor == 0, "subsample factor must divide n_steps");
    const std::size_t coarse = path.n_steps() / factor;
    Matrix values(coarse + 1, path.dims());
    for (std::size_t k = 0; k <= coarse; ++k) {
        auto src = path.node(k * factor);
        std::copy(src.begin(), src.end(), values.row(k).begin());
    }
    return FbmPath(path.hurst(), path.horizon(), std::move(values), path.seed(), path.stream_id());
}

// Appends the deterministic driver t as the last column, so a drift b can be
// passed as an extra diffusion column.
inline FbmPath append_time_column(const FbmPath& path) {
    Matrix values(path.n_steps() + 1, path.dims() + 1);
    for (std::size_t k = 0; k <= path.n_steps(); ++k) {
        for (std::size_t c = 0; c < path.dims(); ++c) values(k, c) = path.values()(k, c);
        values(k, path.dims()) = path.time(k);
    }
    return FbmPath(path.hurst(), path.horizon(), std::move(values), path.seed(), path.stream_id());
}

// ---------------------------------------------------------------------------
// Serialisation
//
// Binary layout (little-endian): "FBM1", f64 hurst, f64 horizon, u64 n,
// u64 m, u64 seed, u64 stream_id, then (n+1)*m f64 values row-major.

namespace detail {

template <class T>
void put_le(std::ostream& os, T value) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    os.write(reinterpret_cast<const char*>(bytes), 8);
}

template <class T>
T get_le(std::istream& is) {
    unsigned char bytes[8];
    is.read(reinterpret_cast<char*>(bytes), 8);
    if (!is) throw ParameterError("truncated FBM1 stream");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

} // namespace detail

inline void write_binary(std::ostream& os, const FbmPath& path) {
    os.write("FBM1", 4);
    detail::put_le(os, path.hurst());
    detail::put_le(os, path.horizon());
    detail::put_le(os, static_cast<std::uint64_t>(path.n_steps()));
    detail::put_le(os, static_cast<std::uint64_t>(path.dims()));
    detail::put_le(os, path.seed());
    detail::put_le(os, path.stream_id());
    for (double v : path.values().data()) detail::put_le(os, v);
}

inline FbmPath read_binary(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FBM1", 4) != 0) throw ParameterError("not an FBM1 stream");
    const auto hurst = detail::get_le<double>(is);
    const auto horizon = detail::get_le<double>(is);
    const auto n = detail::get_le<std::uint64_t>(is);
    const auto m = detail::get_le<std::uint64_t>(is);
    const auto seed = detail::get_le<std::uint64_t>(is);
    const auto stream = detail::get_le<std::uint64_t>(is);
    Matrix values(n + 1, m);
    for (double& v : values.data()) v = detail::get_le<double>(is);
    return FbmPath(hurst, horizon, std::move(values), seed, stream);
}

// Columns t, B1..Bm, 17 significant digits.
inline void write_csv(std::ostream& os, const FbmPath& path) {
    os << "t";
    for (std::size_t c = 0; c < path.dims(); ++c) os << ",B" << (c + 1);
    os << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k <= path.n_steps(); ++k) {
        os << path.time(k);
        for (double v : path.node(k)) os << ',' << v;
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Self-similarity check: {B_{cu}} against {c^H B_u} on matched grids.

struct ScalingLag {
    std::size_t node;        // grid index k, u_k = k / n
    double second_moment_a;  // E[B_{c u_k}^2] estimate
    double second_moment_b;  // E[(c^H B_{u_k})^2] estimate
    double exact;            // c^{2H} u_k^{2H}
    double z_two_sample;
    double z_exact_a;
    double z_exact_b;
};

struct ScalingReport {
    double hurst;
    double c;
    std::size_t reps;
    std::vector<ScalingLag> lags;
    double max_abs_z = 0.0;
    bool pass = false;
};

inline ScalingReport scaling_selfsimilarity_test(double hurst, double c, std::size_t n, std::size_t reps,
                                                 std::uint64_t seed) {
    detail::require(c > 0.0 && std::isfinite(c), "scaling factor c must be positive");
    detail::require(reps >= 100, "scaling test needs at least 100 repetitions");
    detail::require(n >= 1, "scaling test needs n >= 1");
    const FbmSampler scaled(hurst, c, n, 1);
    const FbmSampler unit(hurst, 1.0, n, 1);
    const double factor = std::pow(c, hurst);

    std::vector<std::size_t> nodes;
    for (std::size_t k = 1; k <= n; k *= 2) nodes.push_back(k);
    if (nodes.back() != n) nodes.push_back(n);

    std::vector<double> sa(nodes.size()), sa2(nodes.size()), sb(nodes.size()), sb2(nodes.size());
    for (std::size_t r = 0; r < reps; ++r) {
        // Disjoint stream ranges keep the two samples independent.
        const FbmPath a = scaled.sample(seed, 2 * r);
        const FbmPath b = unit.sample(seed, 2 * r + 1);
        for (std::size_t q = 0; q < nodes.size(); ++q) {
            const double xa = a.values()(nodes[q], 0);
            const double xb = factor * b.values()(nodes[q], 0);
            sa[q] += xa * xa;
            sa2[q] += xa * xa * xa * xa;
            sb[q] += xb * xb;
            sb2[q] += xb * xb * xb * xb;
        }
    }

    ScalingReport report{hurst, c, reps, {}, 0.0, false};
    const double nr = static_cast<double>(reps);
    for (std::size_t q = 0; q < nodes.size(); ++q) {
        const double ma = sa[q] / nr, mb = sb[q] / nr;
        const double va = std::fmax(sa2[q] / nr - ma * ma, 0.0) / nr;
        const double vb = std::fmax(sb2[q] / nr - mb * mb, 0.0) / nr;
        const double u = static_cast<double>(nodes[q]) / static_cast<double>(n);
        const double exact = std::pow(c * u, 2.0 * hurst);
        ScalingLag lag{nodes[q], ma, mb, exact,
                       (ma - mb) / std::sqrt(va + vb),
                       (ma - exact) / std::sqrt(va),
                       (mb - exact) / std::sqrt(vb)};
        report.max_abs_z = std::fmax(report.max_abs_z, std::fabs(lag.z_two_sample));
        report.lags.push_back(lag);
    }
    report.pass = report.max_abs_z < 4.0;
    return report;
}

} // namespace fbmsde
