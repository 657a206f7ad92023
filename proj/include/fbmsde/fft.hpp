#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <utility>

namespace fbmsde::fft {

// FFTW-aligned buffer. Plans are built on aligned buffers, so every buffer
// passed to the new-array execute functions must come from here.
template <class T>
class AlignedBuffer {
public:
    explicit AlignedBuffer(std::size_t n) : size_(n), ptr_(static_cast<T*>(fftw_malloc(sizeof(T) * n))) {
        if (ptr_ == nullptr) throw std::bad_alloc();
    }
    AlignedBuffer(const AlignedBuffer&) = delete;
    AlignedBuffer& operator=(const AlignedBuffer&) = delete;
    AlignedBuffer(AlignedBuffer&& o) noexcept : size_(o.size_), ptr_(std::exchange(o.ptr_, nullptr)) {}
    ~AlignedBuffer() { fftw_free(ptr_); }

    T* get() noexcept { return ptr_; }
    const T* get() const noexcept { return ptr_; }
    std::size_t size() const noexcept { return size_; }
    T& operator[](std::size_t k) noexcept { return ptr_[k]; }
    const T& operator[](std::size_t k) const noexcept { return ptr_[k]; }

private:
    std::size_t size_;
    T* ptr_;
};

using RealBuffer = AlignedBuffer<double>;
using ComplexBuffer = AlignedBuffer<fftw_complex>;

namespace detail {

enum class Kind { r2c, c2r };

// The FFTW planner is not thread-safe; execution of an existing plan on new
// arrays is. Plans are created once per (kind, length) and kept for the
// lifetime of the process.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(Kind kind, std::size_t n) {
        std::lock_guard lock(mutex_);
        auto key = std::make_pair(kind, n);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        RealBuffer real(n);
        ComplexBuffer cplx(n / 2 + 1);
        const int len = static_cast<int>(n);
        fftw_plan plan = kind == Kind::r2c
            ? fftw_plan_dft_r2c_1d(len, real.get(), cplx.get(), FFTW_ESTIMATE)
            : fftw_plan_dft_c2r_1d(len, cplx.get(), real.get(), FFTW_ESTIMATE);
        plans_.emplace(key, plan);
        return plan;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    std::mutex mutex_;
    std::map<std::pair<Kind, std::size_t>, fftw_plan> plans_;
};

} // namespace detail

// Forward real-to-half-complex transform, out[k] = sum_j in[j] exp(-2 pi i jk/n), k = 0..n/2.
inline void forward_real(RealBuffer& in, ComplexBuffer& out) {
    fftw_execute_dft_r2c(detail::PlanCache::instance().get(detail::Kind::r2c, in.size()), in.get(), out.get());
}

// Backward half-complex-to-real transform of length out.size() (unnormalised,
// out[j] = sum_k in[k] exp(+2 pi i jk/n) with Hermitian extension). Destroys `in`.
inline void backward_to_real(ComplexBuffer& in, RealBuffer& out) {
    fftw_execute_dft_c2r(detail::PlanCache::instance().get(detail::Kind::c2r, out.size()), in.get(), out.get());
}

} // namespace fbmsde::fft
