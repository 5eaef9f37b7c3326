#include "mteq/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <new>
#include <numbers>
#include <utility>

namespace mteq {

namespace {
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

Fft::Fft(std::size_t n) : n_(n) {
    buf_ = reinterpret_cast<cplx*>(fftw_malloc(sizeof(fftw_complex) * (n == 0 ? 1 : n)));
    if (buf_ == nullptr) {
        throw std::bad_alloc();
    }
    for (std::size_t i = 0; i < n_; ++i) {
        buf_[i] = cplx{};
    }
    if (n_ == 0) {
        return;
    }
    std::lock_guard<std::mutex> lock(planner_mutex());
    auto* p = reinterpret_cast<fftw_complex*>(buf_);
    const int len = static_cast<int>(n_);
    fwd_ = fftw_plan_dft_1d(len, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_1d(len, p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
}

Fft::~Fft() {
    if (fwd_ != nullptr || inv_ != nullptr) {
        std::lock_guard<std::mutex> lock(planner_mutex());
        if (fwd_ != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
        if (inv_ != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(inv_));
    }
    if (buf_ != nullptr) {
        fftw_free(buf_);
    }
}

Fft::Fft(Fft&& o) noexcept
    : n_(std::exchange(o.n_, 0)),
      buf_(std::exchange(o.buf_, nullptr)),
      fwd_(std::exchange(o.fwd_, nullptr)),
      inv_(std::exchange(o.inv_, nullptr)) {}

Fft& Fft::operator=(Fft&& o) noexcept {
    if (this != &o) {
        Fft tmp(std::move(o));
        std::swap(n_, tmp.n_);
        std::swap(buf_, tmp.buf_);
        std::swap(fwd_, tmp.fwd_);
        std::swap(inv_, tmp.inv_);
    }
    return *this;
}

void Fft::forward() {
    if (fwd_ != nullptr) {
        fftw_execute(static_cast<fftw_plan>(fwd_));
    }
}

void Fft::inverse() {
    if (inv_ == nullptr) {
        return;
    }
    fftw_execute(static_cast<fftw_plan>(inv_));
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        buf_[i] *= scale;
    }
}

void Fft::inverse_unscaled() {
    if (inv_ != nullptr) {
        fftw_execute(static_cast<fftw_plan>(inv_));
    }
}

double fft_angular_frequency(std::size_t k, std::size_t n, double sample_rate) {
    const auto kk = static_cast<double>(k);
    const auto nn = static_cast<double>(n);
    const double bin = (k < (n + 1) / 2) ? kk : kk - nn;
    return 2.0 * std::numbers::pi * bin * sample_rate / nn;
}

std::size_t next_fast_size(std::size_t n) {
    if (n <= 1) return 1;
    for (std::size_t m = n;; ++m) {
        std::size_t r = m;
        for (std::size_t p : {2, 3, 5, 7}) {
            while (r % p == 0) r /= p;
        }
        if (r == 1) return m;
    }
}

}  // namespace mteq
