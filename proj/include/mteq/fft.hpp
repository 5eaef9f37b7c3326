#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace mteq {

using cplx = std::complex<double>;

// In-place 1-D complex FFT over an owned, SIMD-aligned buffer.
// forward(): X[k] = sum_n x[n] exp(-2 pi i k n / N)
// inverse(): x[n] = (1/N) sum_k X[k] exp(+2 pi i k n / N)   (normalized)
//
// Plans use FFTW_ESTIMATE so the arithmetic (and therefore every result bit)
// does not depend on planner timing. Construction is serialized internally;
// execution on distinct Fft objects is thread-safe.
class Fft {
public:
    explicit Fft(std::size_t n);
    ~Fft();
    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;
    Fft(Fft&&) noexcept;
    Fft& operator=(Fft&&) noexcept;

    std::size_t size() const { return n_; }
    std::span<cplx> data() { return {buf_, n_}; }
    std::span<const cplx> data() const { return {buf_, n_}; }

    void forward();
    void inverse();
    // Inverse without the 1/N factor, for callers that fold it into a multiplier.
    void inverse_unscaled();

private:
    std::size_t n_ = 0;
    cplx* buf_ = nullptr;
    void* fwd_ = nullptr;
    void* inv_ = nullptr;
};

// Angular frequency (rad/s) of FFT bin k for an N-point grid at sample_rate,
// in standard FFT order (0, +, ..., -).
double fft_angular_frequency(std::size_t k, std::size_t n, double sample_rate);

// Smallest m >= n whose prime factors are all <= 7 (sizes FFTW handles fast).
std::size_t next_fast_size(std::size_t n);

}  // namespace mteq
