#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <string>
#include <utility>

#include <fftw3.h>

#include "rfkk/numerics.hpp"

namespace rfkk::numerics {

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::size_t reflect_index(std::ptrdiff_t t, std::size_t n) {
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    t = std::abs(t) % period;
    if (t > static_cast<std::ptrdiff_t>(n - 1)) t = period - t;
    return static_cast<std::size_t>(t);
}

}  // namespace

std::size_t hilbert_padded_length(std::size_t n) { return 2 * std::bit_ceil(n); }

HilbertTransformer::HilbertTransformer(std::size_t n) : n_(n) {
    if (n < 4) throw InvalidParameter("hilbert: need at least 4 samples, got " + std::to_string(n));
    padded_ = hilbert_padded_length(n);
    left_pad_ = (padded_ - n) / 2;

    std::lock_guard lock(planner_mutex());
    time_ = fftw_alloc_real(padded_);
    auto* freq = fftw_alloc_complex(padded_ / 2 + 1);
    freq_ = freq;
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(padded_), time_, freq, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_1d(static_cast<int>(padded_), freq, time_, FFTW_ESTIMATE);
    if (!time_ || !freq_ || !forward_ || !backward_) {
        release();
        throw NumericalError("hilbert: FFTW plan creation failed");
    }
}

HilbertTransformer::~HilbertTransformer() { release(); }

HilbertTransformer::HilbertTransformer(HilbertTransformer&& other) noexcept
    : n_(other.n_),
      padded_(other.padded_),
      left_pad_(other.left_pad_),
      time_(std::exchange(other.time_, nullptr)),
      freq_(std::exchange(other.freq_, nullptr)),
      forward_(std::exchange(other.forward_, nullptr)),
      backward_(std::exchange(other.backward_, nullptr)) {}

HilbertTransformer& HilbertTransformer::operator=(HilbertTransformer&& other) noexcept {
    if (this != &other) {
        release();
        n_ = other.n_;
        padded_ = other.padded_;
        left_pad_ = other.left_pad_;
        time_ = std::exchange(other.time_, nullptr);
        freq_ = std::exchange(other.freq_, nullptr);
        forward_ = std::exchange(other.forward_, nullptr);
        backward_ = std::exchange(other.backward_, nullptr);
    }
    return *this;
}

void HilbertTransformer::release() noexcept {
    std::lock_guard lock(planner_mutex());
    if (forward_) fftw_destroy_plan(static_cast<fftw_plan>(forward_));
    if (backward_) fftw_destroy_plan(static_cast<fftw_plan>(backward_));
    if (time_) fftw_free(time_);
    if (freq_) fftw_free(freq_);
    forward_ = backward_ = nullptr;
    time_ = nullptr;
    freq_ = nullptr;
}

void HilbertTransformer::apply(std::span<const double> in, std::span<double> out) {
    if (in.size() != n_ || out.size() != n_)
        throw InvalidInput("hilbert: length mismatch (expected " + std::to_string(n_) + ")");
    for (double v : in)
        if (!std::isfinite(v)) throw InvalidInput("hilbert: non-finite input sample");

    const auto left = static_cast<std::ptrdiff_t>(left_pad_);
    for (std::size_t j = 0; j < padded_; ++j)
        time_[j] = in[reflect_index(static_cast<std::ptrdiff_t>(j) - left, n_)];

    fftw_execute(static_cast<fftw_plan>(forward_));

    // Multiply by -i*sign(freq); DC and Nyquist carry no quadrature component.
    auto* spec = static_cast<fftw_complex*>(freq_);
    const std::size_t half = padded_ / 2;
    spec[0][0] = spec[0][1] = 0.0;
    spec[half][0] = spec[half][1] = 0.0;
    for (std::size_t k = 1; k < half; ++k) {
        const double re = spec[k][0];
        spec[k][0] = spec[k][1];
        spec[k][1] = -re;
    }

    fftw_execute(static_cast<fftw_plan>(backward_));

    const double scale = 1.0 / static_cast<double>(padded_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = time_[left_pad_ + i] * scale;
}

Vector hilbert(const Vector& x) {
    HilbertTransformer h(static_cast<std::size_t>(x.size()));
    Vector out(x.size());
    h.apply({x.data(), static_cast<std::size_t>(x.size())},
            {out.data(), static_cast<std::size_t>(out.size())});
    return out;
}

RowMatrix hilbert_rows(const RowMatrix& x) {
    RowMatrix out(x.rows(), x.cols());
    if (x.rows() == 0) return out;
    HilbertTransformer h(static_cast<std::size_t>(x.cols()));
    const auto n = static_cast<std::size_t>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) h.apply({x.row(r).data(), n}, {out.row(r).data(), n});
    return out;
}

}  // namespace rfkk::numerics
