#pragma once

#include <optional>
#include <span>

#include "rfkk/numerics.hpp"
#include "rfkk/timing.hpp"
#include "rfkk/types.hpp"

namespace rfkk::conventional {

/// Relative intensity floor applied before taking logarithms: samples below
/// kFloorRatio * max(spectrum) are raised to that value.
inline constexpr double kFloorRatio = 1e-8;

/// K(omega) = A(omega) exp(i phi(omega)), kept in polar form so the
/// retrieved phase is never wrapped.
struct ComplexSpectrum {
    Vector log_amplitude;  // ln A
    Vector phase;          // phi

    std::size_t size() const { return static_cast<std::size_t>(phase.size()); }
    Vector real() const;
    Vector imag() const;
    Eigen::VectorXcd values() const;
};

struct PecResult {
    ComplexSpectrum corrected;
    Vector phi_err;
};

struct TrendParams {
    int window = 0;  // 0 selects default_trend_window(N)
    int order = 2;

    int resolved_window(std::size_t n) const;
};

/// 1/2 ln(I_CARS / I_ref) with the intensity floor applied. Throws
/// InvalidInput if the reference is not strictly positive or the spectrum
/// has no positive sample.
Vector half_log_ratio(std::span<const double> i_cars, std::span<const double> i_ref);

/// Kramers-Kronig retrieval against a surrogate reference.
ComplexSpectrum kk(std::span<const double> i_cars, std::span<const double> i_ref);
ComplexSpectrum kk(std::span<const double> i_cars, std::span<const double> i_ref,
                   numerics::HilbertTransformer& hilbert);

/// Phase-error correction: phi_err is the ALS baseline of the phase; the
/// amplitude is multiplied by exp(H{phi_err}) and the phase reduced by phi_err.
PecResult pec(const ComplexSpectrum& k, const numerics::AlsParams& als = {});
PecResult pec(const ComplexSpectrum& k, numerics::AlsDetrender& detrender,
              numerics::HilbertTransformer& hilbert);

/// Scale-error correction: divides by the Savitzky-Golay trendline of the
/// real part. A non-positive trendline falls back to the global mean of the
/// real part and sets *used_fallback.
ComplexSpectrum sec(const PecResult& pec_out, const TrendParams& trend = {}, bool* used_fallback = nullptr);
ComplexSpectrum sec(const PecResult& pec_out, const numerics::SavgolFilter& filter,
                    bool* used_fallback = nullptr);

struct Options {
    numerics::AlsParams als;
    TrendParams trend;
    bool denoise = true;
    std::optional<std::size_t> rank_override;
    unsigned workers = 1;
};

struct Result {
    ComplexCube k_cars;
    std::size_t rank = 0;  // retained singular vectors of the raw cube
    std::size_t sec_fallbacks = 0;
    StepTimes times;
};

/// Truncated SVD of the raw intensities: rank_cutoff or the override.
numerics::Factorization denoise_basis(const RowMatrix& intensities, std::optional<std::size_t> rank_override = {});

/// SVD denoising of the raw cube followed by per-spectrum kk -> pec -> sec.
Result process(const SpectralCube& cube, const ReferenceSpectrum& ref, const Options& opts = {});

/// The per-spectrum kk -> pec -> sec chain on already-denoised rows
/// [first, first + count). Used by process() and by chunked benchmark
/// estimation.
void correct_rows(const RowMatrix& intensities, std::size_t first, std::size_t count,
                  const ReferenceSpectrum& ref, const Options& opts, ComplexRowMatrix& out,
                  StepTimes& times, std::size_t& sec_fallbacks);

}  // namespace rfkk::conventional
