#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rfkk/conventional.hpp"
#include "rfkk/numerics.hpp"
#include "rfkk/timing.hpp"
#include "rfkk/types.hpp"

namespace rfkk::factorized {

/// Noise model behind the spectral scaling f(omega). alpha = sigma_g = 0
/// disables scaling (f = 1), the pure additive Gaussian convention.
struct NoiseModel {
    double alpha = 0.0;    // Poisson multiplier
    double sigma_g = 0.0;  // additive Gaussian standard deviation
};

/// f(omega) = 2 <I>(omega) / sqrt(alpha <I>(omega) + sigma_g^2).
Vector estimate_f(const SpectralCube& cube, const NoiseModel& noise);

/// Rows a_m(omega) = f(omega) * 1/2 ln(I_m / I_ref), intensity floor applied per spectrum.
struct LogRatioMatrix {
    RowMatrix a;
    Vector f;
};

LogRatioMatrix build_log_ratio(const SpectralCube& cube, const ReferenceSpectrum& ref, const Vector& f);

/// Removes from each row of A its component along f and returns the
/// coefficients. A global intensity scale moves rows only along f; in ln
/// space that component is a per-pixel constant, which the Hilbert transform
/// annihilates and SEC removes, so dropping it leaves K_CARS unchanged while
/// making the basis (and the subsample) independent of the scale.
Vector strip_scale_direction(LogRatioMatrix& a);

/// Truncated SVD of A: rank_cutoff or the override.
numerics::Factorization factorize(LogRatioMatrix&& a, std::optional<std::size_t> rank_override = {});

/// H{V^T / f}, k x N.
RowMatrix fkk(const numerics::Factorization& fact, const Vector& f);

/// Row indices of the per-column maximum and minimum of U, plus
/// extras_per_column indices evenly spaced by rank between them. Sorted,
/// without duplicates.
std::vector<std::size_t> subsample_u(const numerics::Factorization& fact, std::size_t extras_per_column = 0);

/// Phi_PEC^T (k x N) = ridge regression of the ALS baselines of the
/// subsampled phases onto X = U_ss S.
RowMatrix fpec(const numerics::Factorization& fact, const RowMatrix& hilbert_v, const numerics::AlsParams& als,
               double lambda, std::span<const std::size_t> q);

/// V^T_SEC (k x N): row-wise trendline of V^T / f + H{Phi_PEC}.
RowMatrix fsec(const numerics::Factorization& fact, const Vector& f, const RowMatrix& hilbert_phi_pec,
               const conventional::TrendParams& trend = {});

/// Default ridge weight 1e-6 * s_max^2.
double default_lambda(const numerics::Factorization& fact);

struct CorrectionBasis {
    RowMatrix hilbert_v;        // H{V^T / f}
    RowMatrix phi_pec;          // Phi_PEC^T
    RowMatrix hilbert_phi_pec;  // H{Phi_PEC^T}, cached
    RowMatrix v_sec;            // V^T_SEC
    double ridge_lambda = 0.0;
    std::vector<std::size_t> q;

    std::size_t rank() const { return static_cast<std::size_t>(hilbert_v.rows()); }
};

/// Exponent bases of the full reconstruction: each pixel is
///   exp(w * amplitude) * exp(i * w * phase),  w = U_row * diag(s).
struct ReconstructionBasis {
    RowMatrix amplitude;  // V^T/f + H{Phi_PEC} - V^T_SEC
    RowMatrix phase;      // H{V^T/f} - Phi_PEC

    static ReconstructionBasis from(const numerics::Factorization& fact, const CorrectionBasis& basis,
                                    const Vector& f);
    static ReconstructionBasis from(const Eigen::MatrixXd& v, const CorrectionBasis& basis, const Vector& f);
};

/// Writes exp(w * amplitude) exp(i w * phase) into out (length N). Per-row
/// arithmetic is fixed, so any chunking of rows gives bit-identical output.
void reconstruct_row(std::span<const double> weights, const ReconstructionBasis& basis,
                     std::span<std::complex<double>> out, std::vector<double>& scratch);

/// Complex cube for pixel rows [first, last) of the factorization; the full
/// range by default.
ComplexRowMatrix reconstruct(const numerics::Factorization& fact, const CorrectionBasis& basis, const Vector& f,
                             std::optional<std::pair<std::size_t, std::size_t>> row_range = {},
                             unsigned workers = 1);

struct Options {
    NoiseModel noise;
    std::optional<std::size_t> rank_override;
    std::size_t extras_per_column = 0;
    numerics::AlsParams als;
    std::optional<double> lambda;  // defaults to default_lambda()
    conventional::TrendParams trend;
    unsigned workers = 1;
};

struct Result {
    ComplexCube k_cars;
    numerics::Factorization fact;
    CorrectionBasis basis;
    Vector f;
    StepTimes times;
};

/// Builds the factorization and correction basis without reconstructing.
Result fit(const SpectralCube& cube, const ReferenceSpectrum& ref, const Options& opts = {});

/// Full fKK-EC: fit + reconstruct.
Result process(const SpectralCube& cube, const ReferenceSpectrum& ref, const Options& opts = {});

}  // namespace rfkk::factorized
