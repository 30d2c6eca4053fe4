#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "rfkk/types.hpp"

namespace rfkk::numerics {

// ---------------------------------------------------------------------------
// Hilbert transform
// ---------------------------------------------------------------------------

/// Length of the padded FFT grid for an n-sample spectrum: twice the next
/// power of two >= n.
std::size_t hilbert_padded_length(std::size_t n);

/// Discrete Hilbert transform of fixed-length real signals.
///
/// The signal is reflect-padded (mirror about the end samples, no repeat) to
/// hilbert_padded_length(n), transformed, multiplied by -i*sign(freq) and
/// cropped back. With this convention the Kramers-Kronig phase of a single
/// positive Lorentzian resonance produces a positive Im{K} peak, and
/// H{H{x}} = -x for zero-mean band-limited x.
///
/// A transformer owns its FFTW plans and scratch buffers; reuse one per
/// thread for repeated transforms of the same length. Executing is
/// thread-safe across distinct instances.
class HilbertTransformer {
public:
    explicit HilbertTransformer(std::size_t n);
    ~HilbertTransformer();
    HilbertTransformer(const HilbertTransformer&) = delete;
    HilbertTransformer& operator=(const HilbertTransformer&) = delete;
    HilbertTransformer(HilbertTransformer&& other) noexcept;
    HilbertTransformer& operator=(HilbertTransformer&& other) noexcept;

    std::size_t size() const { return n_; }

    /// out may alias in. Throws InvalidInput on non-finite samples.
    void apply(std::span<const double> in, std::span<double> out);

private:
    void release() noexcept;

    std::size_t n_ = 0;
    std::size_t padded_ = 0;
    std::size_t left_pad_ = 0;
    double* time_ = nullptr;
    void* freq_ = nullptr;  // fftw_complex*
    void* forward_ = nullptr;  // fftw_plan
    void* backward_ = nullptr;
};

Vector hilbert(const Vector& x);

/// Row-wise Hilbert transform of a k x N matrix.
RowMatrix hilbert_rows(const RowMatrix& x);

// ---------------------------------------------------------------------------
// SVD
// ---------------------------------------------------------------------------

/// Truncated SVD triple. A ~= U * diag(s) * V^T.
struct Factorization {
    RowMatrix U;        // M x k, spatial basis
    Vector s;           // k, descending, non-negative
    Eigen::MatrixXd V;  // N x k, spectral basis

    std::size_t rank() const { return static_cast<std::size_t>(s.size()); }

    /// Keeps the leading k triplets (k <= rank()).
    void truncate(std::size_t k);

    /// U * diag(s) * V^T
    RowMatrix reconstruct() const;
};

/// Full reduced SVD (k = min(M, N)). The input is consumed as workspace.
/// Throws InvalidInput on non-finite entries and NumericalError if LAPACK
/// fails to converge.
Factorization svd_reduced(RowMatrix a);

/// Receives all min(M, N) singular values (descending), returns how many to keep.
using RankRule = std::function<std::size_t(const Vector& s)>;

/// SVD that forms only the retained singular vectors. The matrix is first
/// QR-factorised along its long side; the small triangular factor is
/// decomposed with divide-and-conquer and the kept left vectors are mapped
/// back through the Householder reflectors. Same accuracy as svd_reduced.
Factorization svd_truncated(RowMatrix a, const RankRule& keep);

/// Number of singular values strictly greater than
/// max_abs * max(M, N) * epsilon (the numpy/MATLAB matrix_rank rule).
std::size_t rank_cutoff(std::span<const double> s, double max_abs, std::size_t m, std::size_t n,
                        double epsilon = std::numeric_limits<double>::epsilon());

// ---------------------------------------------------------------------------
// Detrending
// ---------------------------------------------------------------------------

struct AlsParams {
    double smoothness = 1e4;  // second-difference penalty, channel-index units
    double asymmetry = 1e-3;  // weight of points above the baseline
    int max_iterations = 10;
    double tolerance = 1e-6;  // relative change of the weight vector

    void validate() const;
};

/// Asymmetric least squares baseline. Solves the pentadiagonal system
/// (W + smoothness * D2^T D2) b = W y with a banded LDL^T factorisation per
/// reweighting pass; O(N) per pass. Buffers are reused across calls.
class AlsDetrender {
public:
    explicit AlsDetrender(AlsParams params = {});

    const AlsParams& params() const { return params_; }

    /// Writes the baseline of y into out (out must not alias y).
    void baseline(std::span<const double> y, std::span<double> out);

    /// Number of reweighting passes used by the last call.
    int last_iterations() const { return last_iterations_; }

private:
    AlsParams params_;
    std::vector<double> weights_, next_weights_, diag_, off1_, off2_, rhs_, work_, correction_, second_;
    int last_iterations_ = 0;
};

Vector als_detrend(const Vector& y, const AlsParams& params = {});

// ---------------------------------------------------------------------------
// Savitzky-Golay trendline
// ---------------------------------------------------------------------------

/// Nearest odd integer to 0.75 * n, clamped to [5, n] (or n - 1 when n is even).
int default_trend_window(std::size_t n);

/// Least-squares polynomial smoother of fixed (n, window, order). Interior
/// points use the centred convolution weights; the first and last half
/// windows are evaluated from a polynomial fitted to the first/last full
/// window. Windows larger than n are clamped to the largest odd value <= n.
class SavgolFilter {
public:
    SavgolFilter(std::size_t n, int window, int order);

    std::size_t size() const { return n_; }
    int window() const { return window_; }
    int order() const { return order_; }

    /// out may not alias y.
    void apply(std::span<const double> y, std::span<double> out) const;

private:
    std::size_t n_;
    int window_;
    int order_;
    std::vector<double> centre_;  // convolution weights, length window
    RowMatrix coefficients_;      // (order+1) x window, window -> polynomial coefficients
};

Vector savgol_trend(const Vector& y, int window, int order);

/// Row-wise trendline with the default large-window, order-2 filter.
RowMatrix trend_rows(const RowMatrix& x, int window, int order);

// ---------------------------------------------------------------------------
// Ridge regression
// ---------------------------------------------------------------------------

/// B = (X^T X + lambda I)^-1 X^T Y. With lambda = 0 a rank-deficient X throws
/// NumericalError.
Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda);

/// The projector (X^T X + lambda I)^-1 X^T, k x p.
Eigen::MatrixXd ridge_projector(const Eigen::MatrixXd& x, double lambda);

}  // namespace rfkk::numerics
