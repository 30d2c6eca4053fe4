#include <cmath>
#include <string>

#include "rfkk/numerics.hpp"

namespace rfkk::numerics {

void AlsParams::validate() const {
    if (!(smoothness > 0.0) || !std::isfinite(smoothness))
        throw InvalidParameter("als: smoothness must be positive");
    if (!(asymmetry > 0.0 && asymmetry < 0.5))
        throw InvalidParameter("als: asymmetry must lie in (0, 0.5)");
    if (max_iterations < 1) throw InvalidParameter("als: max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw InvalidParameter("als: tolerance must be positive");
}

AlsDetrender::AlsDetrender(AlsParams params) : params_(params) { params_.validate(); }

void AlsDetrender::baseline(std::span<const double> y, std::span<double> out) {
    const std::size_t n = y.size();
    if (n < 8) throw InvalidInput("als: need at least 8 samples, got " + std::to_string(n));
    if (out.size() != n) throw InvalidInput("als: output length mismatch");
    for (double v : y)
        if (!std::isfinite(v)) throw InvalidInput("als: non-finite input sample");

    weights_.assign(n, 1.0);
    next_weights_.resize(n);
    diag_.resize(n);
    off1_.resize(n);
    off2_.resize(n);
    rhs_.resize(n);

    work_.resize(n);
    correction_.resize(n);
    second_.resize(n);

    const double lam = params_.smoothness;
    const double p = params_.asymmetry;
    // Solve for y - mean(y) so adding a constant to y shifts the baseline exactly.
    double shift = 0.0;
    for (double v : y) shift += v;
    shift /= static_cast<double>(n);

    // Forward/back substitution with the LDL^T factors; reads work_.
    auto solve = [&](std::span<double> x) {
        for (std::size_t i = 0; i < n; ++i) {
            double z = work_[i];
            if (i >= 1) z -= off1_[i - 1] * rhs_[i - 1];
            if (i >= 2) z -= off2_[i - 2] * rhs_[i - 2];
            rhs_[i] = z;
        }
        for (std::size_t i = 0; i < n; ++i) rhs_[i] /= diag_[i];
        for (std::size_t i = n; i-- > 0;) {
            double v = rhs_[i];
            if (i + 1 < n) v -= off1_[i] * x[i + 1];
            if (i + 2 < n) v -= off2_[i] * x[i + 2];
            x[i] = v;
        }
    };
    // work_ = W (y - shift) - (W + lam D2^T D2) b.
    auto residual = [&](std::span<const double> yy, double sh, std::span<const double> b) {
        for (std::size_t i = 0; i < n; ++i) work_[i] = weights_[i] * (yy[i] - sh - b[i]);
        for (std::size_t r = 0; r + 2 < n; ++r) second_[r] = lam * (b[r] - 2.0 * b[r + 1] + b[r + 2]);
        for (std::size_t r = 0; r + 2 < n; ++r) {
            work_[r] -= second_[r];
            work_[r + 1] += 2.0 * second_[r];
            work_[r + 2] -= second_[r];
        }
    };

    last_iterations_ = 0;
    for (int it = 0; it < params_.max_iterations; ++it) {
        ++last_iterations_;

        // Assemble W + lam * D2^T D2 (symmetric pentadiagonal: diag, +1, +2).
        for (std::size_t i = 0; i < n; ++i) {
            diag_[i] = weights_[i];
            off1_[i] = 0.0;
            off2_[i] = 0.0;
        }
        for (std::size_t r = 0; r + 2 < n; ++r) {
            // Row r of D2 is [1, -2, 1] at columns r, r+1, r+2.
            diag_[r] += lam;
            diag_[r + 1] += 4.0 * lam;
            diag_[r + 2] += lam;
            off1_[r] += -2.0 * lam;
            off1_[r + 1] += -2.0 * lam;
            off2_[r] += lam;
        }

        // In-place LDL^T: diag_ -> D, off1_ -> L(i+1,i), off2_ -> L(i+2,i).
        for (std::size_t i = 0; i < n; ++i) {
            double d = diag_[i];
            double e = off1_[i];
            if (i >= 1) {
                d -= off1_[i - 1] * off1_[i - 1] * diag_[i - 1];
                e -= off2_[i - 1] * off1_[i - 1] * diag_[i - 1];
            }
            if (i >= 2) d -= off2_[i - 2] * off2_[i - 2] * diag_[i - 2];
            if (!(d > 0.0)) throw NumericalError("als: penalised system is not positive definite");
            diag_[i] = d;
            off1_[i] = (i + 1 < n) ? e / d : 0.0;
            off2_[i] = (i + 2 < n) ? off2_[i] / d : 0.0;
        }

        for (std::size_t i = 0; i < n; ++i) work_[i] = weights_[i] * (y[i] - shift);
        solve(out);
        // One step of iterative refinement: the system is stiff at large smoothness.
        residual(y, shift, out);
        solve({correction_.data(), n});
        for (std::size_t i = 0; i < n; ++i) out[i] += correction_[i];

        double change = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            next_weights_[i] = y[i] - shift > out[i] ? p : 1.0 - p;
            const double d = next_weights_[i] - weights_[i];
            change += d * d;
            norm += weights_[i] * weights_[i];
        }
        weights_.swap(next_weights_);
        if (std::sqrt(change / norm) < params_.tolerance) break;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] += shift;
}

Vector als_detrend(const Vector& y, const AlsParams& params) {
    AlsDetrender det(params);
    Vector out(y.size());
    det.baseline({y.data(), static_cast<std::size_t>(y.size())},
                 {out.data(), static_cast<std::size_t>(out.size())});
    return out;
}

}  // namespace rfkk::numerics
