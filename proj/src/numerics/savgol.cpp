#include <cmath>
#include <string>

#include "rfkk/numerics.hpp"

namespace rfkk::numerics {

int default_trend_window(std::size_t n) {
    const double target = 0.75 * static_cast<double>(n);
    int w = 2 * static_cast<int>(std::lround((target - 1.0) / 2.0)) + 1;
    const int upper = static_cast<int>(n % 2 == 1 ? n : n - 1);
    if (w > upper) w = upper;
    if (w < 5) w = 5;
    return w;
}

SavgolFilter::SavgolFilter(std::size_t n, int window, int order) : n_(n), window_(window), order_(order) {
    if (n == 0) throw InvalidParameter("savgol: empty signal");
    if (window < 1 || window % 2 == 0)
        throw InvalidParameter("savgol: window must be a positive odd integer, got " + std::to_string(window));
    if (order < 0) throw InvalidParameter("savgol: order must be non-negative");
    if (static_cast<std::size_t>(window_) > n_) window_ = static_cast<int>(n_ % 2 == 1 ? n_ : n_ - 1);
    if (order_ >= window_)
        throw InvalidParameter("savgol: order " + std::to_string(order_) + " must be below window " +
                               std::to_string(window_));

    const int half = window_ / 2;
    const double scale = half > 0 ? static_cast<double>(half) : 1.0;
    Eigen::MatrixXd vander(window_, order_ + 1);
    for (int j = 0; j < window_; ++j) {
        const double t = static_cast<double>(j - half) / scale;
        double pw = 1.0;
        for (int p = 0; p <= order_; ++p) {
            vander(j, p) = pw;
            pw *= t;
        }
    }
    // pinv maps a window of samples to polynomial coefficients in the scaled
    // coordinate t = (j - half) / half.
    Eigen::MatrixXd pinv = vander.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(window_, window_));

    centre_.resize(window_);
    for (int j = 0; j < window_; ++j) centre_[j] = pinv(0, j);
    coefficients_ = pinv;
}

void SavgolFilter::apply(std::span<const double> y, std::span<double> out) const {
    if (y.size() != n_ || out.size() != n_) throw InvalidInput("savgol: length mismatch");
    const auto w = static_cast<std::size_t>(window_);
    const std::size_t half = w / 2;
    const auto ncoef = static_cast<std::size_t>(order_ + 1);

    for (std::size_t i = half; i + half < n_; ++i) {
        const double* seg = y.data() + (i - half);
        double acc = 0.0;
        for (std::size_t j = 0; j < w; ++j) acc += centre_[j] * seg[j];
        out[i] = acc;
    }
    if (half == 0) return;

    // Edges: fit the first/last full window and evaluate the polynomial.
    std::vector<double> head(ncoef, 0.0), tail(ncoef, 0.0);
    for (std::size_t p = 0; p < ncoef; ++p) {
        const double* row = coefficients_.row(static_cast<Eigen::Index>(p)).data();
        double a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            a += row[j] * y[j];
            b += row[j] * y[n_ - w + j];
        }
        head[p] = a;
        tail[p] = b;
    }
    const double scale = static_cast<double>(half);
    for (std::size_t i = 0; i < half; ++i) {
        const double t_head = (static_cast<double>(i) - scale) / scale;
        const double t_tail = static_cast<double>(i + 1) / scale;
        double vh = 0.0, vt = 0.0;
        for (std::size_t p = ncoef; p-- > 0;) {
            vh = vh * t_head + head[p];
            vt = vt * t_tail + tail[p];
        }
        out[i] = vh;
        out[n_ - half + i] = vt;
    }
}

Vector savgol_trend(const Vector& y, int window, int order) {
    SavgolFilter filter(static_cast<std::size_t>(y.size()), window, order);
    Vector out(y.size());
    filter.apply({y.data(), static_cast<std::size_t>(y.size())},
                 {out.data(), static_cast<std::size_t>(out.size())});
    return out;
}

RowMatrix trend_rows(const RowMatrix& x, int window, int order) {
    RowMatrix out(x.rows(), x.cols());
    if (x.rows() == 0) return out;
    const auto n = static_cast<std::size_t>(x.cols());
    SavgolFilter filter(n, window, order);
    for (Eigen::Index r = 0; r < x.rows(); ++r) filter.apply({x.row(r).data(), n}, {out.row(r).data(), n});
    return out;
}

}  // namespace rfkk::numerics
