#include "rfkk/conventional.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

namespace rfkk::conventional {

Vector ComplexSpectrum::real() const { return log_amplitude.array().exp() * phase.array().cos(); }
Vector ComplexSpectrum::imag() const { return log_amplitude.array().exp() * phase.array().sin(); }

Eigen::VectorXcd ComplexSpectrum::values() const {
    Eigen::VectorXcd out(phase.size());
    for (Eigen::Index i = 0; i < phase.size(); ++i) out[i] = std::polar(std::exp(log_amplitude[i]), phase[i]);
    return out;
}

int TrendParams::resolved_window(std::size_t n) const {
    return window > 0 ? window : numerics::default_trend_window(n);
}

namespace {

void half_log_ratio_into(std::span<const double> i_cars, std::span<const double> i_ref, std::span<double> out) {
    if (i_cars.size() != i_ref.size()) throw InvalidInput("kk: spectrum and reference lengths differ");
    double peak = 0.0;
    for (double v : i_cars) {
        if (!std::isfinite(v)) throw InvalidInput("kk: non-finite intensity");
        peak = std::max(peak, v);
    }
    if (!(peak > 0.0)) throw InvalidInput("kk: spectrum has no positive intensity");
    for (double v : i_ref)
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput("kk: reference must be finite and strictly positive");
    const auto n = static_cast<Eigen::Index>(i_cars.size());
    const Eigen::Map<const Eigen::ArrayXd> cars(i_cars.data(), n), ref(i_ref.data(), n);
    Eigen::Map<Eigen::ArrayXd>(out.data(), n) = 0.5 * (cars.max(kFloorRatio * peak) / ref).log();
}

std::span<double> as_span(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

Vector half_log_ratio(std::span<const double> i_cars, std::span<const double> i_ref) {
    Vector out(static_cast<Eigen::Index>(i_cars.size()));
    half_log_ratio_into(i_cars, i_ref, as_span(out));
    return out;
}

ComplexSpectrum kk(std::span<const double> i_cars, std::span<const double> i_ref,
                   numerics::HilbertTransformer& hilbert) {
    ComplexSpectrum k;
    k.log_amplitude = half_log_ratio(i_cars, i_ref);
    k.phase.resize(k.log_amplitude.size());
    hilbert.apply(as_span(k.log_amplitude), as_span(k.phase));
    return k;
}

ComplexSpectrum kk(std::span<const double> i_cars, std::span<const double> i_ref) {
    numerics::HilbertTransformer hilbert(i_cars.size());
    return kk(i_cars, i_ref, hilbert);
}

PecResult pec(const ComplexSpectrum& k, numerics::AlsDetrender& detrender, numerics::HilbertTransformer& hilbert) {
    PecResult r;
    r.phi_err.resize(k.phase.size());
    detrender.baseline(as_span(k.phase), as_span(r.phi_err));
    Vector amp_corr(k.phase.size());
    hilbert.apply(as_span(r.phi_err), as_span(amp_corr));
    r.corrected.log_amplitude = k.log_amplitude + amp_corr;
    r.corrected.phase = k.phase - r.phi_err;
    return r;
}

PecResult pec(const ComplexSpectrum& k, const numerics::AlsParams& als) {
    numerics::AlsDetrender detrender(als);
    numerics::HilbertTransformer hilbert(k.size());
    return pec(k, detrender, hilbert);
}

ComplexSpectrum sec(const PecResult& pec_out, const numerics::SavgolFilter& filter, bool* used_fallback) {
    const ComplexSpectrum& k = pec_out.corrected;
    const Vector re = k.real();
    Vector trend(re.size());
    filter.apply(as_span(re), as_span(trend));
    bool fallback = (trend.array() <= 0.0).any();
    if (fallback) {
        const double mean = re.mean();
        if (!(mean > 0.0)) throw NumericalError("sec: real part has non-positive trend and mean");
        trend.setConstant(mean);
    }
    if (used_fallback) *used_fallback = fallback;
    ComplexSpectrum out = k;
    out.log_amplitude.array() -= trend.array().log();
    return out;
}

ComplexSpectrum sec(const PecResult& pec_out, const TrendParams& trend, bool* used_fallback) {
    const std::size_t n = pec_out.corrected.size();
    numerics::SavgolFilter filter(n, trend.resolved_window(n), trend.order);
    return sec(pec_out, filter, used_fallback);
}

void correct_rows(const RowMatrix& intensities, std::size_t first, std::size_t count, const ReferenceSpectrum& ref,
                  const Options& opts, ComplexRowMatrix& out, StepTimes& times, std::size_t& sec_fallbacks) {
    const auto n = static_cast<std::size_t>(intensities.cols());
    if (ref.values.size() != intensities.cols()) throw InvalidInput("correct_rows: reference length mismatch");
    if (first + count > static_cast<std::size_t>(intensities.rows()) || out.rows() != intensities.rows() ||
        out.cols() != intensities.cols())
        throw InvalidInput("correct_rows: row range or output shape mismatch");

    numerics::HilbertTransformer hilbert(n);
    numerics::AlsDetrender detrender(opts.als);
    numerics::SavgolFilter filter(n, opts.trend.resolved_window(n), opts.trend.order);
    const std::span<const double> iref = as_span(ref.values);

    double t_kk = 0.0, t_pec = 0.0, t_sec = 0.0;
    Stopwatch clock;
    for (std::size_t r = first; r < first + count; ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        clock.lap();
        const ComplexSpectrum k = kk({intensities.row(row).data(), n}, iref, hilbert);
        t_kk += clock.lap();
        const PecResult p = pec(k, detrender, hilbert);
        t_pec += clock.lap();
        bool fallback = false;
        const ComplexSpectrum c = sec(p, filter, &fallback);
        if (fallback) ++sec_fallbacks;
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = static_cast<Eigen::Index>(i);
            out(row, j) = std::polar(std::exp(c.log_amplitude[j]), c.phase[j]);
        }
        t_sec += clock.lap();
    }
    times.add("kk", t_kk);
    times.add("pec", t_pec);
    times.add("sec", t_sec);
}

numerics::Factorization denoise_basis(const RowMatrix& intensities, std::optional<std::size_t> rank_override) {
    const auto m = static_cast<std::size_t>(intensities.rows());
    const auto n = static_cast<std::size_t>(intensities.cols());
    const double max_abs = intensities.size() ? intensities.cwiseAbs().maxCoeff() : 0.0;
    return numerics::svd_truncated(intensities, [&](const Vector& s) {
        if (rank_override) {
            if (*rank_override > static_cast<std::size_t>(s.size()))
                throw InvalidParameter("conventional: rank override exceeds min(M, N)");
            return *rank_override;
        }
        return numerics::rank_cutoff({s.data(), static_cast<std::size_t>(s.size())}, max_abs, m, n);
    });
}

Result process(const SpectralCube& cube, const ReferenceSpectrum& ref, const Options& opts) {
    require_matching_reference(cube, ref);
    opts.als.validate();
    const std::size_t m = cube.pixels();
    const std::size_t n = cube.channels();

    Result res;
    res.k_cars.rows = cube.rows;
    res.k_cars.cols = cube.cols;
    res.k_cars.axis = cube.axis;
    res.k_cars.masks = cube.masks;
    res.k_cars.data.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    if (m == 0) return res;

    RowMatrix denoised;
    if (opts.denoise) {
        Stopwatch clock;
        const numerics::Factorization fact = denoise_basis(cube.data, opts.rank_override);
        const std::size_t k = fact.rank();
        denoised = fact.reconstruct();
        res.rank = k;
        res.times.add("svd", clock.seconds());
    } else {
        res.rank = std::min(m, n);
    }
    const RowMatrix& source = opts.denoise ? denoised : cube.data;

    const unsigned workers = std::max(1u, std::min<unsigned>(opts.workers, static_cast<unsigned>(m)));
    if (workers == 1) {
        correct_rows(source, 0, m, ref, opts, res.k_cars.data, res.times, res.sec_fallbacks);
        return res;
    }

    // Step times from workers are summed, so they report CPU seconds per step.
    std::vector<StepTimes> times(workers);
    std::vector<std::size_t> fallbacks(workers, 0);
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    const std::size_t per = (m + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t first = std::min(m, w * per);
        const std::size_t count = std::min(m, first + per) - first;
        pool.emplace_back([&, w, first, count] {
            try {
                correct_rows(source, first, count, ref, opts, res.k_cars.data, times[w], fallbacks[w]);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    for (unsigned w = 0; w < workers; ++w) {
        res.times.merge(times[w]);
        res.sec_fallbacks += fallbacks[w];
    }
    return res;
}

}  // namespace rfkk::conventional
