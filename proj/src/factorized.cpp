#include "rfkk/factorized.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <thread>

namespace rfkk::factorized {

namespace {

RowMatrix vt_over_f(const Eigen::MatrixXd& v, const Vector& f) {
    RowMatrix out = v.transpose();
    out.array().rowwise() /= f.transpose().array();
    return out;
}

template <typename Fn>
void parallel_rows(std::size_t first, std::size_t last, unsigned workers, Fn&& fn) {
    const std::size_t total = last - first;
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(total, 1))));
    if (workers == 1) {
        fn(first, last);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t per = (total + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t a = std::min(last, first + w * per);
        const std::size_t b = std::min(last, a + per);
        pool.emplace_back([&, w, a, b] {
            try {
                fn(a, b);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

Vector estimate_f(const SpectralCube& cube, const NoiseModel& noise) {
    const auto n = static_cast<Eigen::Index>(cube.channels());
    if (noise.alpha < 0.0 || noise.sigma_g < 0.0)
        throw InvalidParameter("estimate_f: alpha and sigma_g must be non-negative");
    if (noise.alpha == 0.0 && noise.sigma_g == 0.0) return Vector::Ones(n);
    if (cube.pixels() == 0) throw InvalidInput("estimate_f: empty cube");

    const Vector mean = cube.data.colwise().mean().transpose();
    if ((mean.array() <= 0.0).any()) throw InvalidInput("estimate_f: mean spectrum must be positive");
    const Vector var = noise.alpha * mean.array() + noise.sigma_g * noise.sigma_g;
    if ((var.array() <= 0.0).any()) throw InvalidParameter("estimate_f: noise variance is zero");
    return 2.0 * mean.array() / var.array().sqrt();
}

LogRatioMatrix build_log_ratio(const SpectralCube& cube, const ReferenceSpectrum& ref, const Vector& f) {
    require_matching_reference(cube, ref);
    const std::size_t n = cube.channels();
    if (static_cast<std::size_t>(f.size()) != n) throw InvalidInput("build_log_ratio: f length mismatch");
    if ((f.array() <= 0.0).any() || !f.allFinite()) throw InvalidInput("build_log_ratio: f must be positive");

    LogRatioMatrix out;
    out.f = f;
    out.a.resize(cube.data.rows(), cube.data.cols());
    for (Eigen::Index r = 0; r < cube.data.rows(); ++r) {
        auto row = out.a.row(r);
        const Vector half = conventional::half_log_ratio({cube.data.row(r).data(), n}, {ref.values.data(), n});
        row = (half.array() * f.array()).transpose();
    }
    return out;
}

Vector strip_scale_direction(LogRatioMatrix& a) {
    const double norm = a.f.norm();
    if (!(norm > 0.0)) throw InvalidInput("strip_scale_direction: f must be non-zero");
    const Vector dir = a.f / norm;
    const Vector coeff = a.a * dir;
    a.a.noalias() -= coeff * dir.transpose();
    return coeff;
}

numerics::Factorization factorize(LogRatioMatrix&& a, std::optional<std::size_t> rank_override) {
    const auto m = static_cast<std::size_t>(a.a.rows());
    const auto n = static_cast<std::size_t>(a.a.cols());
    const double max_abs = a.a.size() ? a.a.cwiseAbs().maxCoeff() : 0.0;
    return numerics::svd_truncated(std::move(a.a), [&](const Vector& s) {
        if (rank_override) {
            if (*rank_override > static_cast<std::size_t>(s.size()))
                throw InvalidParameter("factorize: rank override exceeds min(M, N)");
            return *rank_override;
        }
        return numerics::rank_cutoff({s.data(), static_cast<std::size_t>(s.size())}, max_abs, m, n);
    });
}

RowMatrix fkk(const numerics::Factorization& fact, const Vector& f) {
    return numerics::hilbert_rows(vt_over_f(fact.V, f));
}

std::vector<std::size_t> subsample_u(const numerics::Factorization& fact, std::size_t extras_per_column) {
    const auto m = static_cast<std::size_t>(fact.U.rows());
    std::vector<std::size_t> q;
    if (m == 0) return q;
    std::vector<std::size_t> order(m);
    for (Eigen::Index j = 0; j < fact.U.cols(); ++j) {
        const auto col = fact.U.col(j);
        Eigen::Index hi = 0, lo = 0;
        col.maxCoeff(&hi);
        col.minCoeff(&lo);
        q.push_back(static_cast<std::size_t>(hi));
        q.push_back(static_cast<std::size_t>(lo));
        if (extras_per_column == 0) continue;
        // Extras sit at evenly spaced ranks strictly between the minimum and maximum.
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return col[static_cast<Eigen::Index>(x)] < col[static_cast<Eigen::Index>(y)];
        });
        for (std::size_t e = 1; e <= extras_per_column; ++e) {
            const double pos = static_cast<double>(e) * static_cast<double>(m - 1) /
                               static_cast<double>(extras_per_column + 1);
            q.push_back(order[static_cast<std::size_t>(std::llround(pos))]);
        }
    }
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end()), q.end());
    return q;
}

RowMatrix fpec(const numerics::Factorization& fact, const RowMatrix& hilbert_v, const numerics::AlsParams& als,
               double lambda, std::span<const std::size_t> q) {
    const auto k = static_cast<Eigen::Index>(fact.rank());
    const auto n = hilbert_v.cols();
    if (hilbert_v.rows() != k) throw InvalidInput("fpec: hilbert_v rank mismatch");
    if (lambda < 0.0) throw InvalidParameter("fpec: lambda must be non-negative");
    for (std::size_t i : q)
        if (i >= static_cast<std::size_t>(fact.U.rows())) throw InvalidInput("fpec: subsample index out of range");

    Eigen::MatrixXd x(static_cast<Eigen::Index>(q.size()), k);
    for (std::size_t i = 0; i < q.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) = fact.U.row(static_cast<Eigen::Index>(q[i])).array() *
                                              fact.s.transpose().array();
    const RowMatrix phases = x * hilbert_v;

    numerics::AlsDetrender detrender(als);
    Eigen::MatrixXd phi_err(phases.rows(), n);
    Vector base(n);
    for (Eigen::Index r = 0; r < phases.rows(); ++r) {
        detrender.baseline({phases.row(r).data(), static_cast<std::size_t>(n)},
                           {base.data(), static_cast<std::size_t>(n)});
        phi_err.row(r) = base.transpose();
    }
    return numerics::ridge_solve(x, phi_err, lambda);
}

RowMatrix fsec(const numerics::Factorization& fact, const Vector& f, const RowMatrix& hilbert_phi_pec,
               const conventional::TrendParams& trend) {
    const RowMatrix magnitude = vt_over_f(fact.V, f) + hilbert_phi_pec;
    return numerics::trend_rows(magnitude, trend.resolved_window(static_cast<std::size_t>(f.size())), trend.order);
}

double default_lambda(const numerics::Factorization& fact) {
    return fact.rank() ? 1e-6 * fact.s[0] * fact.s[0] : 0.0;
}

ReconstructionBasis ReconstructionBasis::from(const Eigen::MatrixXd& v, const CorrectionBasis& basis,
                                              const Vector& f) {
    const RowMatrix scaled = vt_over_f(v, f);
    ReconstructionBasis out;
    out.amplitude = scaled + basis.hilbert_phi_pec - basis.v_sec;
    out.phase = basis.hilbert_v - basis.phi_pec;
    return out;
}

ReconstructionBasis ReconstructionBasis::from(const numerics::Factorization& fact, const CorrectionBasis& basis,
                                              const Vector& f) {
    return from(fact.V, basis, f);
}

void reconstruct_row(std::span<const double> weights, const ReconstructionBasis& basis,
                     std::span<std::complex<double>> out, std::vector<double>& scratch) {
    const auto k = basis.amplitude.rows();
    const auto n = basis.amplitude.cols();
    if (static_cast<Eigen::Index>(weights.size()) != k || static_cast<Eigen::Index>(out.size()) != n)
        throw InvalidInput("reconstruct_row: shape mismatch");
    // Vectorised kernels peel unaligned heads onto a scalar path, so the
    // workspace is pinned to 64-byte boundaries to keep results independent
    // of where the caller's buffers happen to live.
    constexpr std::size_t align = 8;  // doubles per 64 bytes
    auto padded = [](Eigen::Index x) { return (static_cast<std::size_t>(x) + align - 1) / align * align; };
    scratch.resize(padded(k) + 2 * padded(n) + align);
    double* base = scratch.data();
    base += (align - (reinterpret_cast<std::uintptr_t>(base) / sizeof(double)) % align) % align;
    Eigen::Map<Eigen::RowVectorXd, Eigen::Aligned64> w(base, k);
    Eigen::Map<Eigen::RowVectorXd, Eigen::Aligned64> amp(base + padded(k), n);
    Eigen::Map<Eigen::RowVectorXd, Eigen::Aligned64> ph(base + padded(k) + padded(n), n);
    w = Eigen::Map<const Eigen::RowVectorXd>(weights.data(), k);
    amp.noalias() = w * basis.amplitude;
    ph.noalias() = w * basis.phase;
    amp = amp.array().exp();
    Eigen::Map<Eigen::RowVectorXcd> o(out.data(), n);
    o.real() = amp.array() * ph.array().cos();
    o.imag() = amp.array() * ph.array().sin();
}

ComplexRowMatrix reconstruct(const numerics::Factorization& fact, const CorrectionBasis& basis, const Vector& f,
                             std::optional<std::pair<std::size_t, std::size_t>> row_range, unsigned workers) {
    const auto m = static_cast<std::size_t>(fact.U.rows());
    const auto n = static_cast<std::size_t>(f.size());
    if (basis.rank() != fact.rank() || static_cast<std::size_t>(fact.V.rows()) != n ||
        static_cast<std::size_t>(basis.hilbert_v.cols()) != n || basis.phi_pec.rows() != basis.hilbert_v.rows() ||
        basis.v_sec.rows() != basis.hilbert_v.rows() || basis.hilbert_phi_pec.rows() != basis.hilbert_v.rows())
        throw InvalidInput("reconstruct: factorization and basis shapes differ");
    const auto [first, last] = row_range.value_or(std::pair<std::size_t, std::size_t>{0, m});
    if (first > last || last > m) throw InvalidInput("reconstruct: row range out of bounds");

    const ReconstructionBasis rb = ReconstructionBasis::from(fact, basis, f);
    const RowMatrix weights = fact.U.middleRows(static_cast<Eigen::Index>(first),
                                                static_cast<Eigen::Index>(last - first)) *
                              fact.s.asDiagonal();
    ComplexRowMatrix out(static_cast<Eigen::Index>(last - first), static_cast<Eigen::Index>(n));
    const auto k = static_cast<std::size_t>(fact.rank());
    parallel_rows(0, last - first, workers, [&](std::size_t a, std::size_t b) {
        std::vector<double> scratch;
        for (std::size_t r = a; r < b; ++r) {
            const auto row = static_cast<Eigen::Index>(r);
            reconstruct_row({weights.row(row).data(), k}, rb, {out.row(row).data(), n}, scratch);
        }
    });
    return out;
}

Result fit(const SpectralCube& cube, const ReferenceSpectrum& ref, const Options& opts) {
    require_matching_reference(cube, ref);
    opts.als.validate();
    if (cube.pixels() == 0) throw InvalidInput("fkkec: empty cube");

    Result res;
    Stopwatch clock;
    res.f = estimate_f(cube, opts.noise);
    LogRatioMatrix lr = build_log_ratio(cube, ref, res.f);
    strip_scale_direction(lr);
    res.times.add("log_ratio", clock.lap());
    res.fact = factorize(std::move(lr), opts.rank_override);
    res.times.add("svd", clock.lap());

    CorrectionBasis& b = res.basis;
    b.hilbert_v = fkk(res.fact, res.f);
    res.times.add("kk", clock.lap());

    b.ridge_lambda = opts.lambda.value_or(default_lambda(res.fact));
    b.q = subsample_u(res.fact, opts.extras_per_column);
    b.phi_pec = fpec(res.fact, b.hilbert_v, opts.als, b.ridge_lambda, b.q);
    b.hilbert_phi_pec = numerics::hilbert_rows(b.phi_pec);
    res.times.add("pec", clock.lap());

    b.v_sec = fsec(res.fact, res.f, b.hilbert_phi_pec, opts.trend);
    res.times.add("sec", clock.lap());
    return res;
}

Result process(const SpectralCube& cube, const ReferenceSpectrum& ref, const Options& opts) {
    Result res = fit(cube, ref, opts);
    Stopwatch clock;
    res.k_cars.rows = cube.rows;
    res.k_cars.cols = cube.cols;
    res.k_cars.axis = cube.axis;
    res.k_cars.masks = cube.masks;
    res.k_cars.data = reconstruct(res.fact, res.basis, res.f, std::nullopt, opts.workers);
    res.times.add("reconstruct", clock.seconds());
    return res;
}

}  // namespace rfkk::factorized
