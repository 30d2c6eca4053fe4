#include "rfkk/simulate.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "rfkk/numerics.hpp"

namespace rfkk::simulate {

namespace {

double uniform(std::mt19937_64& gen, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen);
}

std::vector<Endmember> default_endmembers(int n) {
    if (n == 3) return {{0.30, 0.20, 0.25}, {0.70, 0.50, 0.25}, {0.35, 0.80, 0.25}};
    std::vector<Endmember> out;
    for (int i = 0; i < n; ++i) {
        const double t = 2.0 * std::numbers::pi * (static_cast<double>(i) + 0.25) / static_cast<double>(n);
        out.push_back({0.5 + 0.3 * std::sin(t), 0.5 + 0.35 * std::cos(t), 0.25});
    }
    return out;
}

double normalized_coord(std::size_t i, std::size_t n) {
    return n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5;
}

std::size_t scaled(std::size_t base, double scale) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(base) * scale));
}

std::size_t region_index(double frac, std::size_t n) {
    return static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
}

}  // namespace

Eigen::VectorXcd ChemicalSpecies::chi_r(const Vector& axis) const {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(axis.size());
    for (const auto& p : peaks)
        for (Eigen::Index i = 0; i < axis.size(); ++i)
            out[i] += p.amplitude / std::complex<double>(p.center - axis[i], -p.width);
    return out;
}

std::size_t PhantomConfig::rows() const { return scaled(base_rows, side_scale); }
std::size_t PhantomConfig::cols() const { return scaled(base_cols, side_scale); }

void PhantomConfig::validate() const {
    if (n_chemicals < 1) throw InvalidParameter("phantom: need at least one chemical");
    if (!(side_scale > 0.0)) throw InvalidParameter("phantom: side_scale must be positive");
    if (!(freq_start < freq_end)) throw InvalidParameter("phantom: freq_start must be below freq_end");
    if (n_freq < 8) throw InvalidParameter("phantom: need at least 8 frequency channels");
    if (peak_band[0] > peak_band[1] || peak_band[0] < freq_start || peak_band[1] > freq_end)
        throw InvalidParameter("phantom: peak band must lie within the frequency range");
    if (min_peaks < 0 || max_peaks < min_peaks) throw InvalidParameter("phantom: invalid peak count range");
    if (!peak_counts.empty() && peak_counts.size() != static_cast<std::size_t>(n_chemicals))
        throw InvalidParameter("phantom: peak_counts must list one count per chemical");
    for (int c : peak_counts)
        if (c < 0) throw InvalidParameter("phantom: peak counts must be non-negative");
    if (!(max_amplitude > 0.0)) throw InvalidParameter("phantom: max_amplitude must be positive");
    if (!(width_range[0] > 0.0) || width_range[1] < width_range[0])
        throw InvalidParameter("phantom: widths must be positive");
    for (const auto& r : {nrb_coefficient_range, reference_coefficient_range})
        if (!(r[0] > 0.0) || r[1] < r[0])
            throw InvalidParameter("phantom: polynomial coefficient range must be positive");
    if (c_st == 0.0) throw InvalidParameter("phantom: c_st must be non-zero");
    if (!endmembers.empty() && endmembers.size() != static_cast<std::size_t>(n_chemicals))
        throw InvalidParameter("phantom: endmembers must list one entry per chemical");
    for (const auto& e : endmembers)
        if (!(e.sigma > 0.0)) throw InvalidParameter("phantom: endmember sigma must be positive");
    const auto& t = training_region;
    if (!(t[0] >= 0.0 && t[0] < t[1] && t[1] <= 1.0 && t[2] >= 0.0 && t[2] < t[3] && t[3] <= 1.0))
        throw InvalidParameter("phantom: training region must be a non-empty sub-rectangle of [0,1]^2");
    if (rows() == 0 || cols() == 0) throw InvalidParameter("phantom: scaled image is empty");
}

Vector linear_axis(double start, double end, std::size_t n) {
    return Vector::LinSpaced(static_cast<Eigen::Index>(n), start, end);
}

Vector mixture_intensity(const std::vector<ChemicalSpecies>& species, std::span<const double> conc,
                         const Vector& axis, double c_st) {
    Eigen::VectorXcd chi = Eigen::VectorXcd::Zero(axis.size());
    for (std::size_t c = 0; c < species.size(); ++c)
        chi += conc[c] * (species[c].chi_r(axis) + species[c].chi_nr.cast<std::complex<double>>());
    return (c_st * chi).cwiseAbs2();
}

Phantom generate_phantom(const PhantomConfig& config, bool with_truth) {
    config.validate();
    const std::size_t rows = config.rows();
    const std::size_t cols = config.cols();
    const std::size_t m = rows * cols;
    const auto n = static_cast<Eigen::Index>(config.n_freq);
    const auto nchem = static_cast<std::size_t>(config.n_chemicals);

    Phantom out;
    const Vector axis = linear_axis(config.freq_start, config.freq_end, config.n_freq);
    const Vector x = (axis.array() - config.freq_start) / (config.freq_end - config.freq_start);

    std::mt19937_64 gen(config.rng_seed);
    std::vector<ChemicalSpecies> species(nchem);
    for (std::size_t c = 0; c < nchem; ++c) {
        const int count = config.peak_counts.empty()
                              ? std::uniform_int_distribution<int>(config.min_peaks, config.max_peaks)(gen)
                              : config.peak_counts[c];
        for (int p = 0; p < count; ++p) {
            LorentzianPeak peak;
            peak.amplitude = config.max_amplitude * (1.0 - uniform(gen, 0.0, 1.0));  // (0, max]
            peak.center = uniform(gen, config.peak_band[0], config.peak_band[1]);
            peak.width = uniform(gen, config.width_range[0], config.width_range[1]);
            species[c].peaks.push_back(peak);
        }
        const auto& r = config.nrb_coefficient_range;
        const double c0 = uniform(gen, r[0], r[1]);
        const double c1 = uniform(gen, r[0], r[1]);
        const double c2 = uniform(gen, r[0], r[1]);
        if (config.nrb_mode == NrbMode::constant)
            species[c].chi_nr = Vector::Constant(n, c0);
        else
            species[c].chi_nr = c0 + c1 * x.array() + c2 * x.array().square();
    }
    const auto& rr = config.reference_coefficient_range;
    const double r0 = uniform(gen, rr[0], rr[1]);
    const double r1 = uniform(gen, rr[0], rr[1]);
    Vector chi_ref = config.ref_mode == ReferenceMode::constant ? Vector::Constant(n, r0)
                                                                : Vector(r0 + r1 * x.array());

    // Concentration map: overlapping Gaussian fields normalised to unit sum.
    const auto endmembers = config.endmembers.empty() ? default_endmembers(config.n_chemicals) : config.endmembers;
    RowMatrix conc(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(nchem));
    for (std::size_t r = 0; r < rows; ++r) {
        const double yr = normalized_coord(r, rows);
        for (std::size_t col = 0; col < cols; ++col) {
            const double xc = normalized_coord(col, cols);
            const auto pix = static_cast<Eigen::Index>(r * cols + col);
            double sum = 0.0;
            for (std::size_t c = 0; c < nchem; ++c) {
                const auto& e = endmembers[c];
                const double d2 = (yr - e.row) * (yr - e.row) + (xc - e.col) * (xc - e.col);
                const double g = std::exp(-d2 / (2.0 * e.sigma * e.sigma));
                conc(pix, static_cast<Eigen::Index>(c)) = g;
                sum += g;
            }
            conc.row(pix) /= sum;
        }
    }

    std::vector<Eigen::VectorXcd> chi_r(nchem);
    for (std::size_t c = 0; c < nchem; ++c) chi_r[c] = species[c].chi_r(axis);

    out.cube.rows = rows;
    out.cube.cols = cols;
    out.cube.axis = axis;
    out.cube.data.resize(static_cast<Eigen::Index>(m), n);
    if (with_truth) out.truth.im_chi_ratio.resize(static_cast<Eigen::Index>(m), n);

    const double cst2 = config.c_st * config.c_st;
    for (std::size_t pix = 0; pix < m; ++pix) {
        const auto p = static_cast<Eigen::Index>(pix);
        for (Eigen::Index i = 0; i < n; ++i) {
            std::complex<double> resonant = 0.0;
            double nonresonant = 0.0;
            for (std::size_t c = 0; c < nchem; ++c) {
                const double w = conc(p, static_cast<Eigen::Index>(c));
                resonant += w * chi_r[c][i];
                nonresonant += w * species[c].chi_nr[i];
            }
            out.cube.data(p, i) = cst2 * std::norm(resonant + nonresonant);
            if (with_truth) out.truth.im_chi_ratio(p, i) = resonant.imag() / nonresonant;
        }
    }

    const auto& t = config.training_region;
    out.cube.masks["training"] = Rect{region_index(t[0], rows), region_index(t[1], rows),
                                      region_index(t[2], cols), region_index(t[3], cols)};

    out.reference.axis = axis;
    out.reference.values = (config.c_st * chi_ref).array().square();

    out.truth.concentrations = std::move(conc);
    out.truth.species = std::move(species);
    out.truth.axis = axis;
    out.truth.chi_ref = std::move(chi_ref);
    out.truth.c_st = config.c_st;
    return out;
}

Vector GroundTruth::nrb_intensity(std::size_t pixel) const {
    if (pixel >= static_cast<std::size_t>(concentrations.rows()))
        throw InvalidInput("ground truth: pixel out of range");
    Vector chi_nr = Vector::Zero(axis.size());
    for (std::size_t c = 0; c < species.size(); ++c)
        chi_nr += concentrations(static_cast<Eigen::Index>(pixel), static_cast<Eigen::Index>(c)) * species[c].chi_nr;
    return (c_st * chi_nr).array().square();
}

double GroundTruth::scale_error(std::size_t pixel) const {
    const Vector ratio = (c_st * chi_ref).array().square() / nrb_intensity(pixel).array();
    return std::exp(ratio.array().log().mean());
}

Vector GroundTruth::xi(std::size_t pixel) const {
    const Vector ratio = (c_st * chi_ref).array().square() / nrb_intensity(pixel).array();
    return ratio / scale_error(pixel);
}

Vector GroundTruth::phase_error(std::size_t pixel) const {
    const Vector ratio = (c_st * chi_ref).array().square() / nrb_intensity(pixel).array();
    const Vector half_log_inverse = -0.5 * ratio.array().log();
    return numerics::hilbert(half_log_inverse);
}

SpectralCube add_noise(const SpectralCube& cube, double alpha, double sigma_g, std::uint64_t rng_seed) {
    if (!(alpha >= 0.0) || !(sigma_g >= 0.0))
        throw InvalidParameter("add_noise: alpha and sigma_g must be non-negative");
    SpectralCube out = cube;
    if (alpha == 0.0 && sigma_g == 0.0) return out;
    if ((cube.data.array() < 0.0).any()) throw InvalidInput("add_noise: intensities must be non-negative");

    const auto m = out.data.rows();
    const auto n = out.data.cols();
    for (Eigen::Index p = 0; p < m; ++p) {
        const auto pix = static_cast<std::uint64_t>(p);
        std::seed_seq seq{static_cast<std::uint32_t>(rng_seed), static_cast<std::uint32_t>(rng_seed >> 32),
                          static_cast<std::uint32_t>(pix), static_cast<std::uint32_t>(pix >> 32)};
        std::mt19937_64 gen(seq);
        std::normal_distribution<double> gauss(0.0, sigma_g > 0.0 ? sigma_g : 1.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = out.data(p, i);
            if (alpha > 0.0) {
                std::poisson_distribution<long long> poisson(v / alpha);
                v = alpha * static_cast<double>(v > 0.0 ? poisson(gen) : 0);
            }
            if (sigma_g > 0.0) v += gauss(gen);
            out.data(p, i) = v;
        }
    }
    return out;
}

}  // namespace rfkk::simulate
