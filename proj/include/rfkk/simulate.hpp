#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rfkk/types.hpp"

namespace rfkk::simulate {

/// One complex Lorentzian term A / (center - omega - i*width).
struct LorentzianPeak {
    double amplitude = 1.0;
    double center = 1000.0;  // cm^-1
    double width = 10.0;     // cm^-1
};

struct ChemicalSpecies {
    std::vector<LorentzianPeak> peaks;
    Vector chi_nr;  // real, non-negative, one value per channel

    /// Resonant susceptibility sum_m A_m / (center_m - omega - i width_m).
    Eigen::VectorXcd chi_r(const Vector& axis) const;
};

enum class NrbMode { polynomial, constant };
enum class ReferenceMode { linear_polynomial, constant };

/// Normalised image coordinates in [0, 1].
struct Endmember {
    double row = 0.5;
    double col = 0.5;
    double sigma = 0.25;
};

struct PhantomConfig {
    int n_chemicals = 3;
    std::size_t base_rows = 74;
    std::size_t base_cols = 246;
    double side_scale = 1.0;
    double freq_start = -500.0;
    double freq_end = 2500.0;
    std::size_t n_freq = 810;
    std::array<double, 2> peak_band{500.0, 1700.0};
    std::uint64_t rng_seed = 2020;
    NrbMode nrb_mode = NrbMode::polynomial;
    ReferenceMode ref_mode = ReferenceMode::linear_polynomial;

    int min_peaks = 5;
    int max_peaks = 30;
    std::vector<int> peak_counts;  // overrides the random count per chemical when non-empty
    double max_amplitude = 1.0;
    std::array<double, 2> width_range{5.0, 25.0};
    // Polynomial coefficients (in normalised frequency x in [0, 1]) are drawn
    // uniformly from this range; the constant term is kept away from zero so
    // the NRB and reference stay strictly positive.
    std::array<double, 2> nrb_coefficient_range{0.2, 1.0};
    std::array<double, 2> reference_coefficient_range{0.2, 1.0};
    double c_st = 1.0;

    std::vector<Endmember> endmembers;  // defaults generated when empty
    // Training sub-rectangle in normalised coordinates {row0, row1, col0, col1}.
    std::array<double, 4> training_region{0.0, 1.0, 0.25, 0.75};

    std::size_t rows() const;
    std::size_t cols() const;
    void validate() const;
};

/// Known quantities behind a phantom. The per-pixel NRB and error model are
/// derived on demand rather than stored to keep large phantoms in memory.
struct GroundTruth {
    RowMatrix concentrations;  // M x n_chemicals, rows sum to 1
    RowMatrix im_chi_ratio;    // M x N, Im{chi / chi_nr}; empty if not requested
    std::vector<ChemicalSpecies> species;
    Vector axis;
    Vector chi_ref;  // real surrogate susceptibility; I_ref = |c_st chi_ref|^2
    double c_st = 1.0;

    /// I_NRB(omega) = |c_st chi_nr(omega)|^2 of one pixel.
    Vector nrb_intensity(std::size_t pixel) const;
    /// Xi (scalar) and xi(omega) such that I_ref = Xi xi I_NRB and mean(ln xi) = 0.
    double scale_error(std::size_t pixel) const;
    Vector xi(std::size_t pixel) const;
    /// Ground-truth phase error H{1/2 ln(1/(Xi xi))} of one pixel (discrete transform).
    Vector phase_error(std::size_t pixel) const;
};

struct Phantom {
    SpectralCube cube;
    ReferenceSpectrum reference;
    GroundTruth truth;
};

/// Deterministic phantom: I_CARS = |c_st|^2 |sum_c conc_c chi_r,c + chi_nr|^2.
Phantom generate_phantom(const PhantomConfig& config, bool with_truth = true);

/// CARS intensity of one mixture; exposed for tests and tooling.
Vector mixture_intensity(const std::vector<ChemicalSpecies>& species, std::span<const double> conc,
                         const Vector& axis, double c_st);

/// alpha * Poisson(I / alpha) + Normal(0, sigma_g^2), deterministic per seed and
/// independent of how the cube is later chunked (each pixel has its own stream).
SpectralCube add_noise(const SpectralCube& cube, double alpha, double sigma_g, std::uint64_t rng_seed);

/// Evenly spaced frequency axis [start, end] with n samples.
Vector linear_axis(double start, double end, std::size_t n);

}  // namespace rfkk::simulate
