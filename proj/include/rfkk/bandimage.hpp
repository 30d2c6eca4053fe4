#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rfkk/types.hpp"

namespace rfkk::bandimage {

/// One pseudocolour channel: Im{K}(peak) minus the straight line through the
/// baseline anchors (evaluated at the peak), painted in `color`.
struct Band {
    std::string name;
    double peak = 0.0;                               // cm^-1
    std::optional<std::array<double, 2>> baseline;   // anchor wavenumbers
    std::array<double, 3> color{1.0, 1.0, 1.0};      // RGB weights in [0, 1]
};

struct BandSpec {
    std::vector<Band> bands;
    double low_percentile = 1.0;
    double high_percentile = 99.0;
};

/// {"bands": [{"name", "peak", "baseline": [a, b], "color": [r, g, b]}],
///  "percentiles": [lo, hi]}. Throws InvalidParameter on malformed specs.
BandSpec parse_band_spec(const std::string& json_text);
BandSpec read_band_spec(const std::filesystem::path& path);

/// Per-pixel band value. Throws InvalidParameter if any wavenumber lies
/// outside the cube axis.
Vector band_values(const ComplexCube& cube, const Band& band);

/// Linear map of [percentile lo, percentile hi] onto [0, 1], clamped. A flat
/// channel maps to zeros.
Vector normalize(const Vector& values, double low_percentile, double high_percentile);

struct Image {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> rgb;  // rows * cols * 3
};

Image render(const ComplexCube& cube, const BandSpec& spec);

/// Binary portable pixmap (P6).
void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace rfkk::bandimage
