#include <cmath>
#include <string>

#include "rfkk/types.hpp"

namespace rfkk {

void require_matching_reference(const SpectralCube& cube, const ReferenceSpectrum& ref) {
    if (ref.values.size() != ref.axis.size())
        throw InvalidInput("reference: axis and values differ in length");
    if (ref.axis.size() != cube.axis.size())
        throw InvalidInput("reference: " + std::to_string(ref.axis.size()) + " channels, cube has " +
                           std::to_string(cube.axis.size()));
    // Exact match on purpose: the corrections are Hilbert pairs on this grid.
    if (ref.axis != cube.axis) throw InvalidInput("reference: frequency axis differs from cube axis");
    for (Eigen::Index i = 0; i < ref.values.size(); ++i)
        if (!(ref.values[i] > 0.0) || !std::isfinite(ref.values[i]))
            throw InvalidInput("reference: intensity must be finite and strictly positive");
}

SpectralCube slice_pixels(const SpectralCube& cube, std::size_t first, std::size_t count) {
    if (first + count > cube.pixels()) throw InvalidInput("slice_pixels: range exceeds cube");
    SpectralCube out;
    out.rows = 1;
    out.cols = count;
    out.axis = cube.axis;
    out.data = cube.data.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
    return out;
}

SpectralCube crop(const SpectralCube& cube, const Rect& rect) {
    if (rect.row1 > cube.rows || rect.col1 > cube.cols || rect.row0 > rect.row1 || rect.col0 > rect.col1)
        throw InvalidInput("crop: rectangle outside image");
    SpectralCube out;
    out.rows = rect.row1 - rect.row0;
    out.cols = rect.col1 - rect.col0;
    out.axis = cube.axis;
    out.data.resize(static_cast<Eigen::Index>(out.pixels()), cube.data.cols());
    Eigen::Index dst = 0;
    for (std::size_t r = rect.row0; r < rect.row1; ++r)
        for (std::size_t c = rect.col0; c < rect.col1; ++c)
            out.data.row(dst++) = cube.data.row(static_cast<Eigen::Index>(r * cube.cols + c));
    return out;
}

}  // namespace rfkk
