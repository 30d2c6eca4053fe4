#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace rfkk {

/// Row-major dense matrix; one spectrum (or basis vector) per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexRowMatrix =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Error taxonomy. Every failure surfaced by the library derives from Error so
// callers (the CLI in particular) can map them onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class InvalidInput : public Error {
public:
    using Error::Error;
};
class InvalidParameter : public Error {
public:
    using Error::Error;
};
class NumericalError : public Error {
public:
    using Error::Error;
};
class FormatError : public Error {
public:
    using Error::Error;
};
class IncompatibleModel : public Error {
public:
    using Error::Error;
};

/// Half-open pixel rectangle [row0, row1) x [col0, col1) in image coordinates.
struct Rect {
    std::size_t row0 = 0, row1 = 0, col0 = 0, col1 = 0;

    bool contains(std::size_t r, std::size_t c) const {
        return r >= row0 && r < row1 && c >= col0 && c < col1;
    }
    std::size_t area() const { return (row1 - row0) * (col1 - col0); }
    bool operator==(const Rect&) const = default;
};

/// Raw CARS intensities: rows*cols pixels (row-major image order), n_freq channels each.
struct SpectralCube {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vector axis;     // cm^-1, strictly increasing
    RowMatrix data;  // (rows*cols) x n_freq
    std::map<std::string, Rect> masks;

    std::size_t pixels() const { return rows * cols; }
    std::size_t channels() const { return static_cast<std::size_t>(axis.size()); }
};

/// Retrieved K_CARS(omega) per pixel. Im part is the Raman-to-NRB ratio.
struct ComplexCube {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vector axis;
    ComplexRowMatrix data;
    std::map<std::string, Rect> masks;

    std::size_t pixels() const { return rows * cols; }
    std::size_t channels() const { return static_cast<std::size_t>(axis.size()); }
    RowMatrix imag() const { return data.imag(); }
};

/// Surrogate-material CARS spectrum I_ref(omega).
struct ReferenceSpectrum {
    Vector axis;
    Vector values;
};

/// Throws InvalidInput unless the reference is strictly positive and shares the cube's axis.
void require_matching_reference(const SpectralCube& cube, const ReferenceSpectrum& ref);

/// Extracts pixel rows [first, first+count) of a cube as a new cube with a 1 x count image.
SpectralCube slice_pixels(const SpectralCube& cube, std::size_t first, std::size_t count);

/// Extracts an image sub-rectangle of a cube.
SpectralCube crop(const SpectralCube& cube, const Rect& rect);

}  // namespace rfkk
