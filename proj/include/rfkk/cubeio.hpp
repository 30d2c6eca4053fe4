#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "rfkk/types.hpp"

namespace rfkk::cubeio {

inline constexpr std::uint16_t kCubeVersion = 1;

enum class DType : std::uint8_t { real64 = 0, complex128 = 1 };

struct CubeHeader {
    std::uint16_t version = kCubeVersion;
    DType dtype = DType::real64;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::uint64_t n_freq = 0;
    Vector axis;
    std::map<std::string, Rect> masks;

    std::uint64_t pixels() const { return rows * cols; }
    std::uint64_t bytes_per_sample() const { return dtype == DType::real64 ? 8 : 16; }
};

void write_cube(const std::filesystem::path& path, const SpectralCube& cube);
void write_cube(const std::filesystem::path& path, const ComplexCube& cube);

SpectralCube read_cube(const std::filesystem::path& path);
ComplexCube read_complex_cube(const std::filesystem::path& path);

/// Header-only read; validates the payload length against the file size.
CubeHeader read_header(const std::filesystem::path& path);

/// Sequential access to a cube file by pixel range.
class CubeReader {
public:
    explicit CubeReader(const std::filesystem::path& path);

    const CubeHeader& header() const { return header_; }

    /// Pixels [first, first + count) of a real cube.
    RowMatrix read_real(std::uint64_t first, std::uint64_t count);
    /// Pixels [first, first + count) of a complex cube.
    ComplexRowMatrix read_complex(std::uint64_t first, std::uint64_t count);

private:
    std::ifstream in_;
    CubeHeader header_;
    std::uint64_t payload_offset_ = 0;
};

/// Incremental writer: header first, then pixel blocks in order.
class CubeWriter {
public:
    CubeWriter(const std::filesystem::path& path, const CubeHeader& header);
    void write_real(const RowMatrix& rows);
    void write_complex(const ComplexRowMatrix& rows);
    /// Throws FormatError if fewer pixels than declared were written.
    void close();

private:
    std::ofstream out_;
    CubeHeader header_;
    std::uint64_t written_ = 0;
};

/// Two numeric columns (wavenumber, intensity); optional header row; LF or
/// CRLF line endings. Locale independent.
ReferenceSpectrum read_reference_csv(const std::filesystem::path& path);
ReferenceSpectrum parse_reference_csv(const std::string& text);
void write_reference_csv(const std::filesystem::path& path, const ReferenceSpectrum& ref);

}  // namespace rfkk::cubeio
