#include "rfkk/cubeio.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <vector>

namespace rfkk::cubeio {

namespace {

constexpr char kMagic[4] = {'R', 'F', 'C', 'B'};
constexpr bool kLittleHost = std::endian::native == std::endian::little;

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& out, T v) {
    unsigned char b[sizeof(T)];
    std::uint64_t bits;
    if constexpr (std::is_same_v<T, double>)
        bits = std::bit_cast<std::uint64_t>(v);
    else
        bits = static_cast<std::uint64_t>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    put_bytes(out, b, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw FormatError("cube: truncated header");
    std::uint64_t bits = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) bits = (bits << 8) | b[i];
    if constexpr (std::is_same_v<T, double>)
        return std::bit_cast<double>(bits);
    else
        return static_cast<T>(bits);
}

// Payload doubles: a straight copy on little-endian hosts, byte-swapped otherwise.
void write_doubles(std::ostream& out, const double* p, std::size_t n) {
    if constexpr (kLittleHost) {
        put_bytes(out, p, n * sizeof(double));
    } else {
        for (std::size_t i = 0; i < n; ++i) put_le(out, p[i]);
    }
}

void read_doubles(std::istream& in, double* p, std::size_t n) {
    if constexpr (kLittleHost) {
        if (!in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double))))
            throw FormatError("cube: truncated payload");
    } else {
        for (std::size_t i = 0; i < n; ++i) p[i] = get_le<double>(in);
    }
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) throw FormatError("cube: dimensions overflow");
    return a * b;
}

void check_axis(const Vector& axis) {
    for (Eigen::Index i = 0; i < axis.size(); ++i) {
        if (!std::isfinite(axis[i])) throw FormatError("cube: non-finite frequency axis");
        if (i > 0 && !(axis[i] > axis[i - 1])) throw FormatError("cube: frequency axis not strictly increasing");
    }
}

void check_masks(const std::map<std::string, Rect>& masks, std::uint64_t rows, std::uint64_t cols) {
    for (const auto& [name, r] : masks) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("cube: mask name too long");
        if (r.row0 > r.row1 || r.col0 > r.col1 || r.row1 > rows || r.col1 > cols)
            throw FormatError("cube: mask '" + name + "' lies outside the image");
    }
}

void write_header(std::ostream& out, const CubeHeader& h) {
    check_axis(h.axis);
    if (static_cast<std::uint64_t>(h.axis.size()) != h.n_freq) throw FormatError("cube: axis length mismatch");
    check_masks(h.masks, h.rows, h.cols);
    put_bytes(out, kMagic, 4);
    put_le<std::uint16_t>(out, h.version);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(h.dtype));
    put_le<std::uint8_t>(out, 0);
    put_le<std::uint64_t>(out, h.rows);
    put_le<std::uint64_t>(out, h.cols);
    put_le<std::uint64_t>(out, h.n_freq);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.masks.size()));
    for (const auto& [name, r] : h.masks) {
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        put_bytes(out, name.data(), name.size());
        put_le<std::uint64_t>(out, r.row0);
        put_le<std::uint64_t>(out, r.row1);
        put_le<std::uint64_t>(out, r.col0);
        put_le<std::uint64_t>(out, r.col1);
    }
    write_doubles(out, h.axis.data(), static_cast<std::size_t>(h.axis.size()));
}

// Reads the header and checks that exactly the declared payload follows.
CubeHeader parse_header(std::istream& in, std::uint64_t file_size, std::uint64_t& payload_offset) {
    char magic[4];
    if (!in.read(magic, 4)) throw FormatError("cube: file too short");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("cube: bad magic, not an RFCB file");
    CubeHeader h;
    h.version = get_le<std::uint16_t>(in);
    if (h.version != kCubeVersion) throw FormatError("cube: unsupported version " + std::to_string(h.version));
    const auto dtype = get_le<std::uint8_t>(in);
    if (dtype > 1) throw FormatError("cube: unknown dtype " + std::to_string(dtype));
    h.dtype = static_cast<DType>(dtype);
    get_le<std::uint8_t>(in);
    h.rows = get_le<std::uint64_t>(in);
    h.cols = get_le<std::uint64_t>(in);
    h.n_freq = get_le<std::uint64_t>(in);
    if (h.n_freq > file_size / 8) throw FormatError("cube: axis longer than file");
    const auto n_masks = get_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_masks; ++i) {
        const auto len = get_le<std::uint16_t>(in);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw FormatError("cube: truncated mask name");
        Rect r;
        r.row0 = get_le<std::uint64_t>(in);
        r.row1 = get_le<std::uint64_t>(in);
        r.col0 = get_le<std::uint64_t>(in);
        r.col1 = get_le<std::uint64_t>(in);
        h.masks[name] = r;
    }
    check_masks(h.masks, h.rows, h.cols);
    h.axis.resize(static_cast<Eigen::Index>(h.n_freq));
    read_doubles(in, h.axis.data(), h.n_freq);
    check_axis(h.axis);

    payload_offset = static_cast<std::uint64_t>(in.tellg());
    const std::uint64_t expected = checked_mul(checked_mul(h.pixels(), h.n_freq), h.bytes_per_sample());
    const std::uint64_t actual = file_size - payload_offset;
    if (actual < expected) throw FormatError("cube: truncated payload");
    if (actual > expected) throw FormatError("cube: trailing bytes after payload");
    return h;
}

std::ifstream open_input(const std::filesystem::path& path, std::uint64_t& size) {
    std::error_code ec;
    size = std::filesystem::file_size(path, ec);
    if (ec) throw Error("cube: cannot stat " + path.string() + ": " + ec.message());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cube: cannot open " + path.string());
    return in;
}

CubeHeader header_for(std::size_t rows, std::size_t cols, const Vector& axis,
                      const std::map<std::string, Rect>& masks, DType dtype) {
    CubeHeader h;
    h.dtype = dtype;
    h.rows = rows;
    h.cols = cols;
    h.n_freq = static_cast<std::uint64_t>(axis.size());
    h.axis = axis;
    h.masks = masks;
    return h;
}

}  // namespace

void write_cube(const std::filesystem::path& path, const SpectralCube& cube) {
    if (static_cast<std::size_t>(cube.data.rows()) != cube.pixels() || cube.data.cols() != cube.axis.size())
        throw InvalidInput("cube: data shape does not match rows x cols x n_freq");
    CubeWriter w(path, header_for(cube.rows, cube.cols, cube.axis, cube.masks, DType::real64));
    w.write_real(cube.data);
    w.close();
}

void write_cube(const std::filesystem::path& path, const ComplexCube& cube) {
    if (static_cast<std::size_t>(cube.data.rows()) != cube.pixels() || cube.data.cols() != cube.axis.size())
        throw InvalidInput("cube: data shape does not match rows x cols x n_freq");
    CubeWriter w(path, header_for(cube.rows, cube.cols, cube.axis, cube.masks, DType::complex128));
    w.write_complex(cube.data);
    w.close();
}

CubeHeader read_header(const std::filesystem::path& path) {
    std::uint64_t size = 0;
    auto in = open_input(path, size);
    std::uint64_t offset = 0;
    return parse_header(in, size, offset);
}

SpectralCube read_cube(const std::filesystem::path& path) {
    CubeReader reader(path);
    const auto& h = reader.header();
    SpectralCube cube;
    cube.rows = h.rows;
    cube.cols = h.cols;
    cube.axis = h.axis;
    cube.masks = h.masks;
    cube.data = reader.read_real(0, h.pixels());
    return cube;
}

ComplexCube read_complex_cube(const std::filesystem::path& path) {
    CubeReader reader(path);
    const auto& h = reader.header();
    ComplexCube cube;
    cube.rows = h.rows;
    cube.cols = h.cols;
    cube.axis = h.axis;
    cube.masks = h.masks;
    cube.data = reader.read_complex(0, h.pixels());
    return cube;
}

CubeReader::CubeReader(const std::filesystem::path& path) {
    std::uint64_t size = 0;
    in_ = open_input(path, size);
    header_ = parse_header(in_, size, payload_offset_);
}

RowMatrix CubeReader::read_real(std::uint64_t first, std::uint64_t count) {
    if (header_.dtype != DType::real64) throw FormatError("cube: expected a real64 cube");
    if (first > header_.pixels() || count > header_.pixels() - first) throw InvalidInput("cube: pixel range");
    RowMatrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(header_.n_freq));
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(payload_offset_ + first * header_.n_freq * 8));
    read_doubles(in_, out.data(), static_cast<std::size_t>(count * header_.n_freq));
    return out;
}

ComplexRowMatrix CubeReader::read_complex(std::uint64_t first, std::uint64_t count) {
    if (header_.dtype != DType::complex128) throw FormatError("cube: expected a complex128 cube");
    if (first > header_.pixels() || count > header_.pixels() - first) throw InvalidInput("cube: pixel range");
    ComplexRowMatrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(header_.n_freq));
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(payload_offset_ + first * header_.n_freq * 16));
    // std::complex<double> is layout-compatible with double[2], i.e. (re, im).
    read_doubles(in_, reinterpret_cast<double*>(out.data()), static_cast<std::size_t>(2 * count * header_.n_freq));
    return out;
}

CubeWriter::CubeWriter(const std::filesystem::path& path, const CubeHeader& header) : header_(header) {
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cube: cannot open " + path.string() + " for writing");
    write_header(out_, header_);
}

void CubeWriter::write_real(const RowMatrix& rows) {
    if (header_.dtype != DType::real64) throw FormatError("cube: writer expects complex data");
    if (static_cast<std::uint64_t>(rows.cols()) != header_.n_freq && rows.rows() > 0)
        throw InvalidInput("cube: channel count mismatch");
    if (written_ + static_cast<std::uint64_t>(rows.rows()) > header_.pixels())
        throw InvalidInput("cube: more pixels written than declared");
    write_doubles(out_, rows.data(), static_cast<std::size_t>(rows.size()));
    written_ += static_cast<std::uint64_t>(rows.rows());
}

void CubeWriter::write_complex(const ComplexRowMatrix& rows) {
    if (header_.dtype != DType::complex128) throw FormatError("cube: writer expects real data");
    if (static_cast<std::uint64_t>(rows.cols()) != header_.n_freq && rows.rows() > 0)
        throw InvalidInput("cube: channel count mismatch");
    if (written_ + static_cast<std::uint64_t>(rows.rows()) > header_.pixels())
        throw InvalidInput("cube: more pixels written than declared");
    write_doubles(out_, reinterpret_cast<const double*>(rows.data()), static_cast<std::size_t>(2 * rows.size()));
    written_ += static_cast<std::uint64_t>(rows.rows());
}

void CubeWriter::close() {
    if (!out_.is_open()) return;
    if (written_ != header_.pixels()) {
        out_.close();
        throw FormatError("cube: " + std::to_string(written_) + " of " + std::to_string(header_.pixels()) +
                          " pixels written");
    }
    out_.flush();
    if (!out_) throw Error("cube: write failed");
    out_.close();
}

// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace

ReferenceSpectrum parse_reference_csv(const std::string& text) {
    std::vector<double> axis, values;
    std::size_t line_no = 0;
    bool seen_data = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        double w = 0.0, v = 0.0;
        const bool ok = comma != std::string_view::npos && line.find(',', comma + 1) == std::string_view::npos &&
                        parse_double(line.substr(0, comma), w) && parse_double(line.substr(comma + 1), v);
        if (!ok) {
            if (!seen_data && axis.empty()) {  // one optional header row
                seen_data = true;
                continue;
            }
            throw FormatError("reference csv: line " + std::to_string(line_no) + " is not two numeric columns");
        }
        seen_data = true;
        if (!std::isfinite(w) || !std::isfinite(v))
            throw FormatError("reference csv: non-finite value on line " + std::to_string(line_no));
        if (!axis.empty() && !(w > axis.back()))
            throw FormatError("reference csv: wavenumbers must be strictly increasing (line " +
                              std::to_string(line_no) + ")");
        if (!(v > 0.0))
            throw FormatError("reference csv: intensity must be strictly positive (line " + std::to_string(line_no) +
                              ")");
        axis.push_back(w);
        values.push_back(v);
    }
    if (axis.empty()) throw FormatError("reference csv: no data rows");
    ReferenceSpectrum ref;
    ref.axis = Eigen::Map<const Vector>(axis.data(), static_cast<Eigen::Index>(axis.size()));
    ref.values = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
    return ref;
}

ReferenceSpectrum read_reference_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("reference csv: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_reference_csv(ss.str());
}

void write_reference_csv(const std::filesystem::path& path, const ReferenceSpectrum& ref) {
    if (ref.axis.size() != ref.values.size()) throw InvalidInput("reference csv: axis and values differ in length");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("reference csv: cannot open " + path.string() + " for writing");
    out << "wavenumber,intensity\n";
    char buf[64];
    for (Eigen::Index i = 0; i < ref.axis.size(); ++i) {
        // Shortest round-trip representation; locale independent.
        auto r = std::to_chars(buf, buf + sizeof buf, ref.axis[i]);
        *r.ptr++ = ',';
        r = std::to_chars(r.ptr, buf + sizeof buf, ref.values[i]);
        *r.ptr++ = '\n';
        out.write(buf, r.ptr - buf);
    }
    if (!out) throw Error("reference csv: write failed");
}

}  // namespace rfkk::cubeio
