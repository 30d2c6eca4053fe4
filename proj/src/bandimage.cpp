#include "rfkk/bandimage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rfkk::bandimage {

using nlohmann::json;

namespace {

std::array<double, 3> parse_color(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "red") return {1, 0, 0};
        if (s == "green") return {0, 1, 0};
        if (s == "blue") return {0, 0, 1};
        throw InvalidParameter("band spec: unknown colour name '" + s + "'");
    }
    if (!j.is_array() || j.size() != 3) throw InvalidParameter("band spec: colour must be [r, g, b]");
    std::array<double, 3> c{};
    for (std::size_t i = 0; i < 3; ++i) {
        c[i] = j[i].get<double>();
        if (!(c[i] >= 0.0 && c[i] <= 1.0)) throw InvalidParameter("band spec: colour weights must lie in [0, 1]");
    }
    return c;
}

// Linear interpolation of one pixel's Im{K} at wavenumber w.
double interpolate(const ComplexCube& cube, Eigen::Index pixel, Eigen::Index lo, double t) {
    const double a = cube.data(pixel, lo).imag();
    if (t == 0.0) return a;
    return a + t * (cube.data(pixel, lo + 1).imag() - a);
}

std::pair<Eigen::Index, double> locate(const Vector& axis, double w) {
    const auto n = axis.size();
    if (n == 0 || w < axis[0] || w > axis[n - 1])
        throw InvalidParameter("band: wavenumber " + std::to_string(w) + " lies outside the cube axis");
    if (n == 1) return {0, 0.0};
    const auto it = std::upper_bound(axis.data(), axis.data() + n, w);
    Eigen::Index hi = std::min<Eigen::Index>(it - axis.data(), n - 1);
    const Eigen::Index lo = hi - 1;
    const double t = (w - axis[lo]) / (axis[hi] - axis[lo]);
    return {lo, std::clamp(t, 0.0, 1.0)};
}

}  // namespace

BandSpec parse_band_spec(const std::string& json_text) {
    BandSpec spec;
    try {
        const json j = json::parse(json_text);
        for (const auto& b : j.at("bands")) {
            Band band;
            band.name = b.value("name", std::string{});
            band.peak = b.at("peak").get<double>();
            if (b.contains("baseline") && !b.at("baseline").is_null()) {
                const auto& a = b.at("baseline");
                if (!a.is_array() || a.size() != 2) throw InvalidParameter("band spec: baseline must be [lo, hi]");
                band.baseline = std::array<double, 2>{a[0].get<double>(), a[1].get<double>()};
            }
            if (b.contains("color")) band.color = parse_color(b.at("color"));
            spec.bands.push_back(band);
        }
        if (j.contains("percentiles")) {
            const auto& p = j.at("percentiles");
            spec.low_percentile = p.at(0).get<double>();
            spec.high_percentile = p.at(1).get<double>();
        }
    } catch (const json::exception& e) {
        throw InvalidParameter(std::string("band spec: ") + e.what());
    }
    if (spec.bands.empty()) throw InvalidParameter("band spec: no bands");
    if (!(spec.low_percentile >= 0.0 && spec.low_percentile < spec.high_percentile && spec.high_percentile <= 100.0))
        throw InvalidParameter("band spec: percentiles must satisfy 0 <= lo < hi <= 100");
    return spec;
}

BandSpec read_band_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidParameter("band spec: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_band_spec(ss.str());
}

Vector band_values(const ComplexCube& cube, const Band& band) {
    const auto [pk, tp] = locate(cube.axis, band.peak);
    Vector out(cube.data.rows());
    if (!band.baseline) {
        for (Eigen::Index p = 0; p < out.size(); ++p) out[p] = interpolate(cube, p, pk, tp);
        return out;
    }
    const double w0 = (*band.baseline)[0];
    const double w1 = (*band.baseline)[1];
    const auto [i0, t0] = locate(cube.axis, w0);
    const auto [i1, t1] = locate(cube.axis, w1);
    for (Eigen::Index p = 0; p < out.size(); ++p) {
        const double y0 = interpolate(cube, p, i0, t0);
        const double y1 = interpolate(cube, p, i1, t1);
        const double base = w1 == w0 ? y0 : y0 + (band.peak - w0) * (y1 - y0) / (w1 - w0);
        out[p] = interpolate(cube, p, pk, tp) - base;
    }
    return out;
}

Vector normalize(const Vector& values, double low_percentile, double high_percentile) {
    if (values.size() == 0) return values;
    std::vector<double> sorted(values.data(), values.data() + values.size());
    std::sort(sorted.begin(), sorted.end());
    auto percentile = [&](double p) {
        const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const std::size_t j = std::min(i + 1, sorted.size() - 1);
        return sorted[i] + (pos - static_cast<double>(i)) * (sorted[j] - sorted[i]);
    };
    const double lo = percentile(low_percentile);
    const double hi = percentile(high_percentile);
    if (!(hi > lo)) return Vector::Zero(values.size());
    return ((values.array() - lo) / (hi - lo)).cwiseMax(0.0).cwiseMin(1.0);
}

Image render(const ComplexCube& cube, const BandSpec& spec) {
    Image img;
    img.rows = cube.rows;
    img.cols = cube.cols;
    const std::size_t m = cube.pixels();
    std::vector<double> acc(3 * m, 0.0);
    for (const auto& band : spec.bands) {
        const Vector v = normalize(band_values(cube, band), spec.low_percentile, spec.high_percentile);
        for (std::size_t p = 0; p < m; ++p)
            for (std::size_t c = 0; c < 3; ++c) acc[3 * p + c] += band.color[c] * v[static_cast<Eigen::Index>(p)];
    }
    img.rgb.resize(3 * m);
    for (std::size_t i = 0; i < acc.size(); ++i)
        img.rgb[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(acc[i], 0.0, 1.0)));
    return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
    if (image.rgb.size() != image.rows * image.cols * 3) throw InvalidInput("ppm: pixel buffer size mismatch");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("ppm: cannot open " + path.string() + " for writing");
    out << "P6\n" << image.cols << ' ' << image.rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
    if (!out) throw Error("ppm: write failed for " + path.string());
}

}  // namespace rfkk::bandimage
