#include <doctest.h>

#include <cmath>

#include "rfkk/bandimage.hpp"
#include "rfkk/factorized.hpp"
#include "rfkk/simulate.hpp"
#include "support.hpp"

using namespace rfkk;
using namespace rfkk::bandimage;

namespace {

double correlation(const Vector& a, const Vector& b) {
    const Vector x = a.array() - a.mean();
    const Vector y = b.array() - b.mean();
    return x.dot(y) / (x.norm() * y.norm());
}

ComplexCube uniform_cube() {
    ComplexCube c;
    c.rows = 3;
    c.cols = 4;
    c.axis = Vector::LinSpaced(11, 0.0, 1000.0);
    c.data = ComplexRowMatrix::Constant(12, 11, {1.0, 0.5});
    return c;
}

}  // namespace

TEST_SUITE("bandimage") {

TEST_CASE("uniform cube gives a uniform image") {
    const BandSpec spec = parse_band_spec(R"({"bands": [{"peak": 300, "baseline": [100, 500], "color": "red"},
                                                        {"peak": 700, "color": [0.5, 1, 0]}]})");
    const Image img = render(uniform_cube(), spec);
    REQUIRE(img.rgb.size() == 36);
    for (std::size_t p = 1; p < 12; ++p)
        for (std::size_t c = 0; c < 3; ++c) CHECK(img.rgb[3 * p + c] == img.rgb[c]);
}

TEST_CASE("band value subtracts the interpolated baseline") {
    ComplexCube c = uniform_cube();
    for (Eigen::Index i = 0; i < 11; ++i) c.data(0, i) = {0.0, 2.0 * c.axis[i]};
    Band b{"ramp", 250.0, std::array<double, 2>{100.0, 500.0}, {1, 1, 1}};
    CHECK(std::abs(band_values(c, b)[0]) < 1e-12);
    b.baseline.reset();
    CHECK(band_values(c, b)[0] == doctest::Approx(500.0));
    b.baseline = std::array<double, 2>{900.0, 900.0};
    CHECK(band_values(c, b)[0] == doctest::Approx(500.0 - 1800.0));
}

TEST_CASE("percentile normalisation") {
    const Vector v = Vector::LinSpaced(101, 0.0, 100.0);
    const Vector n = normalize(v, 10.0, 90.0);
    CHECK(n[0] == 0.0);
    CHECK(n[100] == 1.0);
    CHECK(n[50] == doctest::Approx(0.5));
    CHECK(normalize(Vector::Constant(5, 2.0), 1.0, 99.0).isZero());
}

TEST_CASE("band outside the axis is rejected") {
    const Band b{"x", 2000.0, {}, {1, 0, 0}};
    CHECK_THROWS_AS(band_values(uniform_cube(), b), InvalidParameter);
    const Band c{"x", 500.0, std::array<double, 2>{-10.0, 600.0}, {1, 0, 0}};
    CHECK_THROWS_AS(band_values(uniform_cube(), c), InvalidParameter);
}

TEST_CASE("malformed band specs are rejected") {
    CHECK_THROWS_AS(parse_band_spec("{"), InvalidParameter);
    CHECK_THROWS_AS(parse_band_spec(R"({"bands": []})"), InvalidParameter);
    CHECK_THROWS_AS(parse_band_spec(R"({"bands": [{"name": "x"}]})"), InvalidParameter);
    CHECK_THROWS_AS(parse_band_spec(R"({"bands": [{"peak": 1, "color": "mauve"}]})"), InvalidParameter);
    CHECK_THROWS_AS(parse_band_spec(R"({"bands": [{"peak": 1, "baseline": [1]}]})"), InvalidParameter);
    CHECK_THROWS_AS(parse_band_spec(R"({"bands": [{"peak": 1}], "percentiles": [90, 10]})"), InvalidParameter);
}

TEST_CASE("shipped tissue band spec parses") {
    const BandSpec spec = read_band_spec(std::filesystem::path(RFKK_SOURCE_DIR) / "configs" / "bands_tissue.json");
    REQUIRE(spec.bands.size() == 3);
    CHECK(spec.bands[0].peak == 716.0);
    CHECK(spec.bands[0].baseline == std::array<double, 2>{691.0, 738.0});
    CHECK(spec.bands[1].peak == 855.0);
    CHECK(spec.bands[2].peak == 2837.0);
    CHECK(!spec.bands[2].baseline);
    CHECK(spec.low_percentile == 1.0);
    CHECK(spec.high_percentile == 99.0);
}

TEST_CASE("single-chemical band follows its concentration map") {
    simulate::PhantomConfig pc = rfkk::testing::small_phantom();
    pc.base_rows = 24;
    pc.base_cols = 40;
    const simulate::Phantom ph = simulate::generate_phantom(pc);
    const factorized::Result r = factorized::process(ph.cube, ph.reference);

    // Strongest peak of chemical 0 that the other species leave quiet.
    const auto& sp = ph.truth.species;
    const Vector axis = ph.cube.axis;
    double best = -1.0, peak = 0.0;
    for (const auto& p : sp[0].peaks) {
        double others = 0.0;
        for (std::size_t c = 1; c < sp.size(); ++c)
            others += sp[c].chi_r(Vector::Constant(1, p.center))[0].imag();
        const double score = p.amplitude / p.width - std::abs(others);
        if (score > best) best = score, peak = p.center;
    }
    const Band band{"chem1", peak, {}, {1, 0, 0}};
    const Vector v = band_values(r.k_cars, band);
    const double corr = correlation(v, ph.truth.concentrations.col(0));
    MESSAGE("band at " << peak << " correlates " << corr);
    CHECK(corr > 0.9);
}

}  // TEST_SUITE
