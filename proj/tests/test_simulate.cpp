#include <doctest.h>

#include <cmath>

#include "rfkk/simulate.hpp"
#include "support.hpp"

using namespace rfkk;
using namespace rfkk::simulate;
using rfkk::testing::max_abs_diff;
using rfkk::testing::small_phantom;

namespace {

SpectralCube constant_cube(std::size_t rows, std::size_t cols, std::size_t n, double value) {
    SpectralCube c;
    c.rows = rows;
    c.cols = cols;
    c.axis = linear_axis(0.0, 1.0, n);
    c.data = RowMatrix::Constant(static_cast<Eigen::Index>(rows * cols), static_cast<Eigen::Index>(n), value);
    return c;
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("default phantom dimensions") {
    PhantomConfig pc;
    CHECK(pc.rows() * pc.cols() == 18204);
    CHECK(pc.n_freq == 810);
    pc.side_scale = 2.0;
    CHECK(pc.rows() * pc.cols() == 72816);
    pc.side_scale = 4.0;
    CHECK(pc.rows() * pc.cols() == 291264);

    const Phantom ph = generate_phantom(PhantomConfig{}, false);
    CHECK(ph.cube.rows == 74);
    CHECK(ph.cube.cols == 246);
    CHECK(ph.cube.data.rows() == 18204);
    CHECK(ph.cube.data.cols() == 810);
    CHECK(ph.cube.axis[0] == doctest::Approx(-500.0));
    CHECK(ph.cube.axis[809] == doctest::Approx(2500.0));
    CHECK(ph.truth.im_chi_ratio.size() == 0);
    CHECK((ph.cube.data.array() >= 0.0).all());
}

TEST_CASE("phantom is bit-identical for a fixed seed") {
    const Phantom a = generate_phantom(small_phantom(11));
    const Phantom b = generate_phantom(small_phantom(11));
    const Phantom c = generate_phantom(small_phantom(12));
    CHECK(a.cube.data == b.cube.data);
    CHECK(a.reference.values == b.reference.values);
    CHECK(a.truth.im_chi_ratio == b.truth.im_chi_ratio);
    CHECK(a.cube.data != c.cube.data);
}

TEST_CASE("phantom invariants") {
    const PhantomConfig pc = small_phantom();
    const Phantom ph = generate_phantom(pc);
    const auto& t = ph.truth;
    CHECK(max_abs_diff(t.concentrations.rowwise().sum(), Vector::Ones(t.concentrations.rows())) < 1e-12);
    CHECK((t.concentrations.array() >= 0.0).all());
    CHECK((ph.reference.values.array() > 0.0).all());
    for (const auto& s : t.species) {
        CHECK((s.chi_nr.array() >= 0.0).all());
        for (const auto& p : s.peaks) {
            CHECK(p.amplitude > 0.0);
            CHECK(p.width > 0.0);
            CHECK(p.center >= pc.peak_band[0]);
            CHECK(p.center <= pc.peak_band[1]);
        }
    }
    for (std::size_t pix : {std::size_t{0}, std::size_t{37}, ph.cube.pixels() - 1}) {
        CHECK(t.scale_error(pix) > 0.0);
        const Vector xi = t.xi(pix);
        CHECK((xi.array() > 0.0).all());
        CHECK(std::abs(xi.array().log().mean()) < 1e-12);
    }
    const Rect train = ph.cube.masks.at("training");
    CHECK(train.area() > 0);
    CHECK(train.row1 <= ph.cube.rows);
    CHECK(train.col1 <= ph.cube.cols);
}

TEST_CASE("cube spectra are the chi-level mixture of the species") {
    const Phantom ph = generate_phantom(small_phantom());
    const auto& t = ph.truth;
    for (std::size_t pix : {std::size_t{3}, std::size_t{100}, std::size_t{239}}) {
        const auto row = static_cast<Eigen::Index>(pix);
        const Vector conc = t.concentrations.row(row).transpose();
        const Vector expect = mixture_intensity(t.species, {conc.data(), 3}, t.axis, t.c_st);
        CHECK(max_abs_diff(Vector(ph.cube.data.row(row).transpose()), expect) < 1e-12 * expect.maxCoeff());
    }

    // A pure constituent is |c_st (chi_r + chi_nr)|^2 of that species alone.
    const std::vector<double> pure{0.0, 1.0, 0.0};
    const Vector got = mixture_intensity(t.species, pure, t.axis, 1.0);
    const Eigen::VectorXcd chi = t.species[1].chi_r(t.axis) + t.species[1].chi_nr.cast<std::complex<double>>();
    CHECK(max_abs_diff(got, Vector(chi.cwiseAbs2())) < 1e-12 * got.maxCoeff());
}

TEST_CASE("constant nrb without peaks gives a flat cube and zero truth") {
    PhantomConfig pc = small_phantom();
    pc.nrb_mode = NrbMode::constant;
    pc.peak_counts = {0, 0, 0};
    pc.c_st = 1.5;
    const Phantom ph = generate_phantom(pc);
    for (Eigen::Index p = 0; p < ph.cube.data.rows(); ++p) {
        const auto row = ph.cube.data.row(p);
        CHECK(row.maxCoeff() - row.minCoeff() <= 1e-14 * row.maxCoeff());
        const Vector nrb = ph.truth.nrb_intensity(static_cast<std::size_t>(p));
        CHECK(std::abs(row[0] - nrb[0]) <= 1e-12 * nrb[0]);
    }
    CHECK(ph.truth.im_chi_ratio.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noise with zero parameters is the identity") {
    const Phantom ph = generate_phantom(small_phantom());
    const SpectralCube noisy = add_noise(ph.cube, 0.0, 0.0, 5);
    CHECK(noisy.data == ph.cube.data);
}

TEST_CASE("gaussian noise statistics") {
    const SpectralCube cube = constant_cube(20, 25, 256, 100.0);  // 128000 samples
    const SpectralCube noisy = add_noise(cube, 0.0, 1.0, 3);
    const double count = static_cast<double>(noisy.data.size());
    const double mean = noisy.data.mean();
    const double var = (noisy.data.array() - mean).square().sum() / (count - 1.0);
    CHECK(std::abs(mean - 100.0) < 5.0 / std::sqrt(count));
    CHECK(std::abs(std::sqrt(var) - 1.0) < 0.03);
}

TEST_CASE("poisson noise variance scales with alpha") {
    const SpectralCube cube = constant_cube(20, 25, 256, 100.0);
    const SpectralCube noisy = add_noise(cube, 2.0, 0.0, 4);
    const double count = static_cast<double>(noisy.data.size());
    const double mean = noisy.data.mean();
    const double var = (noisy.data.array() - mean).square().sum() / (count - 1.0);
    CHECK(var == doctest::Approx(200.0).epsilon(0.05));
    CHECK(mean == doctest::Approx(100.0).epsilon(0.01));
}

TEST_CASE("noise is deterministic per seed and independent of chunking") {
    const Phantom ph = generate_phantom(small_phantom());
    const SpectralCube a = add_noise(ph.cube, 1e-3, 1e-3, 9);
    const SpectralCube b = add_noise(ph.cube, 1e-3, 1e-3, 9);
    CHECK(a.data == b.data);
    const SpectralCube c = add_noise(ph.cube, 1e-3, 1e-3, 10);
    CHECK(a.data != c.data);
    // Each pixel has its own stream, so noising a slice matches the same rows of the whole.
    const SpectralCube part = add_noise(slice_pixels(ph.cube, 0, 50), 1e-3, 1e-3, 9);
    CHECK(part.data == a.data.topRows(50));
}

TEST_CASE("noise parameter validation") {
    const SpectralCube cube = constant_cube(2, 2, 16, 1.0);
    CHECK_THROWS_AS(add_noise(cube, -1.0, 0.0, 1), InvalidParameter);
    CHECK_THROWS_AS(add_noise(cube, 0.0, -1.0, 1), InvalidParameter);
    SpectralCube neg = cube;
    neg.data(0, 0) = -1.0;
    CHECK_THROWS_AS(add_noise(neg, 1.0, 0.0, 1), InvalidInput);
}

TEST_CASE("phantom config validation") {
    auto bad = [](auto mutate) {
        PhantomConfig pc = small_phantom();
        mutate(pc);
        CHECK_THROWS_AS(generate_phantom(pc), InvalidParameter);
    };
    bad([](PhantomConfig& c) { c.n_chemicals = 0; });
    bad([](PhantomConfig& c) { c.side_scale = 0.0; });
    bad([](PhantomConfig& c) { c.freq_start = 3000.0; });
    bad([](PhantomConfig& c) { c.peak_band = {-1000.0, 1000.0}; });
    bad([](PhantomConfig& c) { c.min_peaks = 10, c.max_peaks = 5; });
    bad([](PhantomConfig& c) { c.peak_counts = {1, 2}; });
    bad([](PhantomConfig& c) { c.width_range = {0.0, 3.0}; });
    bad([](PhantomConfig& c) { c.training_region = {0.5, 0.5, 0.0, 1.0}; });
    bad([](PhantomConfig& c) { c.c_st = 0.0; });
    bad([](PhantomConfig& c) { c.side_scale = 0.01; });
}

}  // TEST_SUITE
