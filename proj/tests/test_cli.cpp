#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rfkk/cubeio.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace rfkk;

namespace {

const fs::path& dir() {
    static const fs::path d = rfkk::testing::scratch_dir("cli");
    return d;
}

int run(const std::string& args) {
    const std::string d = "\"" + dir().string() + "\"";
    const std::string cmd = "cd " + d + " && \"" + std::string(RFKK_CLI) + "\" --log-level quiet --out-dir " + d + " " +
                            args + " >" + d + "/stdout.txt 2>" + d + "/stderr.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path at(const std::string& name) { return dir() / name; }

// Small noisy phantom shared by the cases below.
void ensure_phantom() {
    static bool done = false;
    if (done) return;
    REQUIRE(run("simulate --base-rows 10 --base-cols 16 --n-freq 200 --noise-alpha 1e-4 --noise-sigma 1e-4") == 0);
    done = true;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate writes cube, reference, truth and echo") {
    ensure_phantom();
    const SpectralCube cube = cubeio::read_cube(at("cube.rfcb"));
    CHECK(cube.rows == 10);
    CHECK(cube.cols == 16);
    CHECK(cube.channels() == 200);
    CHECK(cubeio::read_reference_csv(at("reference.csv")).values.size() == 200);
    CHECK(cubeio::read_header(at("truth.rfcb")).pixels() == 160);
    const auto echo = nlohmann::json::parse(slurp(at("config.json")));
    CHECK(echo.at("simulate").at("base-rows").get<std::string>() == "10");
}

TEST_CASE("commands are deterministic") {
    REQUIRE(run("simulate --base-rows 6 --base-cols 8 --n-freq 64 --noise-alpha 1e-3 --cube d1.rfcb --ref-out d1.csv "
                "--truth dt1.rfcb --echo d1.json") == 0);
    REQUIRE(run("simulate --base-rows 6 --base-cols 8 --n-freq 64 --noise-alpha 1e-3 --cube d2.rfcb --ref-out d2.csv "
                "--truth dt2.rfcb --echo d2.json") == 0);
    CHECK(slurp(at("d1.rfcb")) == slurp(at("d2.rfcb")));
    CHECK(slurp(at("d1.csv")) == slurp(at("d2.csv")));
    REQUIRE(run("process --mode fkkec --in d1.rfcb --ref d1.csv --out k1.rfcb") == 0);
    REQUIRE(run("process --mode fkkec --in d1.rfcb --ref d1.csv --out k2.rfcb --chunk-rows 5") == 0);
    CHECK(slurp(at("k1.rfcb")) == slurp(at("k2.rfcb")));
}

TEST_CASE("usage errors exit 2") {
    ensure_phantom();
    CHECK(run("process --mode fkkec --in cube.rfcb --out k.rfcb") == 2);
    CHECK(run("process --mode sideways --in cube.rfcb --ref reference.csv --out k.rfcb") == 2);
    CHECK(run("process --in missing.rfcb --ref reference.csv --out k.rfcb") == 2);
    CHECK(run("simulate --side-scale -1") == 2);
    CHECK(run("nonsense") == 2);
    CHECK(run("") == 2);
    CHECK(run("--help") == 0);
}

TEST_CASE("process in both modes writes cube and report") {
    ensure_phantom();
    for (const std::string mode : {"conventional", "fkkec"}) {
        REQUIRE(run("process --mode " + mode + " --in cube.rfcb --ref reference.csv --out k_" + mode +
                    ".rfcb --report r_" + mode + ".json") == 0);
        CHECK(cubeio::read_header(at("k_" + mode + ".rfcb")).dtype == cubeio::DType::complex128);
        const auto report = nlohmann::json::parse(slurp(at("r_" + mode + ".json")));
        CHECK(report.contains("times"));
        CHECK(run("metrics --pred k_" + mode + ".rfcb --truth truth.rfcb --per-pixel rss_" + mode + ".csv") == 0);
    }
}

TEST_CASE("train then apply with no ridge reproduces the training output") {
    ensure_phantom();
    REQUIRE(run("train --in cube.rfcb --ref reference.csv --model m.rfmc --out train_k.rfcb --ridge 0") == 0);
    REQUIRE(run("apply --model m.rfmc --in cube.rfcb --out apply_k.rfcb --chunk-rows 7 --diagnose diag.csv "
                "--flag-threshold 0.5 --report apply.json") == 0);
    const ComplexCube a = cubeio::read_complex_cube(at("train_k.rfcb"));
    const ComplexCube b = cubeio::read_complex_cube(at("apply_k.rfcb"));
    REQUIRE(a.data.rows() == b.data.rows());
    CHECK(rfkk::testing::max_abs_diff(a.data, b.data) < 1e-8);

    std::istringstream diag(slurp(at("diag.csv")));
    std::string line;
    int lines = 0;
    while (std::getline(diag, line))
        if (!line.empty()) ++lines;
    CHECK(lines >= 160);
    const auto report = nlohmann::json::parse(slurp(at("apply.json")));
    CHECK(report.dump().find("flagged") != std::string::npos);
}

TEST_CASE("train on a named mask") {
    ensure_phantom();
    CHECK(run("train --in cube.rfcb --ref reference.csv --model mm.rfmc --mask training") == 0);
    CHECK(run("train --in cube.rfcb --ref reference.csv --model mm.rfmc --mask nowhere") != 0);
}

TEST_CASE("apply with a mismatched axis exits 1") {
    ensure_phantom();
    REQUIRE(run("train --in cube.rfcb --ref reference.csv --model m2.rfmc") == 0);
    REQUIRE(run("simulate --base-rows 4 --base-cols 4 --n-freq 201 --cube other.rfcb --ref-out other.csv --no-truth "
                "--echo other.json") == 0);
    CHECK(run("apply --model m2.rfmc --in other.rfcb --out x.rfcb") == 1);
    CHECK(slurp(at("stderr.txt")).find("error") != std::string::npos);
}

TEST_CASE("config file values apply and flags override them") {
    {
        std::ofstream cfg(at("cfg.json"));
        cfg << R"({"simulate": {"base-rows": 5, "base-cols": 7, "n-freq": 40, "cube": "cfg.rfcb", "ref-out": "cfg.csv",
                   "truth": "cfg_truth.rfcb", "echo": "cfg_echo.json"}})";
    }
    const std::string cfg = "--config \"" + at("cfg.json").string() + "\" ";
    REQUIRE(run(cfg + "simulate") == 0);
    CHECK(cubeio::read_header(at("cfg.rfcb")).rows == 5);
    CHECK(cubeio::read_header(at("cfg.rfcb")).n_freq == 40);
    REQUIRE(run(cfg + "simulate --base-rows 3") == 0);
    CHECK(cubeio::read_header(at("cfg.rfcb")).rows == 3);
    CHECK(cubeio::read_header(at("cfg.rfcb")).cols == 7);
}

TEST_CASE("bandimage writes a pixmap and rejects bands off the axis") {
    ensure_phantom();
    REQUIRE(run("process --mode fkkec --in cube.rfcb --ref reference.csv --out kb.rfcb") == 0);
    {
        std::ofstream spec(at("bands.json"));
        spec << R"({"bands": [{"name": "a", "peak": 1000, "baseline": [900, 1100], "color": "red"},
                              {"name": "b", "peak": 1500, "color": [0, 1, 0.5]}]})";
    }
    REQUIRE(run("bandimage --in kb.rfcb --bands \"" + at("bands.json").string() + "\" --out img.ppm") == 0);
    const std::string img = slurp(at("img.ppm"));
    CHECK(img.rfind("P6\n16 10\n255\n", 0) == 0);
    CHECK(img.size() == std::string("P6\n16 10\n255\n").size() + 160 * 3);
    // The tissue spec reaches 2837 cm^-1, beyond the phantom axis.
    CHECK(run("bandimage --in kb.rfcb --bands \"" + std::string(RFKK_SOURCE_DIR) +
              "/configs/bands_tissue.json\" --out bad.ppm") == 2);
}

TEST_CASE("bench emits csv and svg") {
    REQUIRE(run("bench --sizes 0.1 --repeats 1 --no-warmup --base-rows 20 --base-cols 40 --n-freq 64 --csv b.csv "
                "--svg b.svg --json b.json") == 0);
    CHECK(slurp(at("b.csv")).rfind("size,spectra,method,step,mean_s,std_s,workers", 0) == 0);
    CHECK(slurp(at("b.svg")).find("<svg") != std::string::npos);
}

}  // TEST_SUITE
