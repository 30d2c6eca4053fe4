// Regenerates the fixtures in tests/data. Run only when a format changes:
//   make_golden <tests/data>
#include <cstdio>
#include <filesystem>

#include "golden.hpp"
#include "rfkk/cubeio.hpp"
#include "rfkk/mlmodel.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: make_golden <dir>\n");
        return 2;
    }
    const std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir);
    rfkk::cubeio::write_cube(dir / "golden_real.rfcb", rfkk::testing::golden_cube());
    rfkk::cubeio::write_cube(dir / "golden_complex.rfcb", rfkk::testing::golden_complex_cube());
    rfkk::mlmodel::save_file(dir / "golden_model.rfmc", rfkk::testing::golden_model());
    rfkk::cubeio::write_reference_csv(dir / "golden_reference.csv", rfkk::testing::golden_reference());
    return 0;
}
