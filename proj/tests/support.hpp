#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "rfkk/simulate.hpp"
#include "rfkk/types.hpp"

namespace rfkk::testing {

inline RowMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double lo = -1.0,
                               double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    RowMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

inline Vector random_vector(Eigen::Index n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    return random_matrix(n, 1, seed, lo, hi).col(0);
}

// Small phantom that keeps unit tests quick: 12 x 20 pixels, 256 channels.
inline simulate::PhantomConfig small_phantom(std::uint64_t seed = 7) {
    simulate::PhantomConfig pc;
    pc.base_rows = 12;
    pc.base_cols = 20;
    pc.n_freq = 256;
    pc.rng_seed = seed;
    return pc;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("rfkk_test_" + name);
    std::filesystem::create_directories(dir);
    return dir;
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace rfkk::testing
