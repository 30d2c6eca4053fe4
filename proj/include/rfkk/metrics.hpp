#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rfkk/conventional.hpp"
#include "rfkk/factorized.hpp"
#include "rfkk/simulate.hpp"
#include "rfkk/timing.hpp"
#include "rfkk/types.hpp"

namespace rfkk::metrics {

struct RssResult {
    Vector per_pixel;
    double mean = 0.0;
};

/// Per-pixel sum over omega of (Im{K_CARS} - truth)^2 and its mean.
RssResult rss(const ComplexRowMatrix& pred, const RowMatrix& truth);
RssResult rss(const ComplexCube& pred, const simulate::GroundTruth& truth);

/// Mean over pixels of sum over omega truth^2: the RSS of the zero predictor.
double null_rss(const RowMatrix& truth);

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

struct StepStat {
    double mean = 0.0;
    double std = 0.0;
};

/// Timing of one method at one phantom size over the measured repeats.
struct BenchReport {
    double side_scale = 1.0;
    std::size_t spectra = 0;
    std::string method;  // conventional | fkkec | ml+train | ml-train
    std::size_t repeats = 0;
    unsigned workers = 1;
    std::map<std::string, StepStat> steps;
    StepStat total;
    double speedup = 1.0;  // conventional total / this total
    bool estimated = false;  // per-spectrum steps timed on portions and scaled
    std::size_t rank = 0;
};

struct BenchConfig {
    std::vector<double> side_scales{0.5, 1.0, 2.0};
    std::size_t repeats = 3;
    bool warmup = true;
    simulate::PhantomConfig phantom;
    conventional::Options conventional;
    factorized::Options fkkec;
    /// Above this many spectra the conventional per-spectrum steps run on
    /// portions of `portion_spectra` and are scaled up.
    std::size_t conventional_full_limit = 400000;
    std::size_t portion_spectra = 10000;
    unsigned workers = 1;
};

std::vector<BenchReport> run_benchmark(const BenchConfig& config);

/// CSV rows: size, spectra, method, step, mean_s, std_s, workers.
void write_csv(const std::filesystem::path& path, const std::vector<BenchReport>& reports);
std::string to_csv(const std::vector<BenchReport>& reports);

/// Line plot of speedup versus spectra count, one line per method.
std::string speedup_svg(const std::vector<BenchReport>& reports);

StepStat summarize(const std::vector<double>& samples);

}  // namespace rfkk::metrics
