// rfkk command-line driver: simulate, process, train, apply, bench, metrics, bandimage.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flags, missing
// files, invalid parameters).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rfkk/bandimage.hpp"
#include "rfkk/conventional.hpp"
#include "rfkk/cubeio.hpp"
#include "rfkk/factorized.hpp"
#include "rfkk/metrics.hpp"
#include "rfkk/mlmodel.hpp"
#include "rfkk/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rfkk;

namespace {

// JSON config files: top-level keys are global options, nested objects are
// subcommand sections. Flags given on the command line win.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        return dump(app, default_also).dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            input >> j;
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config: top level must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        collect(j, {}, items);
        return items;
    }

private:
    static json dump(const CLI::App* app, bool default_also) {
        json j = json::object();
        for (const CLI::Option* opt : app->get_options()) {
            if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
            const std::string name = opt->get_lnames()[0];
            if (name == "help" || name == "config") continue;
            if (opt->get_type_size() == 0) {
                if (opt->count() > 0 || default_also) j[name] = opt->count() > 0;
            } else if (opt->count() == 1) {
                j[name] = opt->results().front();
            } else if (opt->count() > 1) {
                j[name] = opt->results();
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = opt->get_default_str();
            }
        }
        for (const CLI::App* sub : app->get_subcommands()) j[sub->get_name()] = dump(sub, default_also);
        return j;
    }

    static void collect(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it->is_object()) {
                auto next = parents;
                next.push_back(it.key());
                collect(*it, next, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = it.key();
            auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
            if (it->is_array()) {
                for (const auto& v : *it) item.inputs.push_back(text(v));
            } else if (!it->is_null()) {
                item.inputs.push_back(text(*it));
            }
            out.push_back(std::move(item));
        }
    }
};

enum class Level { quiet, info, debug };
Level g_level = Level::info;

void log_info(const std::string& msg) {
    if (g_level != Level::quiet) std::cerr << msg << '\n';
}
void log_debug(const std::string& msg) {
    if (g_level == Level::debug) std::cerr << msg << '\n';
}

struct Globals {
    unsigned workers = 1;
    std::string log_level = "info";
    std::string out_dir;
    std::uint64_t seed = 2020;
};

// Relative output paths land in --out-dir when it is given.
fs::path output_path(const Globals& g, const std::string& p) {
    fs::path path(p);
    if (!g.out_dir.empty() && path.is_relative()) path = fs::path(g.out_dir) / path;
    return path;
}

void require_writable_parent(const fs::path& path) {
    const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
    if (!fs::is_directory(parent))
        throw CLI::ValidationError("output", "directory does not exist: " + parent.string());
}

json times_json(const StepTimes& t) {
    json j = json::object();
    for (const auto& [step, s] : t.steps()) j[step] = s;
    return j;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

std::string fmt_seconds(double s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f s", s);
    return buf;
}

// Options shared by the processing commands.
struct PipelineFlags {
    std::optional<std::size_t> rank;
    double als_smoothness = numerics::AlsParams{}.smoothness;
    double als_asymmetry = numerics::AlsParams{}.asymmetry;
    int als_iterations = numerics::AlsParams{}.max_iterations;
    int trend_window = 0;
    int trend_order = 2;
    double noise_alpha = 0.0;
    double noise_sigma = 0.0;
    std::size_t extras = 0;
    std::optional<double> lambda;

    void add_common(CLI::App* app) {
        app->add_option("--rank", rank, "Retained singular vectors (default: rank cutoff rule)");
        app->add_option("--als-smoothness", als_smoothness, "ALS second-difference penalty");
        app->add_option("--als-asymmetry", als_asymmetry, "ALS asymmetry weight")->check(CLI::Range(0.0, 1.0));
        app->add_option("--als-iterations", als_iterations, "ALS reweighting passes")->check(CLI::PositiveNumber);
        app->add_option("--trend-window", trend_window, "Trendline window, 0 = default");
        app->add_option("--trend-order", trend_order, "Trendline polynomial order");
    }
    void add_factorized(CLI::App* app) {
        app->add_option("--noise-alpha", noise_alpha, "Poisson multiplier for f(omega)")->check(CLI::NonNegativeNumber);
        app->add_option("--noise-sigma", noise_sigma, "Gaussian sigma for f(omega)")->check(CLI::NonNegativeNumber);
        app->add_option("--extras", extras, "Extra subsampled rows per U column");
        app->add_option("--lambda", lambda, "fPEC ridge weight (default 1e-6 s_max^2)")->check(CLI::NonNegativeNumber);
    }

    numerics::AlsParams als() const {
        numerics::AlsParams p;
        p.smoothness = als_smoothness;
        p.asymmetry = als_asymmetry;
        p.max_iterations = als_iterations;
        return p;
    }
    conventional::Options conventional(unsigned workers) const {
        conventional::Options o;
        o.als = als();
        o.trend = {trend_window, trend_order};
        o.rank_override = rank;
        o.workers = workers;
        return o;
    }
    factorized::Options factorized(unsigned workers) const {
        factorized::Options o;
        o.als = als();
        o.trend = {trend_window, trend_order};
        o.rank_override = rank;
        o.noise = {noise_alpha, noise_sigma};
        o.extras_per_column = extras;
        o.lambda = lambda;
        o.workers = workers;
        return o;
    }
};

cubeio::CubeHeader complex_header_like(const cubeio::CubeHeader& in) {
    cubeio::CubeHeader h = in;
    h.dtype = cubeio::DType::complex128;
    return h;
}

cubeio::CubeHeader header_of(const SpectralCube& cube, cubeio::DType dtype) {
    cubeio::CubeHeader h;
    h.dtype = dtype;
    h.rows = cube.rows;
    h.cols = cube.cols;
    h.n_freq = cube.channels();
    h.axis = cube.axis;
    h.masks = cube.masks;
    return h;
}

// ---------------------------------------------------------------------------

struct SimulateFlags {
    double side_scale = 1.0;
    std::size_t base_rows = 74, base_cols = 246;
    std::string nrb = "polynomial";
    std::string reference = "linear";
    int chemicals = 3;
    std::size_t n_freq = 810;
    double freq_start = -500.0, freq_end = 2500.0;
    std::vector<int> peak_counts;
    double noise_alpha = 0.0, noise_sigma = 0.0;
    bool no_truth = false;
    std::string cube = "cube.rfcb", ref = "reference.csv", truth = "truth.rfcb", echo = "config.json";
};

int cmd_simulate(const SimulateFlags& f, const Globals& g, const json& echo) {
    simulate::PhantomConfig pc;
    pc.side_scale = f.side_scale;
    pc.base_rows = f.base_rows;
    pc.base_cols = f.base_cols;
    pc.rng_seed = g.seed;
    pc.n_chemicals = f.chemicals;
    pc.n_freq = f.n_freq;
    pc.freq_start = f.freq_start;
    pc.freq_end = f.freq_end;
    pc.peak_counts = f.peak_counts;
    pc.nrb_mode = f.nrb == "constant" ? simulate::NrbMode::constant : simulate::NrbMode::polynomial;
    pc.ref_mode = f.reference == "constant" ? simulate::ReferenceMode::constant
                                            : simulate::ReferenceMode::linear_polynomial;
    pc.validate();

    const fs::path cube_path = output_path(g, f.cube), ref_path = output_path(g, f.ref),
                   truth_path = output_path(g, f.truth), echo_path = output_path(g, f.echo);
    for (const auto& p : {cube_path, ref_path, truth_path, echo_path}) require_writable_parent(p);

    Stopwatch clock;
    simulate::Phantom ph = simulate::generate_phantom(pc, !f.no_truth);
    if (f.noise_alpha > 0.0 || f.noise_sigma > 0.0)
        ph.cube = simulate::add_noise(ph.cube, f.noise_alpha, f.noise_sigma, g.seed + 1);
    log_info("simulate: " + std::to_string(ph.cube.rows) + " x " + std::to_string(ph.cube.cols) + " x " +
             std::to_string(ph.cube.channels()) + " in " + fmt_seconds(clock.seconds()));

    cubeio::write_cube(cube_path, ph.cube);
    cubeio::write_reference_csv(ref_path, ph.reference);
    if (!f.no_truth) {
        SpectralCube truth;
        truth.rows = ph.cube.rows;
        truth.cols = ph.cube.cols;
        truth.axis = ph.cube.axis;
        truth.masks = ph.cube.masks;
        truth.data = std::move(ph.truth.im_chi_ratio);
        cubeio::write_cube(truth_path, truth);
    }
    write_json(echo_path, echo);
    return 0;
}

// ---------------------------------------------------------------------------

struct ProcessFlags {
    std::string mode = "fkkec";
    std::string in, ref, out, report;
    std::size_t chunk_rows = 0;
    PipelineFlags pipe;
};

int cmd_process(const ProcessFlags& f, const Globals& g, const json& echo) {
    const fs::path out_path = output_path(g, f.out);
    require_writable_parent(out_path);
    if (!f.report.empty()) require_writable_parent(output_path(g, f.report));

    const SpectralCube cube = cubeio::read_cube(f.in);
    const ReferenceSpectrum ref = cubeio::read_reference_csv(f.ref);
    require_matching_reference(cube, ref);

    json report;
    report["command"] = "process";
    report["mode"] = f.mode;
    report["spectra"] = cube.pixels();
    report["channels"] = cube.channels();
    report["workers"] = g.workers;

    StepTimes times;
    if (f.mode == "conventional") {
        const conventional::Result r = conventional::process(cube, ref, f.pipe.conventional(g.workers));
        times = r.times;
        report["rank"] = r.rank;
        report["sec_fallbacks"] = r.sec_fallbacks;
        cubeio::write_cube(out_path, r.k_cars);
    } else {
        const factorized::Options opts = f.pipe.factorized(g.workers);
        factorized::Result r = factorized::fit(cube, ref, opts);
        times = r.times;
        report["rank"] = r.fact.rank();
        report["subsampled_rows"] = r.basis.q.size();
        report["fpec_lambda"] = r.basis.ridge_lambda;

        // Reconstruction is streamed to disk in row blocks.
        const std::size_t m = cube.pixels();
        const std::size_t step = f.chunk_rows ? f.chunk_rows : std::max<std::size_t>(m, 1);
        cubeio::CubeWriter writer(out_path, header_of(cube, cubeio::DType::complex128));
        double t_rec = 0.0;
        for (std::size_t first = 0; first < m; first += step) {
            const std::size_t last = std::min(m, first + step);
            Stopwatch clock;
            const ComplexRowMatrix block =
                factorized::reconstruct(r.fact, r.basis, r.f, std::pair{first, last}, g.workers);
            t_rec += clock.seconds();
            writer.write_complex(block);
        }
        writer.close();
        times.add("reconstruct", t_rec);
    }
    report["times"] = times_json(times);
    report["total_s"] = times.total();
    report["config"] = echo;
    log_info("process (" + f.mode + "): " + std::to_string(cube.pixels()) + " spectra in " +
             fmt_seconds(times.total()));
    for (const auto& [step, s] : times.steps()) log_debug("  " + step + ": " + fmt_seconds(s));
    if (!f.report.empty()) write_json(output_path(g, f.report), report);
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
    std::string in, ref, model, out, report, mask;
    std::optional<double> ridge;
    PipelineFlags pipe;
};

int cmd_train(const TrainFlags& f, const Globals& g, const json& echo) {
    const fs::path model_path = output_path(g, f.model);
    require_writable_parent(model_path);
    if (!f.out.empty()) require_writable_parent(output_path(g, f.out));
    if (!f.report.empty()) require_writable_parent(output_path(g, f.report));

    SpectralCube cube = cubeio::read_cube(f.in);
    const ReferenceSpectrum ref = cubeio::read_reference_csv(f.ref);
    if (!f.mask.empty()) {
        const auto it = cube.masks.find(f.mask);
        if (it == cube.masks.end()) throw CLI::ValidationError("--mask", "cube has no mask named '" + f.mask + "'");
        cube = crop(cube, it->second);
    }

    mlmodel::TrainOptions opts;
    opts.fkkec = f.pipe.factorized(g.workers);
    opts.regress_lambda = f.ridge;
    opts.seed = g.seed;
    const mlmodel::TrainResult r = mlmodel::train(cube, ref, opts);
    mlmodel::save_file(model_path, r.model);
    if (!f.out.empty()) cubeio::write_cube(output_path(g, f.out), r.training_output);

    log_info("train: rank " + std::to_string(r.model.rank()) + " from " + std::to_string(cube.pixels()) +
             " spectra in " + fmt_seconds(r.times.get("train")));
    if (!f.report.empty()) {
        json report;
        report["command"] = "train";
        report["spectra"] = cube.pixels();
        report["rank"] = r.model.rank();
        report["fpec_lambda"] = r.model.meta.fpec_lambda;
        report["regress_lambda"] = r.model.meta.regress_lambda;
        report["times"] = times_json(r.times);
        report["config"] = echo;
        write_json(output_path(g, f.report), report);
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct ApplyFlags {
    std::string model, in, out, report, diagnose;
    std::size_t chunk_rows = 4096;
    std::optional<double> flag_threshold;
};

int cmd_apply(const ApplyFlags& f, const Globals& g, const json& echo) {
    const fs::path out_path = output_path(g, f.out);
    require_writable_parent(out_path);
    if (!f.report.empty()) require_writable_parent(output_path(g, f.report));
    if (!f.diagnose.empty()) require_writable_parent(output_path(g, f.diagnose));
    if (f.chunk_rows == 0) throw CLI::ValidationError("--chunk-rows", "must be positive");

    const mlmodel::CorrectionModel model = mlmodel::load_file(f.model);
    cubeio::CubeReader reader(f.in);
    const cubeio::CubeHeader& h = reader.header();
    const mlmodel::Applier applier(model);
    applier.check_axis(h.axis);

    cubeio::CubeWriter writer(out_path, complex_header_like(h));
    StepTimes times;
    Vector residual(static_cast<Eigen::Index>(f.diagnose.empty() ? 0 : h.pixels()));
    ComplexRowMatrix block;
    for (std::uint64_t first = 0; first < h.pixels(); first += f.chunk_rows) {
        const std::uint64_t count = std::min<std::uint64_t>(f.chunk_rows, h.pixels() - first);
        const RowMatrix raw = reader.read_real(first, count);
        applier.apply_rows(raw, block, &times);
        writer.write_complex(block);
        if (!f.diagnose.empty())
            residual.segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)) =
                applier.residual_rows(raw);
    }
    writer.close();
    log_info("apply: " + std::to_string(h.pixels()) + " spectra in " + fmt_seconds(times.total()));

    json report;
    report["command"] = "apply";
    report["spectra"] = h.pixels();
    report["rank"] = model.rank();
    report["times"] = times_json(times);
    report["total_s"] = times.total();
    if (!f.diagnose.empty()) {
        std::ofstream out(output_path(g, f.diagnose), std::ios::trunc);
        if (!out) throw Error("cannot open " + f.diagnose + " for writing");
        out.precision(17);
        out << "pixel,row,col,residual\n";
        for (Eigen::Index p = 0; p < residual.size(); ++p) {
            const auto pp = static_cast<std::uint64_t>(p);
            out << p << ',' << pp / h.cols << ',' << pp % h.cols << ',' << residual[p] << '\n';
        }
        std::vector<double> sorted(residual.data(), residual.data() + residual.size());
        std::sort(sorted.begin(), sorted.end());
        json d;
        d["median"] = sorted.empty() ? 0.0 : sorted[sorted.size() / 2];
        d["max"] = sorted.empty() ? 0.0 : sorted.back();
        if (f.flag_threshold) {
            d["threshold"] = *f.flag_threshold;
            d["flagged"] = std::count_if(sorted.begin(), sorted.end(), [&](double v) { return v > *f.flag_threshold; });
        }
        report["residual"] = d;
    }
    report["config"] = echo;
    if (!f.report.empty()) write_json(output_path(g, f.report), report);
    return 0;
}

// ---------------------------------------------------------------------------

struct BenchFlags {
    std::vector<double> sizes{0.5, 1.0, 2.0};
    std::size_t repeats = 3;
    bool no_warmup = false;
    std::size_t full_limit = 400000;
    std::size_t portion = 10000;
    std::size_t base_rows = 74, base_cols = 246, n_freq = 810;
    std::string csv = "bench.csv", svg = "bench.svg", json_out;
    PipelineFlags pipe;
};

int cmd_bench(const BenchFlags& f, const Globals& g, const json& echo) {
    const fs::path csv_path = output_path(g, f.csv), svg_path = output_path(g, f.svg);
    require_writable_parent(csv_path);
    require_writable_parent(svg_path);
    if (!f.json_out.empty()) require_writable_parent(output_path(g, f.json_out));

    metrics::BenchConfig cfg;
    cfg.side_scales = f.sizes;
    cfg.repeats = f.repeats;
    cfg.warmup = !f.no_warmup;
    cfg.phantom.rng_seed = g.seed;
    cfg.phantom.base_rows = f.base_rows;
    cfg.phantom.base_cols = f.base_cols;
    cfg.phantom.n_freq = f.n_freq;
    cfg.conventional = f.pipe.conventional(g.workers);
    cfg.fkkec = f.pipe.factorized(g.workers);
    cfg.conventional_full_limit = f.full_limit;
    cfg.portion_spectra = f.portion;
    cfg.workers = g.workers;
    const auto reports = metrics::run_benchmark(cfg);

    metrics::write_csv(csv_path, reports);
    {
        std::ofstream out(svg_path, std::ios::trunc);
        if (!out) throw Error("cannot open " + svg_path.string() + " for writing");
        out << metrics::speedup_svg(reports);
    }
    json j = json::array();
    for (const auto& r : reports) {
        json e;
        e["size"] = r.side_scale;
        e["spectra"] = r.spectra;
        e["method"] = r.method;
        e["repeats"] = r.repeats;
        e["workers"] = r.workers;
        e["rank"] = r.rank;
        e["estimated"] = r.estimated;
        e["speedup"] = r.speedup;
        e["total"] = {{"mean_s", r.total.mean}, {"std_s", r.total.std}};
        for (const auto& [step, s] : r.steps) e["steps"][step] = {{"mean_s", s.mean}, {"std_s", s.std}};
        j.push_back(e);
        log_info(r.method + " @ " + std::to_string(r.spectra) + ": " + fmt_seconds(r.total.mean) + ", speedup " +
                 std::to_string(r.speedup) + (r.estimated ? " (estimated)" : ""));
    }
    if (!f.json_out.empty()) write_json(output_path(g, f.json_out), {{"reports", j}, {"config", echo}});
    return 0;
}

// ---------------------------------------------------------------------------

struct MetricsFlags {
    std::string pred, truth, mask, per_pixel;
};

int cmd_metrics(const MetricsFlags& f, const Globals& g) {
    if (!f.per_pixel.empty()) require_writable_parent(output_path(g, f.per_pixel));
    const ComplexCube pred = cubeio::read_complex_cube(f.pred);
    const SpectralCube truth = cubeio::read_cube(f.truth);
    if (pred.rows != truth.rows || pred.cols != truth.cols || pred.axis != truth.axis)
        throw InvalidInput("metrics: prediction and truth cubes differ in shape or axis");

    ComplexRowMatrix p = pred.data;
    RowMatrix t = truth.data;
    if (!f.mask.empty()) {
        const auto it = truth.masks.find(f.mask);
        if (it == truth.masks.end()) throw CLI::ValidationError("--mask", "cube has no mask named '" + f.mask + "'");
        const Rect& rect = it->second;
        p.resize(static_cast<Eigen::Index>(rect.area()), pred.data.cols());
        t.resize(static_cast<Eigen::Index>(rect.area()), truth.data.cols());
        Eigen::Index d = 0;
        for (std::size_t r = rect.row0; r < rect.row1; ++r)
            for (std::size_t c = rect.col0; c < rect.col1; ++c, ++d) {
                const auto src = static_cast<Eigen::Index>(r * truth.cols + c);
                p.row(d) = pred.data.row(src);
                t.row(d) = truth.data.row(src);
            }
    }
    const metrics::RssResult r = metrics::rss(p, t);
    const double null = metrics::null_rss(t);
    json j{{"mean_rss", r.mean}, {"null_rss", null}, {"relative", null > 0.0 ? r.mean / null : 0.0},
           {"pixels", r.per_pixel.size()}};
    std::cout << j.dump(2) << '\n';
    if (!f.per_pixel.empty()) {
        std::ofstream out(output_path(g, f.per_pixel), std::ios::trunc);
        if (!out) throw Error("cannot open " + f.per_pixel + " for writing");
        out.precision(17);
        out << "pixel,rss\n";
        for (Eigen::Index i = 0; i < r.per_pixel.size(); ++i) out << i << ',' << r.per_pixel[i] << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct BandFlags {
    std::string in, bands, out;
};

int cmd_bandimage(const BandFlags& f, const Globals& g) {
    const fs::path out_path = output_path(g, f.out);
    require_writable_parent(out_path);
    const bandimage::BandSpec spec = bandimage::read_band_spec(f.bands);
    const ComplexCube cube = cubeio::read_complex_cube(f.in);
    bandimage::write_ppm(out_path, bandimage::render(cube, spec));
    log_info("bandimage: " + std::to_string(cube.rows) + " x " + std::to_string(cube.cols) + " -> " +
             out_path.string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Factorized Kramers-Kronig phase retrieval for CARS hyperspectral cubes"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file; command-line flags take precedence");
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.fallthrough();

    Globals g;
    app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--log-level", g.log_level, "quiet | info | debug")
        ->check(CLI::IsMember({"quiet", "info", "debug"}));
    app.add_option("--out-dir", g.out_dir, "Directory for relative output paths")->check(CLI::ExistingDirectory);
    app.add_option("--seed", g.seed, "RNG seed");

    SimulateFlags sim;
    auto* s = app.add_subcommand("simulate", "Generate a phantom cube, reference and ground truth");
    s->add_option("--side-scale", sim.side_scale, "Scale both image sides")->check(CLI::PositiveNumber);
    s->add_option("--base-rows", sim.base_rows, "Image rows before scaling")->check(CLI::PositiveNumber);
    s->add_option("--base-cols", sim.base_cols, "Image columns before scaling")->check(CLI::PositiveNumber);
    s->add_option("--nrb", sim.nrb, "polynomial | constant")->check(CLI::IsMember({"polynomial", "constant"}));
    s->add_option("--reference", sim.reference, "linear | constant")->check(CLI::IsMember({"linear", "constant"}));
    s->add_option("--chemicals", sim.chemicals, "Number of chemical species")->check(CLI::PositiveNumber);
    s->add_option("--n-freq", sim.n_freq, "Frequency samples")->check(CLI::PositiveNumber);
    s->add_option("--freq-start", sim.freq_start, "First wavenumber, cm^-1");
    s->add_option("--freq-end", sim.freq_end, "Last wavenumber, cm^-1");
    s->add_option("--peak-counts", sim.peak_counts, "Fixed peak count per chemical")->delimiter(',');
    s->add_option("--noise-alpha", sim.noise_alpha, "Poisson multiplier")->check(CLI::NonNegativeNumber);
    s->add_option("--noise-sigma", sim.noise_sigma, "Gaussian sigma")->check(CLI::NonNegativeNumber);
    s->add_flag("--no-truth", sim.no_truth, "Skip the ground-truth cube");
    s->add_option("--cube", sim.cube, "Output cube");
    s->add_option("--ref-out", sim.ref, "Output reference CSV");
    s->add_option("--truth", sim.truth, "Output ground-truth cube (Im{chi/chi_nr})");
    s->add_option("--echo", sim.echo, "Output config echo JSON");

    ProcessFlags proc;
    auto* p = app.add_subcommand("process", "Retrieve K_CARS from a raw cube");
    p->add_option("--mode", proc.mode, "conventional | fkkec")->check(CLI::IsMember({"conventional", "fkkec"}));
    p->add_option("--in", proc.in, "Raw cube")->required()->check(CLI::ExistingFile);
    p->add_option("--ref", proc.ref, "Reference CSV")->required()->check(CLI::ExistingFile);
    p->add_option("--out", proc.out, "Output complex cube")->required();
    p->add_option("--report", proc.report, "Timing report JSON");
    p->add_option("--chunk-rows", proc.chunk_rows, "Stream reconstruction in blocks of this many pixels");
    proc.pipe.add_common(p);
    proc.pipe.add_factorized(p);

    TrainFlags tr;
    auto* t = app.add_subcommand("train", "Fit a reusable correction model");
    t->add_option("--in", tr.in, "Training cube")->required()->check(CLI::ExistingFile);
    t->add_option("--ref", tr.ref, "Reference CSV")->required()->check(CLI::ExistingFile);
    t->add_option("--model", tr.model, "Output model file")->required();
    t->add_option("--out", tr.out, "Training reconstruction cube");
    t->add_option("--mask", tr.mask, "Train on this named sub-rectangle of the cube");
    t->add_option("--ridge", tr.ridge, "Regression lambda for apply (default: fPEC lambda)")
        ->check(CLI::NonNegativeNumber);
    t->add_option("--report", tr.report, "Report JSON");
    tr.pipe.add_common(t);
    tr.pipe.add_factorized(t);

    ApplyFlags ap;
    auto* a = app.add_subcommand("apply", "Stream a raw cube through a trained model");
    a->add_option("--model", ap.model, "Model file")->required()->check(CLI::ExistingFile);
    a->add_option("--in", ap.in, "Raw cube")->required()->check(CLI::ExistingFile);
    a->add_option("--out", ap.out, "Output complex cube")->required();
    a->add_option("--chunk-rows", ap.chunk_rows, "Pixels per streamed block");
    a->add_option("--diagnose", ap.diagnose, "Per-pixel residual CSV");
    a->add_option("--flag-threshold", ap.flag_threshold, "Count pixels whose residual exceeds this");
    a->add_option("--report", ap.report, "Report JSON");

    BenchFlags be;
    auto* b = app.add_subcommand("bench", "Scaling benchmark on generated phantoms");
    b->add_option("--sizes", be.sizes, "Side scales")->delimiter(',')->check(CLI::PositiveNumber);
    b->add_option("--repeats", be.repeats, "Measured repeats per size")->check(CLI::PositiveNumber);
    b->add_flag("--no-warmup", be.no_warmup, "Skip the discarded warm-up run");
    b->add_option("--full-limit", be.full_limit, "Largest cube timed in full by the conventional path");
    b->add_option("--portion", be.portion, "Portion size for estimated conventional timing")
        ->check(CLI::PositiveNumber);
    b->add_option("--base-rows", be.base_rows, "Phantom rows before scaling")->check(CLI::PositiveNumber);
    b->add_option("--base-cols", be.base_cols, "Phantom columns before scaling")->check(CLI::PositiveNumber);
    b->add_option("--n-freq", be.n_freq, "Phantom frequency samples")->check(CLI::PositiveNumber);
    b->add_option("--csv", be.csv, "CSV output");
    b->add_option("--svg", be.svg, "Speedup plot");
    b->add_option("--json", be.json_out, "Full report JSON");
    be.pipe.add_common(b);
    be.pipe.add_factorized(b);

    MetricsFlags me;
    auto* m = app.add_subcommand("metrics", "RSS of a retrieved cube against ground truth");
    m->add_option("--pred", me.pred, "Complex cube")->required()->check(CLI::ExistingFile);
    m->add_option("--truth", me.truth, "Ground-truth cube")->required()->check(CLI::ExistingFile);
    m->add_option("--mask", me.mask, "Restrict to a named rectangle");
    m->add_option("--per-pixel", me.per_pixel, "Per-pixel RSS CSV");

    BandFlags bf;
    auto* bi = app.add_subcommand("bandimage", "Band-math pseudocolour image");
    bi->add_option("--in", bf.in, "Complex cube")->required()->check(CLI::ExistingFile);
    bi->add_option("--bands", bf.bands, "Band spec JSON")->required()->check(CLI::ExistingFile);
    bi->add_option("--out", bf.out, "Output PPM")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    g_level = g.log_level == "quiet" ? Level::quiet : g.log_level == "debug" ? Level::debug : Level::info;

    try {
        const json echo = json::parse(app.config_to_str(true, false));
        if (*s) return cmd_simulate(sim, g, echo);
        if (*p) return cmd_process(proc, g, echo);
        if (*t) return cmd_train(tr, g, echo);
        if (*a) return cmd_apply(ap, g, echo);
        if (*b) return cmd_bench(be, g, echo);
        if (*m) return cmd_metrics(me, g);
        if (*bi) return cmd_bandimage(bf, g);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidParameter& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
