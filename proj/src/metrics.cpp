#include "rfkk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rfkk/mlmodel.hpp"

namespace rfkk::metrics {

RssResult rss(const ComplexRowMatrix& pred, const RowMatrix& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw InvalidInput("rss: prediction and truth shapes differ");
    RssResult r;
    r.per_pixel = (pred.imag() - truth).rowwise().squaredNorm();
    r.mean = r.per_pixel.size() ? r.per_pixel.mean() : 0.0;
    return r;
}

RssResult rss(const ComplexCube& pred, const simulate::GroundTruth& truth) {
    if (truth.im_chi_ratio.size() == 0) throw InvalidInput("rss: ground truth has no Im{chi/chi_nr} matrix");
    return rss(pred.data, truth.im_chi_ratio);
}

double null_rss(const RowMatrix& truth) {
    return truth.rows() ? truth.rowwise().squaredNorm().mean() : 0.0;
}

StepStat summarize(const std::vector<double>& samples) {
    StepStat s;
    if (samples.empty()) return s;
    double sum = 0.0;
    for (double v : samples) sum += v;
    s.mean = sum / static_cast<double>(samples.size());
    if (samples.size() > 1) {
        double ss = 0.0;
        for (double v : samples) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(samples.size() - 1));
    }
    return s;
}

namespace {

using Samples = std::map<std::string, std::vector<double>>;

void record(Samples& samples, const StepTimes& times) {
    for (const auto& [step, sec] : times.steps()) samples[step].push_back(sec);
    samples["total"].push_back(times.total());
}

StepTimes run_conventional(const SpectralCube& cube, const ReferenceSpectrum& ref, const BenchConfig& cfg,
                           bool& estimated) {
    conventional::Options opts = cfg.conventional;
    opts.workers = cfg.workers;
    const std::size_t m = cube.pixels();
    estimated = m > cfg.conventional_full_limit;
    if (!estimated) return conventional::process(cube, ref, opts).times;

    // Large cubes: denoise in full, run the per-spectrum chain on one portion
    // and scale its time to the whole cube.
    StepTimes times;
    Stopwatch clock;
    const numerics::Factorization fact = conventional::denoise_basis(cube.data, opts.rank_override);
    const std::size_t portion = std::min(cfg.portion_spectra, m);
    const RowMatrix denoised = fact.U.topRows(static_cast<Eigen::Index>(portion)) * fact.s.asDiagonal() *
                               fact.V.transpose();
    times.add("svd", clock.seconds());

    StepTimes part;
    ComplexRowMatrix out(denoised.rows(), denoised.cols());
    std::size_t fallbacks = 0;
    correct_rows(denoised, 0, portion, ref, opts, out, part, fallbacks);
    const double scale = static_cast<double>(m) / static_cast<double>(portion);
    for (const auto& [step, sec] : part.steps()) times.add(step, sec * scale);
    return times;
}

}  // namespace

std::vector<BenchReport> run_benchmark(const BenchConfig& config) {
    if (config.repeats < 1) throw InvalidParameter("bench: repeats must be at least 1");
    if (config.side_scales.empty()) throw InvalidParameter("bench: no sizes requested");
    if (config.portion_spectra == 0) throw InvalidParameter("bench: portion_spectra must be positive");

    std::vector<BenchReport> reports;
    bool warmed = !config.warmup;
    for (double scale : config.side_scales) {
        simulate::PhantomConfig pc = config.phantom;
        pc.side_scale = scale;
        simulate::Phantom ph = simulate::generate_phantom(pc, false);
        const Rect train_rect = ph.cube.masks.at("training");
        const SpectralCube train_cube = crop(ph.cube, train_rect);

        factorized::Options fopts = config.fkkec;
        fopts.workers = config.workers;
        mlmodel::TrainOptions topts;
        topts.fkkec = fopts;
        topts.seed = pc.rng_seed;

        Samples conv, fk, ml_with, ml_without;
        bool estimated = false;
        std::size_t rank = 0;
        const std::size_t runs = config.repeats + (warmed ? 0 : 1);
        for (std::size_t run = 0; run < runs; ++run) {
            const bool keep = warmed || run > 0;
            const StepTimes tc = run_conventional(ph.cube, ph.reference, config, estimated);

            StepTimes tf;
            {
                const factorized::Result fr = factorized::process(ph.cube, ph.reference, fopts);
                rank = fr.fact.rank();
                tf = fr.times;
            }

            StepTimes apply_times;
            StepTimes with_train;
            {
                const mlmodel::TrainResult tr = mlmodel::train(train_cube, ph.reference, topts);
                with_train.add("train", tr.times.get("train"));
                mlmodel::apply(tr.model, ph.cube, {}, &apply_times);
            }
            with_train.merge(apply_times);

            if (keep) {
                record(conv, tc);
                record(fk, tf);
                record(ml_with, with_train);
                record(ml_without, apply_times);
            }
        }
        warmed = true;

        auto make = [&](const std::string& method, const Samples& samples) {
            BenchReport r;
            r.side_scale = scale;
            r.spectra = ph.cube.pixels();
            r.method = method;
            r.repeats = config.repeats;
            r.workers = config.workers;
            r.rank = rank;
            for (const auto& [step, v] : samples)
                if (step != "total") r.steps[step] = summarize(v);
            r.total = summarize(samples.at("total"));
            return r;
        };
        BenchReport rc = make("conventional", conv);
        rc.estimated = estimated;
        const double base = rc.total.mean;
        for (auto [name, samples] : {std::pair{"conventional", &conv}, std::pair{"fkkec", &fk},
                                     std::pair{"ml+train", &ml_with}, std::pair{"ml-train", &ml_without}}) {
            BenchReport r = std::string(name) == "conventional" ? rc : make(name, *samples);
            r.speedup = r.total.mean > 0.0 ? base / r.total.mean : 0.0;
            reports.push_back(std::move(r));
        }
    }
    return reports;
}

std::string to_csv(const std::vector<BenchReport>& reports) {
    std::ostringstream out;
    out.precision(9);
    out << "size,spectra,method,step,mean_s,std_s,workers\n";
    for (const auto& r : reports) {
        auto row = [&](const std::string& step, const StepStat& s) {
            out << r.side_scale << ',' << r.spectra << ',' << r.method << ',' << step << ',' << s.mean << ','
                << s.std << ',' << r.workers << '\n';
        };
        for (const auto& [step, s] : r.steps) row(step, s);
        row("total", r.total);
    }
    return out.str();
}

void write_csv(const std::filesystem::path& path, const std::vector<BenchReport>& reports) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("bench: cannot open " + path.string() + " for writing");
    out << to_csv(reports);
    if (!out) throw Error("bench: write failed for " + path.string());
}

std::string speedup_svg(const std::vector<BenchReport>& reports) {
    constexpr double W = 640, H = 420, L = 70, R = 150, T = 30, B = 60;
    std::map<std::string, std::vector<std::pair<double, double>>> lines;
    double xmin = 1e300, xmax = -1e300, ymax = 1.0;
    for (const auto& r : reports) {
        const double x = std::log10(static_cast<double>(std::max<std::size_t>(r.spectra, 1)));
        lines[r.method].emplace_back(x, r.speedup);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymax = std::max(ymax, r.speedup);
    }
    if (reports.empty()) xmin = 0, xmax = 1;
    if (xmax - xmin < 1e-9) xmin -= 0.5, xmax += 0.5;
    ymax *= 1.1;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - y / ymax * (H - T - B); };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ostringstream s;
    s.precision(6);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15
      << "\" text-anchor=\"middle\" font-size=\"13\">spectra (log scale)</text>\n"
      << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << (T + H - B) / 2 << ")\">speedup vs conventional</text>\n";
    std::set<double> xs;
    for (const auto& r : reports) xs.insert(static_cast<double>(r.spectra));
    for (double x : xs)
        s << "<text x=\"" << px(std::log10(x)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
          << static_cast<std::size_t>(x) << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = ymax * i / 4.0;
        s << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << y
          << "</text>\n";
    }
    int c = 0;
    for (const auto& [method, pts] : lines) {
        const char* color = colors[c % 5];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : pts) s << px(x) << ',' << py(y) << ' ';
        s << "\"/>\n";
        for (const auto& [x, y] : pts)
            s << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        s << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 18 * (c + 1) << "\" font-size=\"12\" fill=\"" << color
          << "\">" << method << "</text>\n";
        ++c;
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace rfkk::metrics
