#include "rfkk/mlmodel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "rfkk/conventional.hpp"

namespace rfkk::mlmodel {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'R', 'F', 'M', 'C'};

factorized::CorrectionBasis basis_of(const CorrectionModel& m) {
    factorized::CorrectionBasis b;
    b.hilbert_v = m.hilbert_v;
    b.phi_pec = m.phi_pec;
    b.hilbert_phi_pec = m.hilbert_phi_pec;
    b.v_sec = m.v_sec;
    b.ridge_lambda = m.meta.fpec_lambda;
    return b;
}

template <typename Mat>
bool shape_is(const Mat& m, Eigen::Index rows, Eigen::Index cols) {
    return m.rows() == rows && m.cols() == cols;
}

// Little-endian byte helpers; the model file never depends on host order.
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::span<const std::uint8_t> take(std::size_t n) {
        if (n > bytes_.size() - pos_) throw FormatError("model: truncated file");
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint16_t u16() {
        auto b = take(2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint64_t u64() {
        auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

struct BlockRef {
    const char* name;
    Eigen::Index rows;
    Eigen::Index cols;
};

std::vector<BlockRef> block_layout(std::size_t n, std::size_t k) {
    const auto N = static_cast<Eigen::Index>(n);
    const auto K = static_cast<Eigen::Index>(k);
    // Declared order; the trailing two blocks extend the minimal set so that
    // apply needs no Hilbert transform and no separate reference file.
    return {{"axis", N, 1},      {"f", N, 1},           {"s", K, 1},       {"V", N, K},
            {"hilbert_v", K, N}, {"phi_pec", K, N},     {"v_sec", K, N},   {"P", N, K},
            {"hilbert_phi_pec", K, N}, {"reference", N, 1}};
}

template <typename Mat>
void put_block(std::vector<std::uint8_t>& out, const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

template <typename Mat>
void get_block(ByteReader& in, Mat& m, Eigen::Index rows, Eigen::Index cols) {
    m.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = in.f64();
}

json als_json(const numerics::AlsParams& p) {
    return {{"smoothness", p.smoothness},
            {"asymmetry", p.asymmetry},
            {"max_iterations", p.max_iterations},
            {"tolerance", p.tolerance}};
}

}  // namespace

void CorrectionModel::validate() const {
    const auto n = axis.size();
    const auto k = s.size();
    if (n < 4) throw FormatError("model: frequency axis too short");
    for (Eigen::Index i = 1; i < n; ++i)
        if (!(axis[i] > axis[i - 1])) throw FormatError("model: frequency axis not strictly increasing");
    if (!shape_is(reference, n, 1) || !shape_is(f, n, 1) || !shape_is(V, n, k) || !shape_is(hilbert_v, k, n) ||
        !shape_is(phi_pec, k, n) || !shape_is(hilbert_phi_pec, k, n) || !shape_is(v_sec, k, n) ||
        !shape_is(projector, n, k))
        throw FormatError("model: block shapes are inconsistent");
    if (!axis.allFinite() || !reference.allFinite() || !f.allFinite() || !s.allFinite() || !V.allFinite() ||
        !hilbert_v.allFinite() || !phi_pec.allFinite() || !hilbert_phi_pec.allFinite() || !v_sec.allFinite() ||
        !projector.allFinite())
        throw FormatError("model: non-finite entry");
    if ((f.array() <= 0.0).any()) throw FormatError("model: f must be positive");
    if ((reference.array() <= 0.0).any()) throw FormatError("model: reference must be positive");
}

Eigen::MatrixXd regression_projector(const Vector& s, const Eigen::MatrixXd& v, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidParameter("regression: lambda must be >= 0");
    if (v.cols() != s.size()) throw InvalidInput("regression: V and s ranks differ");
    // X^T (X X^T + lambda I)^-1 with X = S V^T collapses to V diag(s / (s^2 + lambda))
    // because V has orthonormal columns.
    Vector scale(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        const double d = s[i] * s[i] + lambda;
        if (!(d > 0.0)) throw NumericalError("regression: zero singular value with lambda = 0; increase lambda");
        scale[i] = s[i] / d;
    }
    return v * scale.asDiagonal();
}

TrainResult train(const SpectralCube& cube, const ReferenceSpectrum& ref, const TrainOptions& opts) {
    TrainResult out;
    Stopwatch clock;
    factorized::Result fit = factorized::fit(cube, ref, opts.fkkec);

    CorrectionModel& m = out.model;
    m.axis = cube.axis;
    m.reference = ref.values;
    m.f = fit.f;
    m.s = fit.fact.s;
    m.V = fit.fact.V;
    m.hilbert_v = fit.basis.hilbert_v;
    m.phi_pec = fit.basis.phi_pec;
    m.hilbert_phi_pec = fit.basis.hilbert_phi_pec;
    m.v_sec = fit.basis.v_sec;
    m.meta.seed = opts.seed;
    m.meta.training_rows = cube.rows;
    m.meta.training_cols = cube.cols;
    m.meta.fpec_lambda = fit.basis.ridge_lambda;
    m.meta.regress_lambda = opts.regress_lambda.value_or(fit.basis.ridge_lambda);
    m.meta.noise_alpha = opts.fkkec.noise.alpha;
    m.meta.noise_sigma_g = opts.fkkec.noise.sigma_g;
    m.meta.extras_per_column = opts.fkkec.extras_per_column;
    m.meta.als = opts.fkkec.als;
    m.meta.trend = opts.fkkec.trend;
    m.projector = regression_projector(m.s, m.V, m.meta.regress_lambda);
    out.times.add("train", clock.lap());

    out.training_output.rows = cube.rows;
    out.training_output.cols = cube.cols;
    out.training_output.axis = cube.axis;
    out.training_output.masks = cube.masks;
    out.training_output.data = factorized::reconstruct(fit.fact, fit.basis, fit.f, std::nullopt, opts.fkkec.workers);
    out.times.add("reconstruct", clock.lap());
    return out;
}

Applier::Applier(const CorrectionModel& model)
    : model_((model.validate(), model)),
      basis_(factorized::ReconstructionBasis::from(model.V, basis_of(model), model.f)),
      s_vt_(model.s.asDiagonal() * model.V.transpose()),
      f_dir_(model.f.transpose() / model.f.norm()) {
    // Drop the component along f before regressing, as training did; folded
    // into the projector so apply costs nothing extra.
    weights_projector_ = model.projector * model.s.asDiagonal();
    weights_projector_ -= f_dir_.transpose() * (f_dir_ * weights_projector_);
}

void Applier::check_axis(const Vector& axis) const {
    if (axis.size() != model_.axis.size() || axis != model_.axis)
        throw IncompatibleModel("apply: cube frequency axis does not match the model axis");
}

void Applier::apply_rows(const RowMatrix& intensities, ComplexRowMatrix& out, StepTimes* times) const {
    const auto n = static_cast<std::size_t>(model_.channels());
    const auto k = model_.rank();
    if (static_cast<std::size_t>(intensities.cols()) != n) throw IncompatibleModel("apply: channel count differs");
    out.resize(intensities.rows(), intensities.cols());

    Eigen::RowVectorXd a(static_cast<Eigen::Index>(n));
    Eigen::RowVectorXd w(static_cast<Eigen::Index>(k));
    std::vector<double> scratch;
    const std::span<const double> ref{model_.reference.data(), n};
    double t_regress = 0.0, t_reconstruct = 0.0;
    Stopwatch clock;
    for (Eigen::Index r = 0; r < intensities.rows(); ++r) {
        clock.lap();
        const Vector half = conventional::half_log_ratio({intensities.row(r).data(), n}, ref);
        a = (half.array() * model_.f.array()).transpose();
        w.noalias() = a * weights_projector_;
        t_regress += clock.lap();
        factorized::reconstruct_row({w.data(), k}, basis_, {out.row(r).data(), n}, scratch);
        t_reconstruct += clock.lap();
    }
    if (times) {
        times->add("regress", t_regress);
        times->add("reconstruct", t_reconstruct);
    }
}

Vector Applier::residual_rows(const RowMatrix& intensities) const {
    const auto n = static_cast<std::size_t>(model_.channels());
    if (static_cast<std::size_t>(intensities.cols()) != n) throw IncompatibleModel("apply: channel count differs");
    Vector out(intensities.rows());
    const std::span<const double> ref{model_.reference.data(), n};
    for (Eigen::Index r = 0; r < intensities.rows(); ++r) {
        const Vector half = conventional::half_log_ratio({intensities.row(r).data(), n}, ref);
        Eigen::RowVectorXd a = (half.array() * model_.f.array()).transpose();
        const double full = a.norm();
        // The component along f is a per-pixel constant the model drops by design.
        a -= a.dot(f_dir_) * f_dir_;
        const double norm = a.norm();
        if (norm <= 1e-12 * full) {
            out[r] = 0.0;
            continue;
        }
        const Eigen::RowVectorXd u = a * model_.projector;
        out[r] = (a - u * s_vt_).norm() / norm;
    }
    return out;
}

ComplexCube apply(const CorrectionModel& model, const SpectralCube& cube, const ApplyOptions& opts, StepTimes* times) {
    Applier applier(model);
    applier.check_axis(cube.axis);
    if (opts.chunk_rows == 0) throw InvalidParameter("apply: chunk_rows must be positive");

    ComplexCube out;
    out.rows = cube.rows;
    out.cols = cube.cols;
    out.axis = cube.axis;
    out.masks = cube.masks;
    out.data.resize(cube.data.rows(), cube.data.cols());
    const auto m = static_cast<std::size_t>(cube.data.rows());
    ComplexRowMatrix block;
    for (std::size_t first = 0; first < m; first += opts.chunk_rows) {
        const auto count = static_cast<Eigen::Index>(std::min(opts.chunk_rows, m - first));
        const auto start = static_cast<Eigen::Index>(first);
        applier.apply_rows(cube.data.middleRows(start, count), block, times);
        out.data.middleRows(start, count) = block;
    }
    return out;
}

Vector residual_diagnostic(const CorrectionModel& model, const SpectralCube& cube) {
    Applier applier(model);
    applier.check_axis(cube.axis);
    return applier.residual_rows(cube.data);
}

std::vector<std::uint8_t> save(const CorrectionModel& model) {
    model.validate();
    const std::size_t n = model.channels();
    const std::size_t k = model.rank();
    const auto layout = block_layout(n, k);

    json blocks = json::array();
    for (const auto& b : layout) blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    const ModelMetadata& mm = model.meta;
    const json meta = {
        {"format_version", kFormatVersion},
        {"n_freq", n},
        {"rank", k},
        {"seed", mm.seed},
        {"training_shape", {mm.training_rows, mm.training_cols}},
        {"fpec_lambda", mm.fpec_lambda},
        {"regress_lambda", mm.regress_lambda},
        {"noise", {{"alpha", mm.noise_alpha}, {"sigma_g", mm.noise_sigma_g}}},
        {"extras_per_column", mm.extras_per_column},
        {"als", als_json(mm.als)},
        {"trend", {{"window", mm.trend.window}, {"order", mm.trend.order}}},
        {"layout", "row-major"},
        {"blocks", blocks},
    };
    const std::string text = meta.dump();

    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u16(out, kFormatVersion);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    put_block(out, model.axis);
    put_block(out, model.f);
    put_block(out, model.s);
    put_block(out, model.V);
    put_block(out, model.hilbert_v);
    put_block(out, model.phi_pec);
    put_block(out, model.v_sec);
    put_block(out, model.projector);
    put_block(out, model.hilbert_phi_pec);
    put_block(out, model.reference);
    return out;
}

CorrectionModel load(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    const auto magic = in.take(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("model: bad magic, not an RFMC file");
    const std::uint16_t version = in.u16();
    if (version != kFormatVersion)
        throw FormatError("model: unsupported format version " + std::to_string(version));
    const std::uint64_t meta_len = in.u64();
    if (meta_len > in.remaining()) throw FormatError("model: truncated metadata");
    const auto meta_bytes = in.take(static_cast<std::size_t>(meta_len));

    CorrectionModel m;
    std::size_t n = 0, k = 0;
    try {
        const json meta = json::parse(meta_bytes.begin(), meta_bytes.end());
        n = meta.at("n_freq").get<std::size_t>();
        k = meta.at("rank").get<std::size_t>();
        if (meta.at("format_version").get<int>() != kFormatVersion)
            throw FormatError("model: metadata version disagrees with header");
        if (meta.at("layout").get<std::string>() != "row-major") throw FormatError("model: unknown block layout");
        const auto layout = block_layout(n, k);
        const json& blocks = meta.at("blocks");
        if (blocks.size() != layout.size()) throw FormatError("model: unexpected block list");
        for (std::size_t i = 0; i < layout.size(); ++i)
            if (blocks[i].at("name").get<std::string>() != layout[i].name ||
                blocks[i].at("rows").get<Eigen::Index>() != layout[i].rows ||
                blocks[i].at("cols").get<Eigen::Index>() != layout[i].cols)
                throw FormatError("model: block " + std::string(layout[i].name) + " is not as declared");

        ModelMetadata& mm = m.meta;
        mm.seed = meta.at("seed").get<std::uint64_t>();
        mm.training_rows = meta.at("training_shape").at(0).get<std::size_t>();
        mm.training_cols = meta.at("training_shape").at(1).get<std::size_t>();
        mm.fpec_lambda = meta.at("fpec_lambda").get<double>();
        mm.regress_lambda = meta.at("regress_lambda").get<double>();
        mm.noise_alpha = meta.at("noise").at("alpha").get<double>();
        mm.noise_sigma_g = meta.at("noise").at("sigma_g").get<double>();
        mm.extras_per_column = meta.at("extras_per_column").get<std::size_t>();
        const json& als = meta.at("als");
        mm.als.smoothness = als.at("smoothness").get<double>();
        mm.als.asymmetry = als.at("asymmetry").get<double>();
        mm.als.max_iterations = als.at("max_iterations").get<int>();
        mm.als.tolerance = als.at("tolerance").get<double>();
        mm.trend.window = meta.at("trend").at("window").get<int>();
        mm.trend.order = meta.at("trend").at("order").get<int>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("model: malformed metadata: ") + e.what());
    }

    // Guard the size arithmetic before allocating anything.
    const double expected = 8.0 * (3.0 * static_cast<double>(n) + static_cast<double>(k) +
                                   6.0 * static_cast<double>(n) * static_cast<double>(k));
    if (expected != static_cast<double>(in.remaining()))
        throw FormatError("model: payload length does not match declared blocks");

    const auto N = static_cast<Eigen::Index>(n);
    const auto K = static_cast<Eigen::Index>(k);
    get_block(in, m.axis, N, 1);
    get_block(in, m.f, N, 1);
    get_block(in, m.s, K, 1);
    get_block(in, m.V, N, K);
    get_block(in, m.hilbert_v, K, N);
    get_block(in, m.phi_pec, K, N);
    get_block(in, m.v_sec, K, N);
    get_block(in, m.projector, N, K);
    get_block(in, m.hilbert_phi_pec, K, N);
    get_block(in, m.reference, N, 1);
    m.validate();
    return m;
}

void save_file(const std::filesystem::path& path, const CorrectionModel& model) {
    const auto bytes = save(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("model: cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("model: write failed for " + path.string());
}

CorrectionModel load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("model: cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load(bytes);
}

}  // namespace rfkk::mlmodel
