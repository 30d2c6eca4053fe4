#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfkk/factorized.hpp"
#include "rfkk/timing.hpp"
#include "rfkk/types.hpp"

namespace rfkk::mlmodel {

inline constexpr std::uint16_t kFormatVersion = 1;

struct ModelMetadata {
    std::uint64_t seed = 0;
    std::size_t training_rows = 0;
    std::size_t training_cols = 0;
    double fpec_lambda = 0.0;
    double regress_lambda = 0.0;
    double noise_alpha = 0.0;
    double noise_sigma_g = 0.0;
    std::size_t extras_per_column = 0;
    numerics::AlsParams als;
    conventional::TrendParams trend;
};

/// Everything needed to transform new cubes by regression and matrix
/// products: no SVD, detrending or Hilbert transform happens at apply time.
struct CorrectionModel {
    Vector axis;
    Vector reference;  // I_ref on axis
    Vector f;
    Vector s;                   // k
    Eigen::MatrixXd V;          // N x k
    RowMatrix hilbert_v;        // k x N
    RowMatrix phi_pec;          // k x N
    RowMatrix hilbert_phi_pec;  // k x N
    RowMatrix v_sec;            // k x N
    Eigen::MatrixXd projector;  // N x k, P = X^T (X X^T + lambda I)^-1 with X = S V^T
    ModelMetadata meta;

    std::size_t rank() const { return static_cast<std::size_t>(s.size()); }
    std::size_t channels() const { return static_cast<std::size_t>(axis.size()); }

    /// Checks shapes and finiteness; throws FormatError.
    void validate() const;
};

struct TrainOptions {
    factorized::Options fkkec;
    std::optional<double> regress_lambda;  // defaults to the fPEC lambda
    std::uint64_t seed = 0;                // recorded in the metadata
};

struct TrainResult {
    CorrectionModel model;
    ComplexCube training_output;
    StepTimes times;
};

TrainResult train(const SpectralCube& cube, const ReferenceSpectrum& ref, const TrainOptions& opts = {});

/// Projector (N x k) for U_new = A_new P.
Eigen::MatrixXd regression_projector(const Vector& s, const Eigen::MatrixXd& v, double lambda);

/// Streaming applier: precomputes the exponent bases once, then converts raw
/// spectra row by row.
class Applier {
public:
    explicit Applier(const CorrectionModel& model);

    /// Throws IncompatibleModel unless the axis matches the model exactly.
    void check_axis(const Vector& axis) const;

    /// Converts intensities (count x N, row-major) into out (count x N).
    void apply_rows(const RowMatrix& intensities, ComplexRowMatrix& out, StepTimes* times = nullptr) const;

    /// ||a - u S V^T|| / ||a|| per row (0 when a = 0).
    Vector residual_rows(const RowMatrix& intensities) const;

private:
    const CorrectionModel& model_;
    factorized::ReconstructionBasis basis_;
    Eigen::MatrixXd s_vt_;               // k x N
    Eigen::MatrixXd weights_projector_;  // N x k, (I - f f^T / |f|^2) P diag(s): raw row -> weights
    Eigen::RowVectorXd f_dir_;           // f / |f|
};

struct ApplyOptions {
    std::size_t chunk_rows = 4096;
};

ComplexCube apply(const CorrectionModel& model, const SpectralCube& cube, const ApplyOptions& opts = {},
                  StepTimes* times = nullptr);

Vector residual_diagnostic(const CorrectionModel& model, const SpectralCube& cube);

std::vector<std::uint8_t> save(const CorrectionModel& model);
CorrectionModel load(std::span<const std::uint8_t> bytes);

void save_file(const std::filesystem::path& path, const CorrectionModel& model);
CorrectionModel load_file(const std::filesystem::path& path);

}  // namespace rfkk::mlmodel
