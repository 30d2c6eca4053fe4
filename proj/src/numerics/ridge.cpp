#include <cmath>

#include "rfkk/numerics.hpp"

namespace rfkk::numerics {

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_normal_matrix(const Eigen::MatrixXd& x, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw InvalidParameter("ridge: lambda must be finite and non-negative");
    if (!x.allFinite()) throw InvalidInput("ridge: non-finite design matrix");
    const auto k = x.cols();
    if (lambda == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
        if (qr.rank() < k)
            throw NumericalError("ridge: X^T X is singular with lambda = 0; increase lambda");
    }
    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw NumericalError("ridge: normal matrix is not positive definite; increase lambda");
    return llt;
}

}  // namespace

Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda) {
    if (x.rows() != y.rows()) throw InvalidInput("ridge: X and Y row counts differ");
    if (!y.allFinite()) throw InvalidInput("ridge: non-finite response matrix");
    const auto llt = factor_normal_matrix(x, lambda);
    return llt.solve(x.transpose() * y);
}

Eigen::MatrixXd ridge_projector(const Eigen::MatrixXd& x, double lambda) {
    const auto llt = factor_normal_matrix(x, lambda);
    return llt.solve(x.transpose());
}

}  // namespace rfkk::numerics
