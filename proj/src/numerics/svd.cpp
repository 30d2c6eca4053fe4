#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <lapacke.h>

#include "rfkk/numerics.hpp"

namespace rfkk::numerics {

void Factorization::truncate(std::size_t k) {
    if (k > rank()) throw InvalidParameter("truncate: requested rank exceeds available rank");
    const auto kk = static_cast<Eigen::Index>(k);
    RowMatrix u = U.leftCols(kk);
    U = std::move(u);
    Eigen::MatrixXd v = V.leftCols(kk);
    V = std::move(v);
    s.conservativeResize(kk);
}

RowMatrix Factorization::reconstruct() const { return U * s.asDiagonal() * V.transpose(); }

namespace {

void check_info(lapack_int info, const char* routine) {
    if (info > 0) throw NumericalError(std::string("svd: LAPACK ") + routine + " did not converge");
    if (info < 0)
        throw NumericalError(std::string("svd: LAPACK ") + routine + " rejected argument " + std::to_string(-info));
}

struct TallSvd {
    Eigen::MatrixXd left;   // p x k
    Vector s;               // all q values
    Eigen::MatrixXd right;  // q x k
};

// t is p x q column-major with p >= q; consumed.
TallSvd tall_svd(Eigen::MatrixXd& t, const RankRule& keep) {
    const auto p = static_cast<lapack_int>(t.rows());
    const auto q = static_cast<lapack_int>(t.cols());
    std::vector<double> tau(static_cast<std::size_t>(q));
    check_info(LAPACKE_dgeqrf(LAPACK_COL_MAJOR, p, q, t.data(), p, tau.data()), "dgeqrf");

    Eigen::MatrixXd r = t.topRows(q).triangularView<Eigen::Upper>();
    Eigen::MatrixXd ur(q, q), vt(q, q);
    TallSvd out;
    out.s.resize(q);
    check_info(LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', q, q, r.data(), q, out.s.data(), ur.data(), q, vt.data(), q),
               "dgesdd");

    const std::size_t k = keep(out.s);
    if (k > static_cast<std::size_t>(q)) throw InvalidParameter("svd: rank rule kept more vectors than exist");
    const auto kk = static_cast<Eigen::Index>(k);
    out.right = vt.topRows(kk).transpose();
    out.left = Eigen::MatrixXd::Zero(p, kk);
    out.left.topRows(q) = ur.leftCols(kk);
    if (k > 0)
        check_info(LAPACKE_dormqr(LAPACK_COL_MAJOR, 'L', 'N', p, static_cast<lapack_int>(k), q, t.data(), p,
                                  tau.data(), out.left.data(), p),
                   "dormqr");
    return out;
}

}  // namespace

Factorization svd_truncated(RowMatrix a, const RankRule& keep) {
    const auto m = a.rows();
    const auto n = a.cols();
    if (m < 1 || n < 1) throw InvalidInput("svd: matrix must be non-empty");
    if (!a.allFinite()) throw InvalidInput("svd: non-finite matrix entry");

    Factorization f;
    if (m >= n) {
        Eigen::MatrixXd t = a;  // column-major copy of A
        a.resize(0, 0);
        TallSvd r = tall_svd(t, keep);
        f.U = r.left;
        f.V = std::move(r.right);
        f.s = r.s.head(f.V.cols());
    } else {
        // The row-major buffer already is the column-major N x M matrix A^T.
        Eigen::Map<Eigen::MatrixXd> view(a.data(), n, m);
        Eigen::MatrixXd t = view;
        a.resize(0, 0);
        TallSvd r = tall_svd(t, keep);
        f.U = r.right;
        f.V = std::move(r.left);
        f.s = r.s.head(f.V.cols());
    }
    return f;
}

Factorization svd_reduced(RowMatrix a) {
    return svd_truncated(std::move(a), [](const Vector& s) { return static_cast<std::size_t>(s.size()); });
}

std::size_t rank_cutoff(std::span<const double> s, double max_abs, std::size_t m, std::size_t n,
                        double epsilon) {
    const double threshold = max_abs * static_cast<double>(std::max(m, n)) * epsilon;
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [threshold](double v) { return v > threshold; }));
}

}  // namespace rfkk::numerics
