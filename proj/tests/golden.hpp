#pragma once

// Hand-built fixtures behind the committed files in tests/data. Every value
// is a short closed form, so the expected bytes do not depend on any solver.

#include <cmath>

#include "rfkk/mlmodel.hpp"
#include "rfkk/types.hpp"

namespace rfkk::testing {

inline SpectralCube golden_cube() {
    SpectralCube c;
    c.rows = 2;
    c.cols = 3;
    c.axis = Vector::LinSpaced(5, 100.0, 500.0);
    c.data.resize(6, 5);
    for (Eigen::Index p = 0; p < 6; ++p)
        for (Eigen::Index i = 0; i < 5; ++i) c.data(p, i) = 0.25 * static_cast<double>(p + 1) - 0.125 * static_cast<double>(i);
    c.data(5, 4) = -1.0 / 3.0;
    c.masks["training"] = Rect{0, 1, 1, 3};
    return c;
}

inline ComplexCube golden_complex_cube() {
    ComplexCube c;
    c.rows = 1;
    c.cols = 2;
    c.axis = Vector::LinSpaced(3, -1.0, 1.0);
    c.data.resize(2, 3);
    for (Eigen::Index p = 0; p < 2; ++p)
        for (Eigen::Index i = 0; i < 3; ++i)
            c.data(p, i) = {1.0 + static_cast<double>(p) / 8.0, -0.5 * static_cast<double>(i)};
    return c;
}

inline mlmodel::CorrectionModel golden_model() {
    const Eigen::Index n = 6, k = 2;
    mlmodel::CorrectionModel m;
    m.axis = Vector::LinSpaced(n, 600.0, 1100.0);
    m.reference = Vector::LinSpaced(n, 1.0, 2.0);
    m.f = Vector::Ones(n);
    m.s = Vector(k);
    m.s << 4.0, 0.5;
    m.V = Eigen::MatrixXd::Zero(n, k);
    m.V(0, 0) = m.V(1, 1) = 1.0;
    auto fill = [&](double base) {
        RowMatrix r(k, n);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < n; ++j) r(i, j) = base + 0.0625 * static_cast<double>(i * n + j);
        return r;
    };
    m.hilbert_v = fill(-0.5);
    m.phi_pec = fill(0.25);
    m.hilbert_phi_pec = fill(1.0);
    m.v_sec = fill(-2.0);
    m.projector = Eigen::MatrixXd::Zero(n, k);
    m.projector(0, 0) = 0.25;
    m.projector(1, 1) = 2.0;
    m.meta.seed = 2020;
    m.meta.training_rows = 3;
    m.meta.training_cols = 4;
    m.meta.fpec_lambda = 0.5;
    m.meta.regress_lambda = 0.0;
    m.meta.extras_per_column = 1;
    return m;
}

inline ReferenceSpectrum golden_reference() {
    return {Vector::LinSpaced(5, 100.0, 500.0), Vector::LinSpaced(5, 0.5, 1.5)};
}

}  // namespace rfkk::testing
