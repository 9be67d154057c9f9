#pragma once

// Quadratic surrogate models  w'(A)w - 2 b'w  built from linearised networks,
// and their ridge solves.

#include "nextnn/common.hpp"
#include "nextnn/dataset.hpp"
#include "nextnn/nn.hpp"

#include <string>

namespace nextnn {

/// A is the sum of outer products of weight Jacobians (symmetric PSD); b folds
/// in the residuals and the -0.5 pi correction.
struct QuadraticModel {
    Matrix A;
    Vector b;

    Eigen::Index dim() const { return b.size(); }

    /// w'Aw - 2 b'w.
    double value(const Vector& w) const { return w.dot(A * w) - 2.0 * b.dot(w); }
};

/// Adds a proximal term (tau/2)||w - w_now||^2 to the model (up to a constant).
inline QuadraticModel with_proximal(QuadraticModel m, double tau, const Vector& w_now) {
    if (tau == 0.0) return m;
    m.A.diagonal().array() += 0.5 * tau;
    m.b += 0.5 * tau * w_now;
    return m;
}

/// A = sum_m J_m J_m', b = sum_m J_m r_m - 0.5 pi with residuals
/// r_m = d_m - f(w_now; x_m) + J_m' w_now. Squared loss only.
inline QuadraticModel pl_quadratic_model(const NetArch& arch, const Vector& w_now, const Dataset& data,
                                         const Vector& pi) {
    const auto q = w_now.size();
    if (pi.size() != q) throw std::invalid_argument("pl_quadratic_model: pi has wrong length");
    QuadraticModel m{Matrix::Zero(q, q), -0.5 * pi};
    if (data.empty()) return m;
    const auto batch = batch_jacobian(arch, w_now, data);
    const Matrix J = batch.output_jacobian(arch.output);
    const Vector residual = data.targets - batch.output + J * w_now;
    m.A.selfadjointView<Eigen::Lower>().rankUpdate(J.transpose());
    m.A = m.A.selfadjointView<Eigen::Lower>();
    m.b.noalias() += J.transpose() * residual;
    return m;
}

/// Solves the SPD system M x = rhs with a Cholesky factorisation.
inline Vector spd_solve(const Matrix& M, const Vector& rhs) {
    if (!M.allFinite() || !rhs.allFinite()) throw SolverError("spd_solve: non-finite system");
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success) throw SolverError("spd_solve: matrix is not positive definite");
    Vector x = llt.solve(rhs);
    if (!x.allFinite()) throw SolverError("spd_solve: non-finite solution");
    return x;
}

/// argmin w'(A + (lambda/2) I)w - 2 b'w = (A + (lambda/2) I)^{-1} b.
inline Vector pl_solve_ridge(const QuadraticModel& model, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("pl_solve_ridge: lambda must be positive");
    Matrix M = model.A;
    M.diagonal().array() += 0.5 * lambda;
    return spd_solve(M, model.b);
}

}  // namespace nextnn
