#pragma once

// Strongly convex local surrogates and their solvers.
//
// Every agent replaces its non-convex local cost g_i by a surrogate
// g~_i(.; w_now) that matches g_i's gradient at w_now, adds the linear term
// pi'(w - w_now) standing in for the other agents' gradients, keeps the
// regulariser r, and minimises the result.
//
//   FL  linearises g_i entirely: g_i(w_now) + grad'(w - w_now) + (tau/2)||w - w_now||^2
//   PL  linearises only the network inside a convex loss:
//       sum_m l(d_m, f(w_now; x_m) + J_m'(w - w_now)) + (tau/2)||w - w_now||^2
//
// For the cross-entropy loss the PL surrogate linearises the output
// pre-activation f_L and keeps the sigmoid inside the loss.

#include "nextnn/blocks.hpp"
#include "nextnn/common.hpp"
#include "nextnn/dataset.hpp"
#include "nextnn/loss.hpp"
#include "nextnn/nn.hpp"
#include "nextnn/objectives.hpp"
#include "nextnn/quadratic.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nextnn {

enum class Strategy { fl, pl };

inline std::string_view to_string(Strategy s) { return s == Strategy::fl ? "FL" : "PL"; }

/// Settings for the iterative inner solvers.
struct InnerSettings {
    std::size_t max_iterations = 0;
    double gradient_tolerance = 0.0;
    double initial_step = 0.0;
};

inline constexpr InnerSettings kProxGradientDefaults{5000, 1e-8, 0.0};
inline constexpr InnerSettings kAdaGradDefaults{50, 1e-6, 0.1};
inline constexpr double kAdaGradEpsilon = 1e-8;

struct SurrogateSpec {
    Strategy strategy = Strategy::fl;
    LossKind loss = LossKind::squared;
    Regularizer reg;
    double tau = 0.0;
    std::size_t cores = 1;         // block decomposition of the PL ridge solve
    std::size_t block_workers = 1;  // threads used for the block solves
    InnerSettings prox = kProxGradientDefaults;  // PL + l1
    InnerSettings adaptive = kAdaGradDefaults;   // PL + cross-entropy

    /// The proximal weight actually used; FL ridge is strongly convex through
    /// lambda alone and ignores tau.
    double effective_tau() const { return strategy == Strategy::fl && reg.kind == RegKind::l2 ? 0.0 : tau; }

    /// Throws std::invalid_argument for unsupported or non-strongly-convex combinations.
    void validate() const {
        if (!(reg.lambda > 0.0)) throw std::invalid_argument("regularisation lambda must be positive");
        if (tau < 0.0) throw std::invalid_argument("tau must be nonnegative");
        if (cores == 0) throw std::invalid_argument("cores must be positive");
        if (strategy == Strategy::fl) {
            if (reg.kind != RegKind::l2 && !(tau > 0.0))
                throw std::invalid_argument("FL with l1/group regularisation needs tau > 0");
            if (cores != 1) throw std::invalid_argument("block decomposition is only available for PL ridge");
            return;
        }
        if (loss == LossKind::squared) {
            if (reg.kind == RegKind::group)
                throw std::invalid_argument("PL with group regularisation is not implemented");
            if (reg.kind == RegKind::l1 && !(tau > 0.0))
                throw std::invalid_argument("PL with l1 regularisation needs tau > 0");
            if (reg.kind != RegKind::l2 && cores != 1)
                throw std::invalid_argument("block decomposition is only available for PL ridge");
            return;
        }
        if (reg.kind != RegKind::l2) throw std::invalid_argument("PL cross-entropy supports only l2 regularisation");
        if (!(tau > 0.0)) throw std::invalid_argument("PL cross-entropy needs tau > 0");
        if (cores != 1) throw std::invalid_argument("block decomposition is only available for PL ridge");
    }
};

/// Componentwise sign(z) max(0, |z| - gamma).
inline Vector soft_threshold(const Vector& z, double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("soft_threshold: gamma must be nonnegative");
    return z.unaryExpr([gamma](double v) {
        const double mag = std::abs(v) - gamma;
        return mag > 0.0 ? std::copysign(mag, v) : 0.0;
    });
}

/// Closed-form minimiser of the FL surrogate problem.
inline Vector fl_direction(const Vector& grad_g, const Vector& pi, const Vector& w_now, const Regularizer& reg,
                           double tau) {
    const Vector lin = grad_g + pi;
    switch (reg.kind) {
        case RegKind::l2:
            if (!(reg.lambda > 0.0)) throw std::invalid_argument("fl_direction: l2 needs lambda > 0");
            return -lin / reg.lambda;
        case RegKind::l1:
            if (!(tau > 0.0)) throw std::invalid_argument("fl_direction: l1 needs tau > 0");
            return soft_threshold(w_now - lin / tau, reg.lambda / tau);
        default: {
            if (!(tau > 0.0)) throw std::invalid_argument("fl_direction: group needs tau > 0");
            reg.check_partition(static_cast<std::size_t>(w_now.size()));
            const Vector a = lin - tau * w_now;
            Vector out = Vector::Zero(w_now.size());
            for (const auto& g : reg.groups) {
                const auto off = static_cast<Eigen::Index>(g.offset);
                const auto len = static_cast<Eigen::Index>(g.size);
                const double norm = a.segment(off, len).norm();
                const double thresh = reg.lambda * Regularizer::group_weight(g);
                if (norm > thresh) out.segment(off, len) = -a.segment(off, len) * (norm - thresh) / (tau * norm);
            }
            return out;
        }
    }
}

/// Result of an iterative inner solve; `converged` is false when the
/// iteration cap was hit (w is then the best iterate seen).
struct InnerResult {
    Vector w;
    std::size_t iterations = 0;
    bool converged = true;
};

/// w'(A + (tau/2)I)w - 2(b + 0.5 tau w_now)'w + lambda ||w||_1.
inline double pl_l1_objective(const QuadraticModel& model, double tau, double lambda, const Vector& w_now,
                              const Vector& w) {
    return with_proximal(model, tau, w_now).value(w) + lambda * w.lpNorm<1>();
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double largest_eigenvalue(const Matrix& M, std::size_t max_iterations = 500, double rel_tol = 1e-10) {
    Vector v = Vector::Ones(M.rows()) / std::sqrt(static_cast<double>(M.rows()));
    double estimate = 0.0;
    for (std::size_t k = 0; k < max_iterations; ++k) {
        Vector mv = M * v;
        const double norm = mv.norm();
        if (norm == 0.0) return 0.0;
        const double next = v.dot(mv);
        v = mv / norm;
        if (std::abs(next - estimate) <= rel_tol * std::abs(next)) return next;
        estimate = next;
    }
    return estimate;
}

/// Accelerated proximal gradient for the PL l1 surrogate, warm-started at w_now.
/// Step 1 / (2 L) with L the largest eigenvalue of 2(A + (tau/2)I); stops when
/// the proximal gradient mapping falls below the tolerance.
inline InnerResult pl_solve_l1(const QuadraticModel& model, double tau, double lambda, const Vector& w_now,
                               const InnerSettings& settings = kProxGradientDefaults) {
    if (lambda < 0.0) throw std::invalid_argument("pl_solve_l1: lambda must be nonnegative");
    const QuadraticModel m = with_proximal(model, tau, w_now);
    const double lip = largest_eigenvalue(2.0 * m.A);
    if (!(lip > 0.0) || !std::isfinite(lip)) throw SolverError("pl_solve_l1: degenerate quadratic term");
    const double step = 1.0 / (2.0 * lip);

    auto objective = [&](const Vector& w) { return m.value(w) + lambda * w.lpNorm<1>(); };

    Vector x = w_now;
    Vector y = x;
    double t = 1.0;
    Vector best = x;
    double best_value = objective(x);
    InnerResult result;
    for (std::size_t k = 0; k < settings.max_iterations; ++k) {
        const Vector grad = 2.0 * (m.A * y - m.b);
        Vector next = soft_threshold(y - step * grad, step * lambda);
        const double mapping = (y - next).norm() / step;
        const double value = objective(next);
        if (value < best_value) {
            best_value = value;
            best = next;
        }
        if (mapping < settings.gradient_tolerance) {
            result.w = std::move(next);
            result.iterations = k + 1;
            result.converged = true;
            return result;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / t_next) * (next - x);
        x = std::move(next);
        t = t_next;
    }
    result.w = std::move(best);
    result.iterations = settings.max_iterations;
    result.converged = false;
    return result;
}

/// The PL cross-entropy surrogate at w_now:
///   sum_m softplus(z_m(w)) - d_m z_m(w) + pi'w + (lambda/2)||w||^2 + (tau/2)||w - w_now||^2,
/// with z_m(w) = f_L(w_now; x_m) + J_m'(w - w_now).
class CrossEntropySurrogate {
public:
    CrossEntropySurrogate(const NetArch& arch, const Vector& w_now, const Dataset& data, const Vector& pi,
                          double lambda, double tau)
        : w_now_(w_now), pi_(pi), targets_(data.targets), lambda_(lambda), tau_(tau) {
        check_loss_compatible(arch, LossKind::cross_entropy);
        auto batch = batch_jacobian(arch, w_now, data);
        logits_ = std::move(batch.pre_activation);
        jacobian_ = std::move(batch.pre_jacobian);
        for (Eigen::Index m = 0; m < targets_.size(); ++m) require_binary_target(targets_(m));
    }

    /// Smooth surrogate part g~(w; w_now), without pi and r.
    double smooth_value(const Vector& w) const {
        const Vector z = logits(w);
        double total = 0.0;
        for (Eigen::Index m = 0; m < z.size(); ++m) total += logistic_loss(targets_(m), z(m));
        return total + 0.5 * tau_ * (w - w_now_).squaredNorm();
    }

    double objective(const Vector& w) const {
        return smooth_value(w) + pi_.dot(w) + 0.5 * lambda_ * w.squaredNorm();
    }

    Vector gradient(const Vector& w) const {
        const Vector z = logits(w);
        Vector resid(z.size());
        for (Eigen::Index m = 0; m < z.size(); ++m) resid(m) = sigmoid(z(m)) - targets_(m);
        Vector g = pi_ + lambda_ * w + tau_ * (w - w_now_);
        if (resid.size() > 0) g.noalias() += jacobian_.transpose() * resid;
        return g;
    }

    /// AdaGrad warm-started at w_now; returns the best iterate by objective.
    InnerResult solve(const InnerSettings& settings = kAdaGradDefaults) const {
        Vector w = w_now_;
        Vector acc = Vector::Zero(w.size());
        Vector best = w;
        double best_value = objective(w);
        InnerResult result{w, 0, false};
        for (std::size_t k = 0; k < settings.max_iterations; ++k) {
            const Vector g = gradient(w);
            if (g.norm() < settings.gradient_tolerance) {
                result.converged = true;
                break;
            }
            acc.array() += g.array().square();
            w.array() -= settings.initial_step * g.array() / (acc.array() + kAdaGradEpsilon).sqrt();
            ++result.iterations;
            const double value = objective(w);
            if (value < best_value) {
                best_value = value;
                best = w;
            }
        }
        result.w = std::move(best);
        return result;
    }

private:
    Vector logits(const Vector& w) const {
        if (logits_.size() == 0) return {};
        return logits_ + jacobian_ * (w - w_now_);
    }

    Vector w_now_;
    Vector pi_;
    Vector targets_;
    Vector logits_;
    Matrix jacobian_;
    double lambda_;
    double tau_;
};

inline InnerResult pl_solve_crossentropy(const NetArch& arch, const Vector& w_now, const Dataset& data,
                                         const Vector& pi, const Regularizer& reg, double tau,
                                         const InnerSettings& settings = kAdaGradDefaults) {
    if (reg.kind != RegKind::l2) throw std::invalid_argument("pl_solve_crossentropy: only l2 regularisation");
    if (!(tau > 0.0)) throw std::invalid_argument("pl_solve_crossentropy: tau must be positive");
    return CrossEntropySurrogate(arch, w_now, data, pi, reg.lambda, tau).solve(settings);
}

/// Outcome of one local surrogate solve.
struct LocalSolve {
    Vector w;
    std::size_t iterations = 0;
    bool converged = true;
    std::vector<double> block_ms;  // per-block timings of a decomposed ridge solve
};

/// One agent's surrogate problem at round n, built from its current estimate,
/// the local gradient there, and its estimate pi of the other agents' gradients.
class LocalSurrogate {
public:
    LocalSurrogate(const SurrogateSpec& spec, const NetArch& arch, const Dataset& data, Vector w_now,
                   Vector grad_g, Vector pi)
        : spec_(spec), w_now_(std::move(w_now)), grad_(std::move(grad_g)), pi_(std::move(pi)) {
        spec_.validate();
        check_loss_compatible(arch, spec_.loss);
        if (spec_.strategy == Strategy::pl) {
            if (spec_.loss == LossKind::squared) model_ = pl_quadratic_model(arch, w_now_, data, pi_);
            else ce_.emplace(arch, w_now_, data, pi_, spec_.reg.lambda, spec_.tau);
        }
    }

    const Vector& w_now() const { return w_now_; }
    const Vector& local_gradient() const { return grad_; }
    const SurrogateSpec& spec() const { return spec_; }

    /// g~_i(w; w_now): the smooth part replacing g_i (for FL, up to the constant g_i(w_now)).
    double smooth_value(const Vector& w) const {
        const double prox = 0.5 * spec_.effective_tau() * (w - w_now_).squaredNorm();
        if (spec_.strategy == Strategy::fl) return grad_.dot(w - w_now_) + prox;
        if (ce_) return ce_->smooth_value(w);
        // sum_m (r_m - J_m'w)^2 = w'Aw - 2 (b + 0.5 pi)'w + sum_m r_m^2; the constant is dropped.
        const Vector b_data = model_->b + 0.5 * pi_;
        return w.dot(model_->A * w) - 2.0 * b_data.dot(w) + prox;
    }

    /// Full surrogate objective U~_i(w; w_now, pi) = g~_i + pi'(w - w_now) + r.
    double objective(const Vector& w) const {
        return smooth_value(w) + pi_.dot(w - w_now_) + spec_.reg.value(w);
    }

    LocalSolve solve() const {
        LocalSolve out;
        if (spec_.strategy == Strategy::fl) {
            out.w = fl_direction(grad_, pi_, w_now_, spec_.reg, spec_.tau);
            return out;
        }
        if (ce_) {
            auto r = ce_->solve(spec_.adaptive);
            out.w = std::move(r.w);
            out.iterations = r.iterations;
            out.converged = r.converged;
            return out;
        }
        if (spec_.reg.kind == RegKind::l1) {
            auto r = pl_solve_l1(*model_, spec_.tau, spec_.reg.lambda, w_now_, spec_.prox);
            out.w = std::move(r.w);
            out.iterations = r.iterations;
            out.converged = r.converged;
            return out;
        }
        const QuadraticModel m = with_proximal(*model_, spec_.tau, w_now_);
        if (spec_.cores > 1) {
            const auto partition = block_partition(static_cast<std::size_t>(w_now_.size()), spec_.cores);
            out.w = block_solve_ridge(m, spec_.reg.lambda, partition, w_now_, &out.block_ms, spec_.block_workers);
        } else {
            out.w = pl_solve_ridge(m, spec_.reg.lambda);
        }
        return out;
    }

private:
    SurrogateSpec spec_;
    Vector w_now_;
    Vector grad_;
    Vector pi_;
    std::optional<QuadraticModel> model_;
    std::optional<CrossEntropySurrogate> ce_;
};

}  // namespace nextnn
