#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nextnn {

enum class LossKind { squared, cross_entropy };

inline constexpr double kProbabilityClamp = 1e-12;

inline std::string_view to_string(LossKind k) {
    return k == LossKind::squared ? "squared" : "cross_entropy";
}

inline LossKind parse_loss(std::string_view s) {
    if (s == "squared") return LossKind::squared;
    if (s == "cross_entropy" || s == "cross-entropy") return LossKind::cross_entropy;
    throw std::invalid_argument("unknown loss '" + std::string(s) + "'");
}

inline void require_binary_target(double d) {
    if (d != 0.0 && d != 1.0) throw std::invalid_argument("cross-entropy loss needs a binary target");
}

/// l(d, f): (d - f)^2, or -d log f - (1 - d) log(1 - f) with f clamped away from {0, 1}.
inline double loss_eval(LossKind kind, double d, double f) {
    if (kind == LossKind::squared) return (d - f) * (d - f);
    require_binary_target(d);
    const double p = std::clamp(f, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return -d * std::log(p) - (1.0 - d) * std::log(1.0 - p);
}

/// dl/df at prediction f.
inline double loss_derivative(LossKind kind, double d, double f) {
    if (kind == LossKind::squared) return 2.0 * (f - d);
    require_binary_target(d);
    const double p = std::clamp(f, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return (p - d) / (p * (1.0 - p));
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Cross-entropy of a sigmoid unit written in terms of its logit; exact for any z.
inline double logistic_loss(double d, double z) { return softplus(z) - d * z; }

}  // namespace nextnn
