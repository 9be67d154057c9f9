#pragma once

// Regularizers and the global training cost U(w) = sum_i g_i(w) + r(w).

#include "nextnn/common.hpp"
#include "nextnn/dataset.hpp"
#include "nextnn/loss.hpp"
#include "nextnn/nn.hpp"

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nextnn {

enum class RegKind { l2, l1, group };

inline std::string_view to_string(RegKind k) {
    switch (k) {
        case RegKind::l2: return "l2";
        case RegKind::l1: return "l1";
        default: return "group";
    }
}

inline RegKind parse_reg(std::string_view s) {
    if (s == "l2" || s == "ridge") return RegKind::l2;
    if (s == "l1" || s == "lasso") return RegKind::l1;
    if (s == "group") return RegKind::group;
    throw std::invalid_argument("unknown regularizer '" + std::string(s) + "'");
}

/// r(w): (lambda/2)||w||^2, lambda ||w||_1, or lambda sum_p sqrt(|p|) ||w_p||.
struct Regularizer {
    RegKind kind = RegKind::l2;
    double lambda = 0.0;
    std::vector<IndexRange> groups;  // only for RegKind::group

    static Regularizer l2(double lambda) { return {RegKind::l2, lambda, {}}; }
    static Regularizer l1(double lambda) { return {RegKind::l1, lambda, {}}; }
    static Regularizer group(double lambda, std::vector<IndexRange> groups) {
        return {RegKind::group, lambda, std::move(groups)};
    }

    bool differentiable() const { return kind == RegKind::l2; }

    /// Groups must be ordered, contiguous and cover [0, q) exactly.
    void check_partition(std::size_t q) const {
        if (kind != RegKind::group) return;
        std::size_t next = 0;
        for (const auto& g : groups) {
            if (g.offset != next || g.size == 0)
                throw std::invalid_argument("group regularizer: groups do not partition the weight vector");
            next += g.size;
        }
        if (next != q) throw std::invalid_argument("group regularizer: partition covers " + std::to_string(next) +
                                                   " weights, expected " + std::to_string(q));
    }

    static double group_weight(const IndexRange& g) { return std::sqrt(static_cast<double>(g.size)); }

    double value(const Vector& w) const {
        switch (kind) {
            case RegKind::l2: return 0.5 * lambda * w.squaredNorm();
            case RegKind::l1: return lambda * w.lpNorm<1>();
            default: {
                check_partition(static_cast<std::size_t>(w.size()));
                double total = 0.0;
                for (const auto& g : groups)
                    total += group_weight(g) *
                             w.segment(static_cast<Eigen::Index>(g.offset), static_cast<Eigen::Index>(g.size)).norm();
                return lambda * total;
            }
        }
    }

    /// Gradient of a differentiable regularizer.
    Vector gradient(const Vector& w) const {
        if (!differentiable())
            throw std::invalid_argument("regularizer '" + std::string(to_string(kind)) + "' is not differentiable");
        return lambda * w;
    }
};

/// Evaluates r(w) for the given regularizer.
inline double reg_eval(const Regularizer& reg, const Vector& w) { return reg.value(w); }

/// U(w) = sum_i g_i(w) + r(w).
inline double global_cost(const NetArch& arch, const Vector& w, std::span<const Dataset> locals, LossKind loss,
                          const Regularizer& reg) {
    double g = 0.0;
    for (const auto& d : locals) g += local_loss(arch, w, d, loss);
    return g + reg.value(w);
}

inline Vector average(std::span<const Vector> ws) {
    if (ws.empty()) throw std::invalid_argument("average: no vectors");
    Vector mean = Vector::Zero(ws.front().size());
    for (const auto& w : ws) mean += w;
    return mean / static_cast<double>(ws.size());
}

/// U evaluated at the network average of the agents' estimates.
inline double global_cost(const NetArch& arch, std::span<const Vector> agent_weights, std::span<const Dataset> locals,
                          LossKind loss, const Regularizer& reg) {
    return global_cost(arch, average(agent_weights), locals, loss, reg);
}

}  // namespace nextnn
