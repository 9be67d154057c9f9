#pragma once

#include "nextnn/common.hpp"

#include <string_view>

namespace nextnn {

enum class Task { regression, classification };

inline std::string_view to_string(Task t) { return t == Task::regression ? "regression" : "classification"; }

/// Row-major sample store: row m of `inputs` pairs with `targets[m]`.
struct Dataset {
    Matrix inputs;   // N x d
    Vector targets;  // N
    Task task = Task::regression;

    std::size_t size() const { return static_cast<std::size_t>(targets.size()); }
    std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }
    bool empty() const { return targets.size() == 0; }
};

}  // namespace nextnn
