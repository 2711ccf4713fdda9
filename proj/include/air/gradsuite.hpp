#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace air {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Finite-difference verification (eps 1e-5) of every trainable path: the
// three routed layers, the routing module with and without quantization (the
// quantized case checks the straight-through surrogate and the exact match
// between its gradient and the production backward pass), the text-fusion
// head, and the full forecast models on tiny configurations.
std::vector<GradCheckEntry> run_gradient_suite(std::uint64_t seed);

inline constexpr double kGradCheckTolerance = 1e-4;

}  // namespace air
