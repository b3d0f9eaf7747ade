#pragma once

#include "merit/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace merit::ad {

// Builds a scalar loss on `tape` from leaves bound to the current parameters.
using ScalarFn = std::function<Var(Tape& tape, const std::vector<Var>& params)>;

struct GradCheckOptions {
    double eps = 1e-6;
    std::size_t samples_per_tensor = 200;  // tensors up to this size are checked exhaustively
    double denom_floor = 1e-3;  // |a - n| / max(|a|, |n|, floor)
    std::uint64_t seed = 1;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
};

double relative_error(double analytic, double numeric, double floor);

/// Central differences (f(p + eps) - f(p - eps)) / 2 eps on sampled
/// coordinates of every parameter, compared to one backward pass.
GradCheckResult finite_diff_check(const ScalarFn& f, const std::vector<Matrix>& params,
                                  const GradCheckOptions& opts = {});

struct GradCheckEntry {
    std::string name;
    GradCheckResult result;
};

/// Every primitive plus the composed losses and a small end-to-end model,
/// on random instances with s <= 16 and D' <= 8.
std::vector<GradCheckEntry> run_grad_check_suite(std::uint64_t seed = 1,
                                                 const GradCheckOptions& opts = {});

}  // namespace merit::ad
