#pragma once

#include <functional>
#include <string>

#include "edr/nn.hpp"

namespace edr {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool pass = true;
};

// Builds the loss graph on the given tape; called repeatedly, so it must be
// a pure function of the parameter tensors it captures.
using LossFn = std::function<Expr(Tape&)>;

// Compares analytic gradients against central finite differences
// (f(p+h) - f(p-h)) / 2h per coordinate. Tensors larger than
// `samples_per_tensor` are checked on that many distinct random
// coordinates. Requires the f64 precision mode. Relative error is
// |a - n| / max(1e-8, |a| + |n|).
GradCheckReport grad_check(const LossFn& loss_fn, const NamedTensors& params,
                           double step = 1e-5, double tolerance = 1e-4,
                           std::size_t samples_per_tensor = 200, std::uint64_t seed = 12345);

// Gradient checking needs well-conditioned weights: at the production init
// range the gradients through attention fall below what f64 central
// differences can resolve. The fixture re-randomizes all parameters at
// `weight_range` and carries a fixed two-pair batch.
inline constexpr double kGradCheckWeightRange = 0.7;
inline constexpr std::uint64_t kGradCheckDefaultSeed = 17;

}  // namespace edr
