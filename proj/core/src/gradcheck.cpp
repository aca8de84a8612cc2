#include "edr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace edr {

namespace {

double eval_loss(const LossFn& loss_fn) {
  Tape t;
  Expr loss = loss_fn(t);
  return t.scalar_value(loss);
}

std::vector<std::size_t> pick_coords(std::size_t numel, std::size_t want, Rng& rng) {
  std::vector<std::size_t> coords;
  if (numel <= want) {
    coords.resize(numel);
    for (std::size_t i = 0; i < numel; ++i) coords[i] = i;
    return coords;
  }
  std::unordered_set<std::size_t> seen;
  while (seen.size() < want) seen.insert(static_cast<std::size_t>(rng.below(numel)));
  coords.assign(seen.begin(), seen.end());
  std::sort(coords.begin(), coords.end());
  return coords;
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss_fn, const NamedTensors& params, double step,
                           double tolerance, std::size_t samples_per_tensor,
                           std::uint64_t seed) {
  if (precision() != Precision::f64)
    throw numeric_error("grad_check requires the f64 precision mode");
  if (step < 1e-7 || step > 1e-4)
    throw numeric_error("grad_check step must lie in [1e-7, 1e-4]");

  for (auto& [name, p] : params) p->zero_grad();
  Tape tape;
  Expr loss = loss_fn(tape);
  tape.backward(loss);

  GradCheckReport report;
  report.tolerance = tolerance;
  Rng rng(seed);
  for (auto& [name, p] : params) {
    GradCheckEntry entry;
    entry.name = name;
    const std::vector<std::size_t> coords = pick_coords(p->numel(), samples_per_tensor, rng);
    entry.checked = coords.size();
    for (std::size_t i : coords) {
      const double analytic = p->has_grad() ? p->grad().at(i) : 0.0;
      const double orig = p->at(i);
      p->set(i, orig + step);
      const double f_plus = eval_loss(loss_fn);
      p->set(i, orig - step);
      const double f_minus = eval_loss(loss_fn);
      p->set(i, orig);
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double rel =
          std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    entry.pass = entry.max_rel_err <= tolerance;
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace edr
