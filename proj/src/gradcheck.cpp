#include "cfpn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "cfpn/error.hpp"

namespace cfpn {
namespace {

struct Probe {
  double value = 0.0;
  std::uint64_t signature = 0;
};

Probe evaluate(const LossFn& loss, const std::string& context) {
  Tape tape;
  const double v = loss(tape).value()[0];
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite loss " + context);
  return {v, tape.kink_signature()};
}

// Candidate coordinates in probing order.
std::vector<std::size_t> candidate_coords(const Tensor& grad, const FdOptions& options, Rng& rng) {
  const std::size_t numel = grad.numel();
  const std::size_t limit = options.max_coords_per_param;
  std::vector<std::size_t> coords(numel);
  std::iota(coords.begin(), coords.end(), 0);
  if (limit == 0 || numel <= limit) return coords;
  const std::size_t attempts = std::min(numel, limit * std::max<std::size_t>(options.max_attempt_factor, 1));
  if (options.order == ProbeOrder::kLargestGradient) {
    std::partial_sort(coords.begin(), coords.begin() + static_cast<std::ptrdiff_t>(attempts), coords.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double ga = std::abs(grad[a]), gb = std::abs(grad[b]);
                        return ga != gb ? ga > gb : a < b;
                      });
    coords.resize(attempts);
    return coords;
  }
  std::set<std::size_t> seen;
  std::vector<std::size_t> drawn;
  std::uniform_int_distribution<std::size_t> dist(0, numel - 1);
  while (drawn.size() < attempts) {
    const std::size_t i = dist(rng);
    if (seen.insert(i).second) drawn.push_back(i);
  }
  return drawn;
}

}  // namespace

const FdEntry* FdReport::worst() const {
  for (const auto& e : entries) {
    if (e.name == worst_param) return &e;
  }
  return nullptr;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

FdReport finite_diff_check(const LossFn& loss, ParamStore& params, const FdOptions& options) {
  if (!(options.step > 0.0)) throw ConfigError("finite_diff_check: step must be positive");

  FdReport report;
  GradTable analytic;
  std::uint64_t base_signature = 0;
  {
    Tape tape;
    Var root = loss(tape);
    if (!std::isfinite(root.value()[0])) {
      throw NumericError("finite_diff_check: non-finite loss at the unperturbed point");
    }
    base_signature = tape.kink_signature();
    report.loss = root.value()[0];
    tape.backward(root);
    analytic = tape.param_grads(params);
  }

  Rng rng(options.seed);
  const double h = options.step;
  for (const auto& name : params.names()) {
    Tensor& value = params.at(name);
    const Tensor& grad = analytic.at(name);
    FdEntry entry;
    entry.name = name;
    entry.group = param_group(name);
    const std::size_t wanted = options.max_coords_per_param == 0 ? value.numel() : options.max_coords_per_param;
    for (std::size_t i : candidate_coords(grad, options, rng)) {
      if (entry.checked == wanted) break;
      const double saved = value[i];
      value[i] = saved + h;
      const Probe plus = evaluate(loss, "at +h on " + name + "[" + std::to_string(i) + "]");
      value[i] = saved - h;
      const Probe minus = evaluate(loss, "at -h on " + name + "[" + std::to_string(i) + "]");
      value[i] = saved;
      if (options.skip_kink_crossings &&
          (plus.signature != base_signature || minus.signature != base_signature)) {
        ++entry.skipped_kinks;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * h);
      const double err = relative_error(grad[i], numeric);
      if (entry.checked == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = grad[i];
        entry.numeric = numeric;
      }
      ++entry.checked;
    }
    report.skipped_kinks += entry.skipped_kinks;
    if (entry.checked == 0) report.unchecked.push_back(name);
    if (report.entries.empty() || entry.max_rel_error > report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst_param = name;
    }
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < options.tolerance && report.unchecked.empty();
  return report;
}

double fd_resolution(double loss, double step) {
  const double a = std::abs(loss);
  return (std::nextafter(a, std::numeric_limits<double>::infinity()) - a) / (2.0 * step);
}

void nudge_from_kinks(Tensor& t, double step) {
  const double margin = 10.0 * step;
  for (auto& v : t.values()) {
    if (std::abs(v) < margin) v = v < 0.0 ? -margin : margin;
  }
}

}  // namespace cfpn
