#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfpn/autodiff.hpp"
#include "cfpn/params.hpp"

namespace cfpn {

/// Which coordinates of a tensor are probed when not all of them are.
enum class ProbeOrder {
  kRandom,           // uniformly drawn
  kLargestGradient,  // by decreasing |analytic gradient|
};

struct FdOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Coordinates probed per parameter tensor; 0 probes every coordinate.
  std::size_t max_coords_per_param = 0;
  ProbeOrder order = ProbeOrder::kRandom;
  /// Discard probes whose +-h evaluations switch any ReLU on or off; the
  /// central difference is then not a derivative. The next candidate
  /// coordinate is tried instead.
  bool skip_kink_crossings = true;
  /// Candidates tried per tensor, as a multiple of max_coords_per_param.
  std::size_t max_attempt_factor = 8;
  std::uint64_t seed = 0;
};

struct FdEntry {
  std::string name;
  std::string group;
  std::size_t checked = 0;
  /// Probes discarded because they straddled a ReLU kink.
  std::size_t skipped_kinks = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct FdReport {
  std::vector<FdEntry> entries;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t skipped_kinks = 0;
  /// Loss at the unperturbed point.
  double loss = 0.0;
  /// Tensors for which no probe could be evaluated; they fail the check.
  std::vector<std::string> unchecked;
  bool passed = false;

  const FdEntry* worst() const;
};

/// Builds a scalar loss on the given tape from parameters in the checked store.
using LossFn = std::function<Var(Tape&)>;

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of loss against central differences.
/// Every learnable parameter tensor in params is checked. Throws NumericError if the
/// loss is non-finite at any probe.
FdReport finite_diff_check(const LossFn& loss, ParamStore& params, const FdOptions& options = {});

/// Smallest gradient change a central difference can resolve for this loss
/// value: one unit in the last place of the loss divided by 2h.
double fd_resolution(double loss, double step);

/// Moves entries with |v| < 10*h to +-10*h, keeping probes off ReLU kinks.
void nudge_from_kinks(Tensor& t, double step);

}  // namespace cfpn
