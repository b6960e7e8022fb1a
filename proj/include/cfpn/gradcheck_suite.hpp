#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfpn/gradcheck.hpp"
#include "cfpn/model.hpp"

namespace cfpn {

/// One finite-difference experiment: an op (or the whole model) with its report.
struct GradcheckCase {
  std::string name;
  FdReport report;
};

struct GradcheckSummary {
  std::vector<GradcheckCase> cases;
  bool passed = false;
  double max_rel_error = 0.0;
  /// "case/parameter" of the largest error.
  std::string worst;
  /// Largest error per parameter group across all cases.
  std::map<std::string, double> group_errors;
};

/// Every differentiable op on small random inputs. The op inputs are
/// registered as parameters so their gradients are checked too.
std::vector<GradcheckCase> run_op_gradchecks(std::uint64_t seed, const FdOptions& options = {});

struct ModelGradcheckOptions {
  std::size_t input_size = 32;
  /// Coordinates probed per parameter tensor.
  std::size_t coords_per_param = 6;
  std::uint64_t seed = 0;
};

/// Joint loss of the full network on one random image/mask pair, with BN in
/// train mode (running stats frozen). Kink-adjacent weights are nudged away.
GradcheckCase run_model_gradcheck(const ModelConfig& config, const ModelGradcheckOptions& model_options,
                                  const FdOptions& options = {});

GradcheckSummary summarize(std::vector<GradcheckCase> cases, double tolerance);

}  // namespace cfpn
