#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfpn/model.hpp"
#include "cfpn/trainer.hpp"

namespace cfpn {

/// Stable process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Settings shared by all subcommands. Defaults < JSON config < flags.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t input_size = 96;
  CfaVariant cfa = CfaVariant::kCollaborative;
  std::optional<CfdConfig> cfd = CfdConfig{};
  AdamConfig adam{.lr = 1e-3};
  std::size_t batch_size = 2;
  std::size_t steps = 2000;
  std::size_t epochs = 0;
  bool augment = true;
  BetaMode beta_mode = BetaMode::kRatio;
  std::filesystem::path manifest;
  std::filesystem::path out = "out";

  ModelConfig model_config() const;
  TrainConfig train_config() const;
};

/// Applies the keys of a JSON object onto base. Unknown keys and ill-typed
/// values raise ConfigError naming the field. Relative paths resolve against
/// base_dir.
RunConfig apply_config_json(const nlohmann::json& doc, RunConfig base = {},
                            const std::filesystem::path& base_dir = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

nlohmann::json to_json(const RunConfig& config);

/// Parses "0,1,2" (or "none" for no distribution).
std::optional<CfdConfig> parse_cfd_levels(const std::string& text);

/// Entry point of the cfpn executable. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cfpn
