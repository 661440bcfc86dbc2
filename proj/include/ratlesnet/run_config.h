#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ratlesnet/dataset.h"
#include "ratlesnet/eval.h"
#include "ratlesnet/metrics.h"
#include "ratlesnet/model.h"

namespace ratlesnet {

// Everything a subcommand needs besides its file arguments.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 0;  // shuffling and splits
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> test_manifests;
  PhantomConfig phantom;
  std::string study = "phantom";
  std::size_t k = 5;
  GroupBy group_by = GroupBy::kTimePoint;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

// Every accepted key with its default, in file order.
const std::vector<ConfigKey>& config_keys();

// "key = value" lines; '#' starts a comment. Unknown keys, repeated keys and
// malformed values throw ConfigError. Relative paths resolve against base_dir.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// A complete config file holding every default, with help comments.
std::string default_config_text();

}  // namespace ratlesnet
