#include "ratlesnet/run_config.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace ratlesnet {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    out.emplace_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, std::string_view value, const char* what) {
  throw ConfigError("config key '" + key + "': expected " + what + ", got '" + std::string(value) +
                    "'");
}

std::uint64_t to_uint(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

std::size_t to_positive(const std::string& key, std::string_view v) {
  const std::uint64_t n = to_uint(key, v);
  if (n == 0) bad_value(key, v, "a positive integer");
  return static_cast<std::size_t>(n);
}

double to_double(const std::string& key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

std::array<double, 2> to_range(const std::string& key, std::string_view v) {
  const auto parts = split_list(v);
  if (parts.size() != 2) bad_value(key, v, "two numbers 'min,max'");
  return {to_double(key, parts[0]), to_double(key, parts[1])};
}

using Setter = std::function<void(RunConfig&, const std::string&, std::string_view,
                                  const std::filesystem::path&)>;

struct KeySpec {
  ConfigKey key;
  Setter set;
};

std::filesystem::path resolve(const std::filesystem::path& base, std::string_view v) {
  std::filesystem::path p{std::string(v)};
  return p.is_relative() && !base.empty() ? base / p : p;
}

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = [] {
    std::vector<KeySpec> s;
    auto add = [&](std::string name, std::string def, std::string help, Setter set) {
      s.push_back({{std::move(name), std::move(def), std::move(help)}, std::move(set)});
    };
    // model
    add("growth_rate", "18", "channels added by each dense-block convolution",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.model.growth_rate = to_positive(k, v);
        });
    add("levels", "2", "pooling levels in the encoder",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.model.levels = to_positive(k, v);
        });
    add("model_seed", "0", "weight initialization seed",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.model.seed = to_uint(k, v);
        });
    // training
    add("lr", "1e-05", "Adam learning rate",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.train.adam.lr = to_double(k, v);
          if (!(c.train.adam.lr > 0.0)) bad_value(k, v, "a positive number");
        });
    add("max_epochs", "1000", "hard cap on training epochs",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.train.policy.max_epochs = to_positive(k, v);
        });
    add("patience", "5", "consecutive validation-loss increases that stop training",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.train.policy.patience = to_positive(k, v);
        });
    add("val_fraction", "0.2", "share of the training scans held out for early stopping",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.train.val_fraction = to_double(k, v);
          if (!(c.train.val_fraction > 0.0 && c.train.val_fraction < 1.0)) {
            bad_value(k, v, "a number in (0,1)");
          }
        });
    add("seed", "0", "seed for shuffling and data splits",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.seed = to_uint(k, v);
        });
    // data
    add("manifest", "", "default manifest when --manifest is not given",
        [](RunConfig& c, const std::string&, std::string_view v, const std::filesystem::path& b) {
          c.manifest = v.empty() ? std::filesystem::path{} : resolve(b, v);
        });
    add("test_manifests", "", "comma-separated default for --test-manifests",
        [](RunConfig& c, const std::string&, std::string_view v, const std::filesystem::path& b) {
          c.test_manifests.clear();
          for (const auto& p : split_list(v)) c.test_manifests.push_back(resolve(b, p));
        });
    add("study", "phantom", "study name written by generate",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          if (v.empty() || v.find_first_of("\t/\\") != std::string_view::npos) {
            bad_value(k, v, "a non-empty name without tabs or slashes");
          }
          c.study = std::string(v);
        });
    add("phantom_shape", "64,64,18", "phantom grid X,Y,Z",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          const auto parts = split_list(v);
          if (parts.size() != 3) bad_value(k, v, "three integers 'X,Y,Z'");
          for (int d = 0; d < 3; ++d) c.phantom.shape[d] = to_positive(k, parts[d]);
        });
    add("phantom_noise_std", "0.03", "Gaussian noise standard deviation",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.phantom.noise_std = to_double(k, v);
        });
    add("phantom_brain_intensity", "1", "mean brain tissue intensity",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.phantom.brain_intensity = to_double(k, v);
        });
    add("phantom_lesion_factor", "1.25,1.6,1.4", "lesion/brain intensity ratio for 2h,24h,D35",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          const auto parts = split_list(v);
          if (parts.size() != 3) bad_value(k, v, "three numbers");
          for (int i = 0; i < 3; ++i) c.phantom.lesion_intensity_factor[i] = to_double(k, parts[i]);
        });
    add("phantom_radius_2h", "2.6,3.6", "lesion radius range in mm at 2h",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.phantom.lesion_radius_mm[0] = to_range(k, v);
        });
    add("phantom_radius_24h", "3.8,4.8", "lesion radius range in mm at 24h",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.phantom.lesion_radius_mm[1] = to_range(k, v);
        });
    add("phantom_radius_d35", "2.2,3.6", "lesion radius range in mm at D35",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.phantom.lesion_radius_mm[2] = to_range(k, v);
        });
    add("phantom_sham_fraction", "0.5", "share of generated scans that are shams",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.phantom.sham_fraction = to_double(k, v);
        });
    add("phantom_time_points", "2h,24h", "time points dealt round-robin to generated scans",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.phantom.time_points.clear();
          try {
            for (const auto& p : split_list(v)) c.phantom.time_points.push_back(parse_time_point(p));
          } catch (const FormatError&) {
            bad_value(k, v, "a list of 2h, 24h, D35");
          }
        });
    add("phantom_seed", "0", "phantom generator seed",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.phantom.seed = to_uint(k, v);
        });
    // eval
    add("k", "5", "cross-validation folds",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          c.k = to_positive(k, v);
          if (c.k < 2) bad_value(k, v, "at least 2");
        });
    add("group_by", "time_point", "report grouping: time_point or study",
        [](RunConfig& c, const std::string& k, std::string_view v, auto&) {
          try {
            c.group_by = parse_group_by(v);
          } catch (const Error&) {
            bad_value(k, v, "time_point or study");
          }
        });
    return s;
  }();
  return specs;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& s : key_specs()) out.push_back(s.key);
    return out;
  }();
  return keys;
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  std::map<std::string, const KeySpec*> by_name;
  for (const auto& s : key_specs()) by_name[s.key.name] = &s;

  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = by_name.find(key);
    if (it == by_name.end()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key +
                        "' given twice");
    }
    it->second->set(cfg, key, value, base_dir);
  }
  cfg.model.validate();
  cfg.phantom.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.parent_path());
}

std::string default_config_text() {
  std::ostringstream out;
  for (const ConfigKey& k : config_keys()) {
    out << "# " << k.help << '\n' << k.name << " = " << k.default_value << '\n';
  }
  return out.str();
}

}  // namespace ratlesnet
