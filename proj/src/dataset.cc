#include "ratlesnet/dataset.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "ratlesnet/io.h"
#include "ratlesnet/nifti.h"

namespace ratlesnet {

namespace {

// Physical brain semi-axes (mm) of the phantom ellipsoid.
constexpr std::array<double, 3> kBrainSemiAxesMm{11.0, 10.0, 7.5};
constexpr int kPlacementAttempts = 100;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.emplace_back(line.substr(start, tab == std::string_view::npos ? line.npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

bool parse_bool(std::string_view s) {
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  throw FormatError("manifest: sham flag must be 0 or 1, got '" + std::string(s) + "'");
}

using StratumKey = std::pair<int, bool>;

StratumKey stratum_of(const ScanRecord& r) { return {static_cast<int>(r.time_point), r.sham}; }

}  // namespace

std::string to_string(TimePoint tp) {
  switch (tp) {
    case TimePoint::k2h: return "2h";
    case TimePoint::k24h: return "24h";
    case TimePoint::kD35: return "D35";
  }
  return "?";
}

TimePoint parse_time_point(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "2h") return TimePoint::k2h;
  if (lower == "24h") return TimePoint::k24h;
  if (lower == "d35") return TimePoint::kD35;
  throw FormatError("unknown time point '" + std::string(text) + "' (expected 2h, 24h or D35)");
}

const ScanRecord& Manifest::find(std::string_view id) const {
  for (const ScanRecord& r : records) {
    if (r.id == id) return r;
  }
  throw ConfigError("no scan with id '" + std::string(id) + "' in manifest");
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        std::string source) {
  Manifest m;
  m.source = std::move(source);
  std::set<std::string> ids;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 6) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected 6 tab-separated "
                        "fields, got " + std::to_string(fields.size()));
    }
    ScanRecord r;
    r.id = fields[0];
    if (r.id.empty()) throw FormatError("manifest line " + std::to_string(line_no) + ": empty id");
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() ? base_dir / path : path;
    };
    r.volume_path = resolve(fields[1]);
    r.mask_path = resolve(fields[2]);
    r.study = fields[3];
    r.time_point = parse_time_point(fields[4]);
    r.sham = parse_bool(fields[5]);
    if (!ids.insert(r.id).second) throw FormatError("manifest: duplicate id '" + r.id + "'");
    m.records.push_back(std::move(r));
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  Manifest m = parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                               bytes.size()),
                              path.parent_path(), path.string());
  for (const ScanRecord& r : m.records) {
    for (const auto& p : {r.volume_path, r.mask_path}) {
      if (!std::filesystem::exists(p)) {
        throw IoError("manifest " + path.string() + ": scan " + r.id + " references missing file " +
                      p.string());
      }
    }
  }
  return m;
}

std::string format_manifest(const Manifest& manifest) {
  std::ostringstream out;
  for (const ScanRecord& r : manifest.records) {
    out << r.id << '\t' << r.volume_path.string() << '\t' << r.mask_path.string() << '\t'
        << r.study << '\t' << to_string(r.time_point) << '\t' << (r.sham ? 1 : 0) << '\n';
  }
  return out.str();
}

Volume standardize(const Volume& v) {
  const std::size_t n = v.values.size();
  if (n < 2) throw DegenerateVolumeError("standardize: need at least 2 voxels");
  double mean = 0.0;
  for (float x : v.values) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float x : v.values) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (!(sd >= 1e-12)) throw DegenerateVolumeError("standardize: volume has zero variance");
  Volume out = v;
  for (float& x : out.values) x = static_cast<float>((x - mean) / sd);
  return out;
}

Spacing3 PhantomConfig::voxel_size() const {
  return {30.0 / static_cast<double>(shape[0]), 30.0 / static_cast<double>(shape[1]),
          18.0 / static_cast<double>(shape[2])};
}

void PhantomConfig::validate() const {
  if (shape[0] < 2 || shape[1] < 2 || shape[2] < 2) {
    throw ConfigError("phantom shape extents must be >= 2");
  }
  if (!(noise_std >= 0.0)) throw ConfigError("phantom noise_std must be >= 0");
  if (!(brain_intensity > 0.0)) throw ConfigError("phantom brain_intensity must be > 0");
  for (double f : lesion_intensity_factor) {
    if (!(f > 1.0)) throw ConfigError("lesion intensity factors must be > 1");
  }
  for (const auto& r : lesion_radius_mm) {
    if (!(r[0] > 0.0) || !(r[1] >= r[0])) throw ConfigError("invalid lesion radius range");
  }
  if (!(sham_fraction >= 0.0 && sham_fraction <= 1.0)) {
    throw ConfigError("sham_fraction must lie in [0,1]");
  }
  if (time_points.empty()) throw ConfigError("phantom time_points must not be empty");
}

Phantom generate_phantom(const PhantomConfig& cfg, TimePoint time_point, bool sham,
                         std::string_view id) {
  cfg.validate();
  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(fnv1a(id))));
  const Spacing3 spacing = cfg.voxel_size();
  const Extent3 shape = cfg.shape;
  std::array<double, 3> center{};
  std::array<double, 3> brain{};
  for (int d = 0; d < 3; ++d) {
    center[d] = (static_cast<double>(shape[d]) - 1.0) / 2.0;
    brain[d] = kBrainSemiAxesMm[d] / spacing[d];
  }
  auto in_brain = [&](double x, double y, double z) {
    const double a = (x - center[0]) / brain[0];
    const double b = (y - center[1]) / brain[1];
    const double c = (z - center[2]) / brain[2];
    return a * a + b * b + c * c <= 1.0;
  };

  Phantom p{Volume(shape, spacing), Mask(shape, spacing)};
  if (!sham) {
    const auto tp = static_cast<std::size_t>(time_point);
    std::uniform_real_distribution<double> radius_mm(cfg.lesion_radius_mm[tp][0],
                                                     cfg.lesion_radius_mm[tp][1]);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const double r = radius_mm(rng);
      const std::array<double, 3> semi{r / spacing[0], r / spacing[1], r / spacing[2]};
      // Centre drawn from the brain shrunk by the lesion semi-axes, right of
      // the midline by at least one semi-axis; the voxel check below decides.
      std::array<double, 3> inner{};
      for (int d = 0; d < 3; ++d) inner[d] = brain[d] - semi[d];
      if (inner[0] <= semi[0] || inner[1] <= 0.0 || inner[2] <= 0.0) continue;
      std::array<double, 3> lc{};
      bool inside = false;
      for (int tries = 0; tries < 64 && !inside; ++tries) {
        const double u = semi[0] / inner[0] + unit(rng) * (1.0 - semi[0] / inner[0]);
        const double v = 2.0 * unit(rng) - 1.0;
        const double w = 2.0 * unit(rng) - 1.0;
        inside = u * u + v * v + w * w <= 1.0;
        lc = {center[0] + u * inner[0], center[1] + v * inner[1], center[2] + w * inner[2]};
      }
      if (!inside) continue;
      Mask candidate(shape, spacing);
      bool fits = true;
      std::size_t count = 0;
      for (std::size_t x = 0; x < shape[0] && fits; ++x) {
        for (std::size_t y = 0; y < shape[1] && fits; ++y) {
          for (std::size_t z = 0; z < shape[2]; ++z) {
            const double a = (static_cast<double>(x) - lc[0]) / semi[0];
            const double b = (static_cast<double>(y) - lc[1]) / semi[1];
            const double c = (static_cast<double>(z) - lc[2]) / semi[2];
            if (a * a + b * b + c * c > 1.0) continue;
            const auto fx = static_cast<double>(x);
            if (fx <= center[0] || !in_brain(fx, static_cast<double>(y), static_cast<double>(z))) {
              fits = false;
              break;
            }
            candidate.at(x, y, z) = 1;
            ++count;
          }
        }
      }
      if (fits && count > 0) {
        p.mask = std::move(candidate);
        placed = true;
      }
    }
    if (!placed) {
      throw GenerationError("phantom " + std::string(id) + ": lesion did not fit inside the right "
                            "hemisphere after " + std::to_string(kPlacementAttempts) +
                            " attempts");
    }
  }

  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  const double lesion = cfg.brain_intensity * cfg.lesion_intensity_factor[static_cast<std::size_t>(time_point)];
  for (std::size_t x = 0; x < shape[0]; ++x) {
    for (std::size_t y = 0; y < shape[1]; ++y) {
      for (std::size_t z = 0; z < shape[2]; ++z) {
        double value = 0.0;
        if (p.mask.at(x, y, z)) {
          value = lesion;
        } else if (in_brain(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z))) {
          value = cfg.brain_intensity;
        }
        p.volume.at(x, y, z) = static_cast<float>(value + noise(rng));
      }
    }
  }
  return p;
}

Manifest generate_phantom_study(const PhantomConfig& cfg, std::size_t n,
                                const std::filesystem::path& out_dir, const std::string& study) {
  cfg.validate();
  if (n == 0) throw ConfigError("phantom study needs at least one scan");
  std::filesystem::create_directories(out_dir);
  const auto shams = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.sham_fraction));
  Manifest m;
  m.source = (out_dir / "manifest.tsv").string();
  const int width = std::max<int>(3, static_cast<int>(std::to_string(n - 1).size()));
  for (std::size_t i = 0; i < n; ++i) {
    const bool sham = i >= n - shams;
    const std::size_t slot = sham ? i - (n - shams) : i;
    std::string index = std::to_string(i);
    index.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(index.size()))), '0');
    ScanRecord r;
    r.id = study + "_" + index;
    r.study = study;
    r.sham = sham;
    r.time_point = cfg.time_points[slot % cfg.time_points.size()];
    r.volume_path = r.id + ".nii";
    r.mask_path = r.id + "_mask.nii";
    const Phantom p = generate_phantom(cfg, r.time_point, r.sham, r.id);
    save_nifti(p.volume, out_dir / r.volume_path);
    save_nifti(p.mask, out_dir / r.mask_path);
    m.records.push_back(std::move(r));
  }
  io::write_text(out_dir / "manifest.tsv", format_manifest(m));
  for (ScanRecord& r : m.records) {
    r.volume_path = out_dir / r.volume_path;
    r.mask_path = out_dir / r.mask_path;
  }
  return m;
}

Sample load_sample(const ScanRecord& record) {
  const Volume volume = standardize(load_volume(record.volume_path));
  const Mask mask = load_mask(record.mask_path);
  if (mask.shape != volume.shape) {
    throw ShapeError("scan " + record.id + ": mask shape does not match volume");
  }
  if (record.sham && mask.count() != 0) {
    throw FormatError("scan " + record.id + " is marked sham but its mask has lesion voxels");
  }
  return Sample{record.id, to_tensor(volume), mask.values, volume.voxel_size};
}

std::vector<Sample> load_samples(std::span<const ScanRecord> records) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const ScanRecord& r : records) out.push_back(load_sample(r));
  return out;
}

FoldSplit split_folds(const Manifest& manifest, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("split_folds: k must be >= 2");
  if (manifest.records.size() < k) {
    throw ConfigError("split_folds: " + std::to_string(manifest.records.size()) +
                      " scans cannot fill " + std::to_string(k) + " folds");
  }
  std::map<StratumKey, std::vector<std::string>> strata;
  for (const ScanRecord& r : manifest.records) strata[stratum_of(r)].push_back(r.id);
  std::mt19937_64 rng(seed);
  FoldSplit split;
  split.folds.resize(k);
  std::size_t next = 0;
  for (auto& [key, ids] : strata) {
    std::shuffle(ids.begin(), ids.end(), rng);
    for (const std::string& id : ids) split.folds[next++ % k].push_back(id);
  }
  return split;
}

TrainValSplit split_train_val(std::span<const ScanRecord> records, double val_fraction,
                              std::uint64_t seed) {
  const std::size_t n = records.size();
  if (n < 2) throw ConfigError("need at least 2 scans to hold out a validation set");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0,1)");
  }
  const auto wanted = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  const std::size_t n_val = std::clamp<std::size_t>(wanted, 1, n - 1);

  std::map<StratumKey, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < n; ++i) strata[stratum_of(records[i])].push_back(i);
  std::mt19937_64 rng(seed);
  struct Share {
    std::vector<std::size_t>* members;
    std::size_t take;
    double remainder;
  };
  std::vector<Share> shares;
  std::size_t assigned = 0;
  for (auto& [key, members] : strata) {
    std::shuffle(members.begin(), members.end(), rng);
    const double ideal = static_cast<double>(n_val) * static_cast<double>(members.size()) /
                         static_cast<double>(n);
    const auto take = static_cast<std::size_t>(std::floor(ideal));
    shares.push_back({&members, take, ideal - static_cast<double>(take)});
    assigned += take;
  }
  std::vector<std::size_t> order(shares.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return shares[a].remainder > shares[b].remainder;
  });
  for (std::size_t i = 0; assigned < n_val; i = (i + 1) % order.size()) {
    Share& s = shares[order[i]];
    if (s.take < s.members->size()) {
      ++s.take;
      ++assigned;
    }
  }
  std::vector<bool> is_val(n, false);
  for (const Share& s : shares) {
    for (std::size_t j = 0; j < s.take; ++j) is_val[(*s.members)[j]] = true;
  }
  TrainValSplit out;
  for (std::size_t i = 0; i < n; ++i) (is_val[i] ? out.val : out.train).push_back(records[i]);
  return out;
}

}  // namespace ratlesnet
