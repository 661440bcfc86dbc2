#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ratlesnet/train.h"
#include "ratlesnet/volume.h"

namespace ratlesnet {

enum class TimePoint { k2h, k24h, kD35 };

std::string to_string(TimePoint tp);
// Accepts "2h", "24h", "D35" (case-insensitive). Throws FormatError otherwise.
TimePoint parse_time_point(std::string_view text);

struct ScanRecord {
  std::string id;
  std::filesystem::path volume_path;
  std::filesystem::path mask_path;
  std::string study;
  TimePoint time_point = TimePoint::k24h;
  bool sham = false;

  friend bool operator==(const ScanRecord&, const ScanRecord&) = default;
};

// Line format: id<TAB>volume_path<TAB>mask_path<TAB>study<TAB>time_point<TAB>sham
// with sham written as 0/1. Blank lines and lines starting with '#' are
// ignored. Relative paths are resolved against the manifest's directory.
struct Manifest {
  std::vector<ScanRecord> records;
  std::string source;

  const ScanRecord& find(std::string_view id) const;
};

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        std::string source = {});
// Also checks that every referenced file exists.
Manifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const Manifest& manifest);

// Per-volume z-score with population standard deviation over all voxels.
// Throws DegenerateVolumeError for fewer than 2 voxels or std < 1e-12.
Volume standardize(const Volume& v);

struct PhantomConfig {
  Extent3 shape{64, 64, 18};
  double noise_std = 0.03;
  double brain_intensity = 1.0;
  // Indexed by TimePoint.
  std::array<double, 3> lesion_intensity_factor{1.25, 1.6, 1.4};
  // Lesion radius in millimetres, indexed by TimePoint.
  std::array<std::array<double, 2>, 3> lesion_radius_mm{{{2.6, 3.6}, {3.8, 4.8}, {2.2, 3.6}}};
  double sham_fraction = 0.5;
  std::vector<TimePoint> time_points{TimePoint::k2h, TimePoint::k24h};
  std::uint64_t seed = 0;

  // 30 mm in-plane field of view and an 18 mm slab, whatever the grid.
  Spacing3 voxel_size() const;
  void validate() const;
};

struct Phantom {
  Volume volume;
  Mask mask;
};

// Ellipsoidal brain over a noisy background, with one hyperintense
// ellipsoidal lesion in the right hemisphere (x above the midline) unless
// sham. Deterministic in (cfg.seed, id). Throws GenerationError if no lesion
// placement fits inside the brain within 100 attempts.
Phantom generate_phantom(const PhantomConfig& cfg, TimePoint time_point, bool sham,
                         std::string_view id);

// Writes n phantoms (<id>.nii, <id>_mask.nii) and manifest.tsv into out_dir.
// round(n * sham_fraction) are shams; time points are dealt round-robin
// separately over shams and lesioned scans.
Manifest generate_phantom_study(const PhantomConfig& cfg, std::size_t n,
                                const std::filesystem::path& out_dir, const std::string& study);

// Loads, standardizes and pairs a scan with its labels. Throws ShapeError if
// the mask does not match the volume, FormatError if a sham has lesion voxels.
Sample load_sample(const ScanRecord& record);
std::vector<Sample> load_samples(std::span<const ScanRecord> records);

struct FoldSplit {
  std::vector<std::vector<std::string>> folds;
};

// Stratified by (time_point, sham): each stratum is shuffled and dealt
// round-robin with one running counter, so fold sizes differ by at most one.
// Throws ConfigError for k < 2 or fewer records than folds.
FoldSplit split_folds(const Manifest& manifest, std::size_t k, std::uint64_t seed);

struct TrainValSplit {
  std::vector<ScanRecord> train;
  std::vector<ScanRecord> val;
};

// Stratified hold-out: the validation count round(val_fraction * n), clamped
// to [1, n-1], is apportioned over strata by largest remainder.
TrainValSplit split_train_val(std::span<const ScanRecord> records, double val_fraction,
                              std::uint64_t seed);

}  // namespace ratlesnet
