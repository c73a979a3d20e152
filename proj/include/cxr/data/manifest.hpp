#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cxr/data/labels.hpp"

namespace cxr {

struct ImageRecord {
  std::string id;  ///< path relative to the dataset root, '/'-separated
  Label label = Label::kNormal;
  Split split = Split::kUnassigned;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  /// Throws ConfigError unless all ratios are non-negative and sum to 1.
  void validate() const;
  friend bool operator==(const SplitRatios&, const SplitRatios&) = default;
};

/// counts[split][label]; split index 3 holds UNASSIGNED.
using SplitCounts = std::array<std::array<std::size_t, 2>, 4>;

struct SplitManifest {
  std::vector<ImageRecord> records;
  std::uint64_t seed = 42;
  SplitRatios ratios;

  SplitCounts counts() const;
  std::size_t count(Split split) const;
  std::size_t count(Split split, Label label) const;
  std::vector<ImageRecord> records_in(Split split) const;

  /// Throws DataError on duplicate ids.
  void validate_unique_ids() const;
};

using ClassDirs = std::map<Label, std::string>;

/// NORMAL -> "NORMAL", PNEUMONIA -> "PNEUMONIA".
ClassDirs default_class_dirs();

struct ScanResult {
  SplitManifest manifest;
  std::size_t skipped = 0;  ///< unreadable, empty or non-image files
};

/// Enumerates `<root>/<class_dir>/*.{jpeg,jpg,png}`. Records are sorted by id
/// and left UNASSIGNED. Missing directories are fatal (DataError); unreadable
/// or zero-byte files are skipped with a warning.
ScanResult scan_dataset_dir(const std::filesystem::path& root, const ClassDirs& class_dirs);

/// Per class: shuffle with a generator seeded by `seed`, then the first
/// floor(train*n) go to TRAIN, the next floor(val*n) to VAL, the rest to TEST.
/// Throws DataError if a present class has fewer than 3 records or any record
/// is already assigned.
SplitManifest stratified_split(const SplitManifest& manifest, const SplitRatios& ratios,
                               std::uint64_t seed);

/// Number of records per split for a class of size n under the floor rule.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

/// Writes `<csv>` (header id,label,split) and the `<csv stem>.json` sidecar
/// holding {seed, ratios, counts}.
void write_manifest(const SplitManifest& manifest, const std::filesystem::path& csv_path);
SplitManifest read_manifest(const std::filesystem::path& csv_path);

std::filesystem::path manifest_sidecar_path(const std::filesystem::path& csv_path);

}  // namespace cxr
