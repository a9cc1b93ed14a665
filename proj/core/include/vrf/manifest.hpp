// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrf/prediction.hpp"

namespace vrf {

enum class SplitRole { kIdTrain, kIdVal, kIdTest, kOodTest };

std::string_view to_string(SplitRole role);
SplitRole parse_split_role(std::string_view text);

/// One split as declared in the manifest. Paths are absolute (resolved
/// against the manifest's directory on load).
struct SplitEntry {
  std::string name;
  SplitRole role = SplitRole::kIdTest;
  std::filesystem::path features_zs;
  std::filesystem::path features_ft;
  std::filesystem::path logits_zs;
  std::filesystem::path logits_ft;
  std::filesystem::path labels;
  std::uint64_t size = 0;  // leading dimension, taken from the tensor headers
};

/// Fully loaded split: both models' outputs plus labels, shape-checked.
struct SplitData {
  std::string name;
  SplitRole role = SplitRole::kIdTest;
  ModelOutputs zs;
  ModelOutputs ft;
  std::vector<std::uint32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Which encoder's features are used for k-NN distances.
enum class FeatureSource { kFineTuned, kZeroShot };

inline const MatrixF& features_of(const SplitData& s, FeatureSource src) {
  return src == FeatureSource::kFineTuned ? s.ft.features : s.zs.features;
}

/// Validated dataset manifest. Construction checks the schema, role rules,
/// file existence and every tensor header; payloads load lazily per split.
class DatasetManifest {
 public:
  static DatasetManifest load(const std::filesystem::path& path);

  std::uint32_t num_classes() const noexcept { return num_classes_; }
  const std::vector<SplitEntry>& splits() const noexcept { return splits_; }
  const std::filesystem::path& directory() const noexcept { return directory_; }

  const SplitEntry& entry(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<const SplitEntry*> with_role(SplitRole role) const;
  const SplitEntry& id_train() const;
  /// First split with role id-val in manifest order.
  const SplitEntry& id_val() const;

  /// Loads a split's payloads and checks label range.
  SplitData load_split(std::string_view name) const;

  /// Builds a manifest in memory (used by writers); runs the same validation
  /// as `load` once files exist.
  DatasetManifest(std::filesystem::path directory, std::uint32_t num_classes,
                  std::vector<SplitEntry> splits);

 private:
  void validate();

  std::filesystem::path directory_;
  std::uint32_t num_classes_ = 0;
  std::vector<SplitEntry> splits_;
};

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  return DatasetManifest::load(path);
}

/// Writes a manifest whose split paths are stored relative to `path`'s directory.
void save_manifest(const std::filesystem::path& path, std::uint32_t num_classes,
                   const std::vector<SplitEntry>& splits);

}  // namespace vrf
