// SPDX-License-Identifier: Apache-2.0
#include "vrf/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "vrf/tensor_io.hpp"

namespace vrf {
namespace {

using nlohmann::json;

std::string require_string(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw SchemaError(where + ": missing key '" + key + "'");
  if (!obj.at(key).is_string()) throw SchemaError(where + ": key '" + key + "' must be a string");
  return obj.at(key).get<std::string>();
}

TensorHeader checked_header(const std::filesystem::path& p, const std::string& where) {
  if (!std::filesystem::exists(p)) throw IoError(where + ": missing file '" + p.string() + "'");
  return read_tensor_header(p);
}

}  // namespace

std::string_view to_string(SplitRole role) {
  switch (role) {
    case SplitRole::kIdTrain: return "id-train";
    case SplitRole::kIdVal: return "id-val";
    case SplitRole::kIdTest: return "id-test";
    case SplitRole::kOodTest: return "ood-test";
  }
  return "?";
}

SplitRole parse_split_role(std::string_view text) {
  if (text == "id-train") return SplitRole::kIdTrain;
  if (text == "id-val") return SplitRole::kIdVal;
  if (text == "id-test") return SplitRole::kIdTest;
  if (text == "ood-test") return SplitRole::kOodTest;
  throw SchemaError("unknown split role '" + std::string(text) + "'");
}

DatasetManifest::DatasetManifest(std::filesystem::path directory, std::uint32_t num_classes,
                                 std::vector<SplitEntry> splits)
    : directory_(std::move(directory)), num_classes_(num_classes), splits_(std::move(splits)) {
  validate();
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError("manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw SchemaError("manifest root must be an object");
  if (!doc.contains("num_classes") || !doc.at("num_classes").is_number_integer()) {
    throw SchemaError("manifest: 'num_classes' must be an integer");
  }
  const auto k = doc.at("num_classes").get<std::int64_t>();
  if (k < 1 || k > static_cast<std::int64_t>(UINT32_MAX)) {
    throw SchemaError("manifest: 'num_classes' must be positive");
  }
  if (!doc.contains("splits") || !doc.at("splits").is_array()) {
    throw SchemaError("manifest: 'splits' must be an array");
  }

  const auto dir = std::filesystem::absolute(path).parent_path();
  std::vector<SplitEntry> splits;
  std::size_t idx = 0;
  for (const auto& s : doc.at("splits")) {
    const std::string where = "manifest split #" + std::to_string(idx++);
    if (!s.is_object()) throw SchemaError(where + ": must be an object");
    SplitEntry e;
    e.name = require_string(s, "name", where);
    e.role = parse_split_role(require_string(s, "role", where));
    e.features_zs = dir / require_string(s, "features_zs", where);
    e.features_ft = dir / require_string(s, "features_ft", where);
    e.logits_zs = dir / require_string(s, "logits_zs", where);
    e.logits_ft = dir / require_string(s, "logits_ft", where);
    e.labels = dir / require_string(s, "labels", where);
    splits.push_back(std::move(e));
  }
  return DatasetManifest(dir, static_cast<std::uint32_t>(k), std::move(splits));
}

void DatasetManifest::validate() {
  std::set<std::string> names;
  std::size_t train = 0, val = 0;
  for (const auto& s : splits_) {
    if (s.name.empty()) throw SchemaError("manifest: split name must be non-empty");
    if (!names.insert(s.name).second) throw SchemaError("manifest: duplicate split name '" + s.name + "'");
    train += s.role == SplitRole::kIdTrain;
    val += s.role == SplitRole::kIdVal;
  }
  if (train != 1) throw SchemaError("manifest: exactly one split must have role id-train");
  if (val < 1) throw SchemaError("manifest: at least one split must have role id-val");

  std::optional<std::uint64_t> d_zs, d_ft;
  for (auto& s : splits_) {
    const std::string where = "split '" + s.name + "'";
    const auto fz = checked_header(s.features_zs, where);
    const auto ff = checked_header(s.features_ft, where);
    const auto lz = checked_header(s.logits_zs, where);
    const auto lf = checked_header(s.logits_ft, where);
    const auto lb = checked_header(s.labels, where);
    for (const auto* h : {&fz, &ff, &lz, &lf}) {
      if (h->dtype != DType::kFloat32 || h->shape.size() != 2) {
        throw DimensionError(where + ": features and logits must be rank-2 float32");
      }
    }
    if (lb.dtype != DType::kUInt32 || lb.shape.size() != 1) {
      throw DimensionError(where + ": labels must be rank-1 uint32");
    }
    const std::uint64_t n = lb.shape[0];
    for (const auto* h : {&fz, &ff, &lz, &lf}) {
      if (h->shape[0] != n) throw DimensionError(where + ": tensors disagree on the number of rows");
    }
    for (const auto* h : {&lz, &lf}) {
      if (h->shape[1] != num_classes_) {
        throw DimensionError(where + ": logits have " + std::to_string(h->shape[1]) +
                             " classes but num_classes is " + std::to_string(num_classes_));
      }
    }
    if (fz.shape[1] < 1 || ff.shape[1] < 1) throw DimensionError(where + ": empty feature dimension");
    if (d_zs && *d_zs != fz.shape[1]) throw DimensionError(where + ": zero-shot feature dim differs across splits");
    if (d_ft && *d_ft != ff.shape[1]) throw DimensionError(where + ": fine-tuned feature dim differs across splits");
    d_zs = fz.shape[1];
    d_ft = ff.shape[1];
    s.size = n;
  }
}

const SplitEntry& DatasetManifest::entry(std::string_view name) const {
  auto it = std::find_if(splits_.begin(), splits_.end(), [&](const auto& s) { return s.name == name; });
  if (it == splits_.end()) throw ValidationError("unknown split '" + std::string(name) + "'");
  return *it;
}

bool DatasetManifest::contains(std::string_view name) const {
  return std::any_of(splits_.begin(), splits_.end(), [&](const auto& s) { return s.name == name; });
}

std::vector<const SplitEntry*> DatasetManifest::with_role(SplitRole role) const {
  std::vector<const SplitEntry*> out;
  for (const auto& s : splits_) {
    if (s.role == role) out.push_back(&s);
  }
  return out;
}

const SplitEntry& DatasetManifest::id_train() const { return *with_role(SplitRole::kIdTrain).front(); }
const SplitEntry& DatasetManifest::id_val() const { return *with_role(SplitRole::kIdVal).front(); }

SplitData DatasetManifest::load_split(std::string_view name) const {
  const SplitEntry& e = entry(name);
  SplitData d;
  d.name = e.name;
  d.role = e.role;
  d.zs = ModelOutputs{read_matrix(e.features_zs), read_matrix(e.logits_zs), ModelTag::kZeroShot};
  d.ft = ModelOutputs{read_matrix(e.features_ft), read_matrix(e.logits_ft), ModelTag::kFineTuned};
  d.labels = read_labels(e.labels);
  d.zs.validate();
  d.ft.validate();
  if (d.zs.size() != d.labels.size() || d.ft.size() != d.labels.size()) {
    throw DimensionError("split '" + e.name + "': labels disagree with model outputs on N");
  }
  if (d.zs.num_classes() != num_classes_ || d.ft.num_classes() != num_classes_) {
    throw DimensionError("split '" + e.name + "': logits do not match num_classes");
  }
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    if (d.labels[i] >= num_classes_) {
      throw DimensionError("split '" + e.name + "': label " + std::to_string(d.labels[i]) + " at row " +
                           std::to_string(i) + " is >= num_classes");
    }
  }
  return d;
}

void save_manifest(const std::filesystem::path& path, std::uint32_t num_classes,
                   const std::vector<SplitEntry>& splits) {
  const auto dir = std::filesystem::absolute(path).parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    return std::filesystem::absolute(p).lexically_relative(dir).generic_string();
  };
  json doc;
  doc["num_classes"] = num_classes;
  doc["splits"] = json::array();
  for (const auto& s : splits) {
    doc["splits"].push_back({{"name", s.name},
                             {"role", std::string(to_string(s.role))},
                             {"features_zs", rel(s.features_zs)},
                             {"features_ft", rel(s.features_ft)},
                             {"logits_zs", rel(s.logits_zs)},
                             {"logits_ft", rel(s.logits_ft)},
                             {"labels", rel(s.labels)}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace vrf
