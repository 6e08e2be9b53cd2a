#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "catwm/adversary.hpp"
#include "catwm/dataset.hpp"
#include "catwm/evalharness.hpp"
#include "catwm/training.hpp"
#include "catwm/watermark.hpp"

namespace catwm {

inline DatasetSource ood_defaults() {
  DatasetSource s;
  s.kind = DatasetSource::Kind::SyntheticOod;
  s.size = 512;
  return s;
}

/// Everything needed to reproduce a run. Serialized as JSON; see README for
/// the schema. The hash covers every field.
struct RunConfig {
  TrainConfig train;
  AdversaryConfig adversary;
  WatermarkConfig watermark;
  GridConfig grid = GridConfig::defaults();
  DatasetSource data;
  DatasetSource ood = ood_defaults();
  std::filesystem::path output_dir = "runs";

  std::uint64_t seed() const { return train.seed; }
  nlohmann::json to_json() const;
  /// 16 hex digits of FNV-1a over the canonical JSON dump.
  std::string hash() const;
  void validate() const;
};

/// Parse a (possibly partial) config. Missing fields take their defaults;
/// unknown fields and type errors raise ParseError naming the field path;
/// violated invariants raise ValidationError listing all of them.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

std::string fnv1a_hex(const std::string& text);

}  // namespace catwm
