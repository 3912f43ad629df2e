#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "shaperl/dataset.hpp"
#include "shaperl/env.hpp"
#include "shaperl/tqc.hpp"

namespace shaperl {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// Where the run's shape set comes from: a seeded corpus walk curated by
// greedy selection, or an existing file produced by the dataset command.
struct DatasetSpec {
  std::string mode = "generate";  // "generate" | "file"
  // generate mode
  int corpus_n = 1700;
  std::uint64_t corpus_seed = 123;
  double walk_step = 0.05;
  double threshold = 0.08;  // m, greedy selection distance
  // file mode
  std::string path;
};

// Complete description of a run.  Serialized as strict JSON: every key is
// required, unknown keys are rejected, and the schema version must match.
struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";
  EnvConfig env;
  TqcConfig tqc;
  DatasetSpec dataset;
};

// Built-in profiles.  "default" is the full-size machine; "desk" is the
// reduced rig (16 probes / 12 loops / 8 coils, 6 actuators, short episodes)
// sized so a full training run finishes on a desktop.
RunConfig default_run_config();
RunConfig desk_run_config();
// Throws ValidationError for anything but "default" or "desk".
RunConfig profile_config(const std::string& name);

// Full static validation: ranges, cross-field consistency (coil count vs
// actuator wiring), envelope well-formedness, learner settings.  Throws
// ValidationError naming the offending field.
void validate_run_config(const RunConfig& cfg);

// Canonical form: object keys sorted, dataset block keyed by mode.  The
// config hash is computed over exactly this serialization.
nlohmann::json to_canonical_json(const RunConfig& cfg);

// Strict deserialization: schema version first, then key-exactness at every
// object level (messages carry the $.dotted.path), then field types, then
// validate_run_config.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);
// Digest of the canonical config serialization, "fnv1a:<16 hex>".
std::string config_hash(const RunConfig& cfg);
// Digest of a file's bytes; ValidationError if unreadable.
std::string file_digest(const std::string& path);

// Evaluation mask grammar: full | fixed:SEED | file:PATH | topk:K | randk:K.
struct MaskOption {
  enum class Kind { kFull, kFixed, kFile, kTopK, kRandK };
  Kind kind = Kind::kFull;
  std::uint64_t seed = 0;  // fixed
  int k = 0;               // topk / randk
  std::string path;        // file
};
MaskOption parse_mask_option(const std::string& text);

// Disabled-channel count of the fixed deployment outage, scaled from the
// full machine's 33-of-114 pattern to this layout's maskable count.
int fixed_disabled_count(int maskable);

// Reproducibility record written next to every artifact: tool and schema
// versions, command, config hash, seed, the full canonical config, and a
// digest per input file.  Deliberately timestamp-free so identical runs
// produce identical manifests.
nlohmann::json make_manifest(
    const RunConfig& cfg, const std::string& command,
    const std::vector<std::pair<std::string, std::string>>& input_digests);
void write_manifest(const std::string& path, const nlohmann::json& manifest);

}  // namespace shaperl
