#include "shaperl/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "shaperl/errors.hpp"

namespace shaperl {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

void require_field(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw ValidationError("config " + path + ": " + msg);
}

nlohmann::json dataset_to_json(const DatasetSpec& ds) {
  nlohmann::json j = nlohmann::json::object();
  j["mode"] = ds.mode;
  if (ds.mode == "file") {
    j["path"] = ds.path;
  } else {
    j["corpus_n"] = ds.corpus_n;
    j["corpus_seed"] = ds.corpus_seed;
    j["walk_step"] = ds.walk_step;
    j["threshold"] = ds.threshold;
  }
  return j;
}

// Key-exactness at every object level, both directions, with dotted paths.
// Value types are left to the deserializers; this pass only polices shape.
void check_strict(const nlohmann::json& user, const nlohmann::json& ref,
                  const std::string& path) {
  if (!ref.is_object()) return;
  require_field(user.is_object(), path, "expected an object");
  for (const auto& [key, value] : user.items()) {
    (void)value;
    require_field(ref.contains(key), path + "." + key, "unknown key");
  }
  for (const auto& [key, value] : ref.items()) {
    require_field(user.contains(key), path + "." + key, "missing key");
    check_strict(user.at(key), value, path + "." + key);
  }
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;  // struct defaults are the full-size profile
  return cfg;
}

RunConfig desk_run_config() {
  RunConfig cfg;
  cfg.out_dir = "runs/desk";

  cfg.env.layout.n_probes = 16;
  cfg.env.layout.n_loops = 12;
  cfg.env.layout.n_coils = 8;
  cfg.env.n_act = 6;
  cfg.env.n_paired = 2;
  cfg.env.pos_gain = 4e-4;
  cfg.env.dimless_gain = 8e-5;
  cfg.env.episode_len = 250;
  cfg.env.envelope.lo = {1.52, -0.18, 0.48, 0.65, 0.32, 1.27, -1.28,
                         0.02, 0.02, 0.02, 0.02};
  cfg.env.envelope.hi = {1.88, 0.18, 0.66, 1.15, 0.48, 1.63, -0.92,
                         0.18, 0.18, 0.18, 0.18};

  cfg.tqc.hidden = {64, 64};
  cfg.tqc.learning_rate = 1e-3;  // small batch wants a proportionally larger step
  cfg.tqc.batch = 32;
  cfg.tqc.buffer_capacity = 50000;
  cfg.tqc.warmup_steps = 2000;
  cfg.tqc.total_steps = 100000;
  cfg.tqc.normalizer_freeze = 80000;

  cfg.dataset.corpus_n = 300;
  return cfg;
}

RunConfig profile_config(const std::string& name) {
  if (name == "default") return default_run_config();
  if (name == "desk") return desk_run_config();
  throw ValidationError("unknown profile \"" + name +
                        "\" (expected \"default\" or \"desk\")");
}

void validate_run_config(const RunConfig& cfg) {
  require_field(cfg.schema_version == kConfigSchemaVersion, "$.schema_version",
                "unsupported value " + std::to_string(cfg.schema_version) +
                    " (expected " + std::to_string(kConfigSchemaVersion) + ")");
  require_field(!cfg.out_dir.empty(), "$.out_dir", "must be non-empty");

  const EnvConfig& e = cfg.env;
  require_field(e.layout.n_probes >= 1, "$.env.layout.n_probes", "must be >= 1");
  require_field(e.layout.n_loops >= 1, "$.env.layout.n_loops", "must be >= 1");
  require_field(e.layout.n_coils >= 2, "$.env.layout.n_coils", "must be >= 2");
  const VesselGeom& v = e.layout.vessel;
  require_field(v.r_lo > 0.0 && v.r_lo < v.r_hi, "$.env.layout.vessel",
                "requires 0 < r_lo < r_hi");
  require_field(v.z_lo < v.z_hi, "$.env.layout.vessel", "requires z_lo < z_hi");
  require_field(e.dt > 0.0, "$.env.dt", "must be positive");
  require_field(e.episode_len >= 1, "$.env.episode_len", "must be >= 1");
  require_field(e.resample_period >= 1, "$.env.resample_period", "must be >= 1");
  require_field(e.tau_p > 0.0, "$.env.tau_p", "must be positive");
  require_field(e.bus_nominal > 0.0, "$.env.bus_nominal", "must be positive");
  require_field(e.bus_jitter >= 0.0 && e.bus_jitter < e.bus_nominal,
                "$.env.bus_jitter", "must be in [0, bus_nominal)");
  require_field(e.ip_nominal > 0.0, "$.env.ip_nominal", "must be positive");
  require_field(e.ip_band >= 0.0 && e.ip_band < 1.0, "$.env.ip_band",
                "must be in [0, 1)");
  require_field(e.noise.probe_sigma >= 0.0 && e.noise.loop_sigma >= 0.0 &&
                    e.noise.coil_sigma >= 0.0,
                "$.env.noise", "sigmas must be >= 0");
  require_field(e.reward.geom_tol > 0.0, "$.env.reward.geom_tol",
                "must be positive");
  require_field(std::isfinite(e.reward.alpha), "$.env.reward.alpha",
                "must be finite");
  require_field(e.n_act >= 1, "$.env.n_act", "must be >= 1");
  require_field(e.n_paired >= 0 && e.n_paired <= e.n_act, "$.env.n_paired",
                "must be in [0, n_act]");
  require_field(e.layout.n_coils == e.n_act + e.n_paired, "$.env.layout.n_coils",
                "must equal n_act + n_paired (each paired actuator drives "
                "two coils)");
  require_field(e.pos_gain > 0.0, "$.env.pos_gain", "must be positive");
  require_field(e.dimless_gain > 0.0, "$.env.dimless_gain", "must be positive");
  require_field(e.clamp_margin >= 0.0, "$.env.clamp_margin", "must be >= 0");
  try {
    validate_envelope(e.envelope, e.clamp_margin);
  } catch (const ValidationError& err) {
    throw ValidationError(std::string("config $.env.envelope: ") + err.what());
  }

  try {
    validate_config(cfg.tqc);
  } catch (const ValidationError& err) {
    throw ValidationError(std::string("config $.tqc: ") + err.what());
  }

  const DatasetSpec& ds = cfg.dataset;
  require_field(ds.mode == "generate" || ds.mode == "file", "$.dataset.mode",
                "must be \"generate\" or \"file\"");
  if (ds.mode == "generate") {
    require_field(ds.corpus_n >= 2, "$.dataset.corpus_n", "must be >= 2");
    require_field(ds.walk_step > 0.0, "$.dataset.walk_step",
                  "must be positive");
    require_field(ds.threshold >= 0.0, "$.dataset.threshold", "must be >= 0");
  } else {
    require_field(!ds.path.empty(), "$.dataset.path", "must be non-empty");
  }
}

nlohmann::json to_canonical_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  j["schema_version"] = cfg.schema_version;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["env"] = cfg.env;
  j["tqc"] = cfg.tqc;
  j["dataset"] = dataset_to_json(cfg.dataset);
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  require_field(j.is_object(), "$", "expected an object");
  require_field(j.contains("schema_version"), "$.schema_version",
                "missing key");
  require_field(j.at("schema_version").is_number_integer(),
                "$.schema_version", "must be an integer");
  const int version = j.at("schema_version").get<int>();
  require_field(version == kConfigSchemaVersion, "$.schema_version",
                "unsupported value " + std::to_string(version) + " (expected " +
                    std::to_string(kConfigSchemaVersion) + ")");

  // The dataset block's key set depends on its mode, so resolve the mode
  // before shape checking.
  require_field(j.contains("dataset"), "$.dataset", "missing key");
  require_field(j.at("dataset").is_object(), "$.dataset",
                "expected an object");
  require_field(j.at("dataset").contains("mode"), "$.dataset.mode",
                "missing key");
  require_field(j.at("dataset").at("mode").is_string(), "$.dataset.mode",
                "must be a string");
  const std::string mode = j.at("dataset").at("mode").get<std::string>();
  require_field(mode == "generate" || mode == "file", "$.dataset.mode",
                "must be \"generate\" or \"file\"");

  RunConfig cfg;
  cfg.dataset.mode = mode;
  if (mode == "file") cfg.dataset.path = "placeholder";
  check_strict(j, to_canonical_json(cfg), "$");

  try {
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.out_dir = j.at("out_dir").get<std::string>();
    cfg.env = j.at("env").get<EnvConfig>();
    cfg.tqc = j.at("tqc").get<TqcConfig>();
    const nlohmann::json& ds = j.at("dataset");
    if (mode == "file") {
      cfg.dataset.path = ds.at("path").get<std::string>();
    } else {
      cfg.dataset.corpus_n = ds.at("corpus_n").get<int>();
      cfg.dataset.corpus_seed = ds.at("corpus_seed").get<std::uint64_t>();
      cfg.dataset.walk_step = ds.at("walk_step").get<double>();
      cfg.dataset.threshold = ds.at("threshold").get<double>();
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }

  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot open config file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fnv1a64_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return std::string(buf);
}

std::string config_hash(const RunConfig& cfg) {
  return "fnv1a:" + fnv1a64_hex(to_canonical_json(cfg).dump());
}

std::string file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot open input file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return "fnv1a:" + fnv1a64_hex(buf.str());
}

MaskOption parse_mask_option(const std::string& text) {
  MaskOption opt;
  if (text == "full") {
    opt.kind = MaskOption::Kind::kFull;
    return opt;
  }
  const std::size_t colon = text.find(':');
  require(colon != std::string::npos && colon + 1 < text.size(),
          "mask option \"" + text +
              "\": expected full | fixed:SEED | file:PATH | topk:K | randk:K");
  const std::string head = text.substr(0, colon);
  const std::string arg = text.substr(colon + 1);
  auto parse_int = [&](const char* what) {
    std::size_t used = 0;
    long long value = 0;
    try {
      value = std::stoll(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == arg.size() && value >= 0,
            "mask option \"" + text + "\": " + what +
                " must be a non-negative integer");
    return value;
  };
  if (head == "fixed") {
    opt.kind = MaskOption::Kind::kFixed;
    opt.seed = static_cast<std::uint64_t>(parse_int("SEED"));
  } else if (head == "file") {
    opt.kind = MaskOption::Kind::kFile;
    opt.path = arg;
  } else if (head == "topk") {
    opt.kind = MaskOption::Kind::kTopK;
    opt.k = static_cast<int>(parse_int("K"));
  } else if (head == "randk") {
    opt.kind = MaskOption::Kind::kRandK;
    opt.k = static_cast<int>(parse_int("K"));
  } else {
    throw ValidationError(
        "mask option \"" + text +
        "\": expected full | fixed:SEED | file:PATH | topk:K | randk:K");
  }
  return opt;
}

int fixed_disabled_count(int maskable) {
  require(maskable >= 1, "fixed mask: layout has no maskable channels");
  int n = static_cast<int>(std::lround(maskable * 33.0 / 114.0));
  if (n < 1) n = 1;
  if (n > maskable) n = maskable;
  return n;
}

nlohmann::json make_manifest(
    const RunConfig& cfg, const std::string& command,
    const std::vector<std::pair<std::string, std::string>>& input_digests) {
  nlohmann::json m = nlohmann::json::object();
  m["schema_version"] = kConfigSchemaVersion;
  m["tool"] = "shaperl";
  m["tool_version"] = kToolVersion;
  m["command"] = command;
  m["config_hash"] = config_hash(cfg);
  m["seed"] = cfg.seed;
  m["config"] = to_canonical_json(cfg);
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [name, digest] : input_digests) inputs[name] = digest;
  m["inputs"] = inputs;
  return m;
}

void write_manifest(const std::string& path, const nlohmann::json& manifest) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open manifest for writing: " + path);
  f << manifest.dump(2) << "\n";
  if (!f) throw RuntimeFault("failed writing manifest: " + path);
}

}  // namespace shaperl
