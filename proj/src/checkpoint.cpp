#include "shaperl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "shaperl/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "parameter blobs are written in native little-endian order");

namespace shaperl {

namespace {

using nlohmann::json;

// The checkpoint is a flat list of named tensors; this enumerates them in
// blob order for one agent.  Parameters come first, then target copies, then
// the optimizer moments.
std::vector<std::pair<std::string, const std::vector<double>*>> tensor_table(
    const TqcAgent& a) {
  std::vector<std::pair<std::string, const std::vector<double>*>> t;
  t.emplace_back("actor_trunk", &a.trunk_p);
  t.emplace_back("actor_policy_head", &a.policy_p);
  t.emplace_back("actor_aux_head", &a.aux_p);
  for (int i = 0; i < a.cfg.n_critics; ++i)
    t.emplace_back("critic_" + std::to_string(i),
                   &a.critic_p[static_cast<std::size_t>(i)]);
  for (int i = 0; i < a.cfg.n_critics; ++i)
    t.emplace_back("target_" + std::to_string(i),
                   &a.target_p[static_cast<std::size_t>(i)]);
  auto moments = [&](const std::string& name, const AdamW& o) {
    t.emplace_back(name + ".m", &o.m);
    t.emplace_back(name + ".v", &o.v);
  };
  moments("actor_trunk", a.trunk_opt);
  moments("actor_policy_head", a.policy_opt);
  moments("actor_aux_head", a.aux_opt);
  for (int i = 0; i < a.cfg.n_critics; ++i)
    moments("critic_" + std::to_string(i),
            a.critic_opt[static_cast<std::size_t>(i)]);
  return t;
}

std::vector<std::pair<std::string, std::vector<double>*>> tensor_table(
    TqcAgent& a) {
  std::vector<std::pair<std::string, std::vector<double>*>> t;
  for (auto& [name, p] : tensor_table(static_cast<const TqcAgent&>(a)))
    t.emplace_back(name, const_cast<std::vector<double>*>(p));
  return t;
}

json optimizer_steps(const TqcAgent& a) {
  json j = json::object();
  j["actor_trunk"] = a.trunk_opt.t;
  j["actor_policy_head"] = a.policy_opt.t;
  j["actor_aux_head"] = a.aux_opt.t;
  for (int i = 0; i < a.cfg.n_critics; ++i)
    j["critic_" + std::to_string(i)] =
        a.critic_opt[static_cast<std::size_t>(i)].t;
  return j;
}

}  // namespace

void save_checkpoint(const TqcAgent& agent, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw RuntimeFault("cannot create checkpoint directory " + dir + ": " +
                       ec.message());

  const auto tensors = tensor_table(agent);

  json manifest = json::object();
  manifest["schema_version"] = 1;
  manifest["kind"] = "agent_checkpoint";
  manifest["env_config"] = agent.env_cfg;
  manifest["agent_config"] = agent.cfg;
  manifest["log_alpha"] = agent.log_alpha;
  manifest["counters"] = {{"env_steps", agent.env_steps},
                          {"grad_steps", agent.grad_steps},
                          {"episodes", agent.episodes_done}};
  manifest["optimizer_steps"] = optimizer_steps(agent);
  json norms = json::object();
  agent.actor_norm.to_json(norms["actor"]);
  agent.critic_norm.to_json(norms["critic"]);
  manifest["normalizers"] = std::move(norms);
  json tj = json::array();
  for (const auto& [name, p] : tensors) tj.push_back({name, p->size()});
  manifest["tensors"] = std::move(tj);

  const std::string mpath = dir + "/" + kManifestName;
  {
    std::ofstream f(mpath, std::ios::binary);
    if (!f) throw RuntimeFault("cannot open " + mpath + " for writing");
    f << manifest.dump(2) << "\n";
    if (!f) throw RuntimeFault("failed writing " + mpath);
  }
  const std::string ppath = dir + "/" + kParamsName;
  {
    std::ofstream f(ppath, std::ios::binary);
    if (!f) throw RuntimeFault("cannot open " + ppath + " for writing");
    for (const auto& [name, p] : tensors) {
      f.write(reinterpret_cast<const char*>(p->data()),
              static_cast<std::streamsize>(p->size() * sizeof(double)));
    }
    if (!f) throw RuntimeFault("failed writing " + ppath);
  }
}

TqcAgent load_checkpoint(const std::string& dir) {
  const std::string mpath = dir + "/" + kManifestName;
  std::ifstream mf(mpath, std::ios::binary);
  if (!mf) throw ValidationError("cannot open checkpoint manifest: " + mpath);
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw ValidationError("malformed checkpoint manifest " + mpath + ": " +
                          e.what());
  }

  TqcAgent agent = [&] {
    try {
      if (manifest.at("schema_version").get<int>() != 1)
        throw ValidationError("unsupported checkpoint schema version");
      if (manifest.at("kind").get<std::string>() != "agent_checkpoint")
        throw ValidationError("not an agent checkpoint: " + mpath);
      EnvConfig env_cfg = manifest.at("env_config").get<EnvConfig>();
      TqcConfig cfg = manifest.at("agent_config").get<TqcConfig>();
      return TqcAgent(env_cfg, cfg, 0);
    } catch (const json::exception& e) {
      throw ValidationError("checkpoint manifest " + mpath +
                            " is missing fields: " + e.what());
    }
  }();

  try {
    agent.log_alpha = manifest.at("log_alpha").get<double>();
    const json& c = manifest.at("counters");
    agent.env_steps = c.at("env_steps").get<std::int64_t>();
    agent.grad_steps = c.at("grad_steps").get<std::int64_t>();
    agent.episodes_done = c.at("episodes").get<std::int64_t>();
    const json& o = manifest.at("optimizer_steps");
    agent.trunk_opt.t = o.at("actor_trunk").get<long long>();
    agent.policy_opt.t = o.at("actor_policy_head").get<long long>();
    agent.aux_opt.t = o.at("actor_aux_head").get<long long>();
    for (int i = 0; i < agent.cfg.n_critics; ++i)
      agent.critic_opt[static_cast<std::size_t>(i)].t =
          o.at("critic_" + std::to_string(i)).get<long long>();
    const json& n = manifest.at("normalizers");
    agent.actor_norm = Normalizer::from_json(n.at("actor"));
    agent.critic_norm = Normalizer::from_json(n.at("critic"));

    auto tensors = tensor_table(agent);
    const json& tj = manifest.at("tensors");
    if (tj.size() != tensors.size())
      throw ValidationError("checkpoint tensor table length mismatch");
    std::size_t total = 0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const std::string name = tj.at(i).at(0).get<std::string>();
      const std::size_t size = tj.at(i).at(1).get<std::size_t>();
      if (name != tensors[i].first)
        throw ValidationError("checkpoint tensor order mismatch: expected " +
                              tensors[i].first + ", found " + name);
      if (size != tensors[i].second->size())
        throw ValidationError("checkpoint tensor " + name +
                              " has the wrong size for this architecture");
      total += size;
    }

    const std::string ppath = dir + "/" + kParamsName;
    std::ifstream pf(ppath, std::ios::binary);
    if (!pf) throw ValidationError("cannot open checkpoint blob: " + ppath);
    pf.seekg(0, std::ios::end);
    const std::uint64_t bytes = static_cast<std::uint64_t>(pf.tellg());
    if (bytes != total * sizeof(double))
      throw ValidationError("checkpoint blob size does not match manifest");
    pf.seekg(0);
    for (auto& [name, p] : tensors) {
      pf.read(reinterpret_cast<char*>(p->data()),
              static_cast<std::streamsize>(p->size() * sizeof(double)));
    }
    if (!pf) throw ValidationError("failed reading checkpoint blob");

    if (agent.actor_norm.dim() != agent.obs_dim ||
        agent.critic_norm.dim() != 2 * (agent.obs_dim + agent.priv_dim))
      throw ValidationError(
          "checkpoint normalizer widths do not match the architecture");
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint manifest " + mpath +
                          " is missing fields: " + e.what());
  }
  return agent;
}

}  // namespace shaperl
