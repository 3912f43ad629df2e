#pragma once

#include <string>

#include "shaperl/tqc.hpp"

namespace shaperl {

// On-disk agent snapshot: `manifest.json` (configs, architecture tensor
// table, counters, temperature, normalizer statistics) next to `params.bin`,
// a little-endian IEEE-754 double blob holding every tensor in manifest
// order.  Serialization is canonical, so identical agents produce
// byte-identical checkpoints.
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kParamsName = "params.bin";

// Writes (and creates) `dir`; throws RuntimeFault on I/O failure.
void save_checkpoint(const TqcAgent& agent, const std::string& dir);

// Rebuilds the agent; throws ValidationError on a missing, malformed, or
// inconsistent checkpoint.
TqcAgent load_checkpoint(const std::string& dir);

}  // namespace shaperl
