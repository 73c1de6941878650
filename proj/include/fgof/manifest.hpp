#ifndef FGOF_MANIFEST_HPP
#define FGOF_MANIFEST_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "fgof/version.hpp"

namespace fgof {

/// FNV-1a 64-bit digest of a file, as hex. Fast content fingerprint for the
/// run manifest; not a cryptographic hash.
inline std::string fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "unreadable";
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

/// Everything needed to re-derive an output: command, the result-affecting
/// configuration, the seed, the library version, and digests of the inputs.
/// Thread counts and wall time are deliberately excluded from the serialized
/// payload (they cannot change results); wall time is emitted on its own
/// line by the writers so comparisons can strip it.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // path -> digest

  void add_input(const std::string& path) { inputs[path] = fnv1a64_file(path); }

  std::string to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["version"] = version_string;
    j["inputs"] = inputs;
    return j.dump();
  }

  std::string comment_line() const { return "# manifest " + to_json(); }
};

}  // namespace fgof

#endif
