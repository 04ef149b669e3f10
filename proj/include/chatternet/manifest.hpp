#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "chatternet/error.hpp"

namespace chatternet {

inline constexpr const char* kArtifactVersion = "0.3.0";

/// 64-bit FNV-1a.
class Fnv1a {
 public:
  void update(const char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= static_cast<unsigned char>(data[i]);
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct FileFingerprint {
  std::string path;
  std::uint64_t bytes = 0;
  std::string fnv1a64;
};

inline FileFingerprint fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot fingerprint " + path.string());
  Fnv1a h;
  FileFingerprint f;
  f.path = std::filesystem::absolute(path).lexically_normal().string();
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const auto n = static_cast<std::size_t>(in.gcount());
    h.update(buf, n);
    f.bytes += n;
  }
  f.fnv1a64 = hex64(h.digest());
  return f;
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Everything needed to repeat a command: its arguments and configuration,
/// the seed, and fingerprints of the input files. The run id hashes all of
/// these except wall-clock times, so repeating a run reproduces its id.
struct RunManifest {
  std::string command;
  nlohmann::json arguments = nlohmann::json::object();
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, FileFingerprint> data;
  std::uint64_t seed = 0;
  std::string version = kArtifactVersion;
  std::string created_at;

  std::string run_id() const {
    nlohmann::json key = {{"command", command}, {"config", config}, {"seed", seed}, {"version", version}};
    for (const auto& [name, f] : data) key["data"][name] = f.fnv1a64;
    Fnv1a h;
    h.update(key.dump());
    return "run-" + hex64(h.digest()).substr(0, 12);
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"schema", "chatternet-manifest 1"},
                        {"run_id", run_id()},
                        {"command", command},
                        {"arguments", arguments},
                        {"config", config},
                        {"seed", seed},
                        {"version", version},
                        {"created_at", created_at},
                        {"data", nlohmann::json::object()}};
    for (const auto& [name, f] : data) {
      j["data"][name] = {{"path", f.path}, {"bytes", f.bytes}, {"fnv1a64", f.fnv1a64}};
    }
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "chatternet-manifest 1") throw DataError("not a run manifest");
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.arguments = j.value("arguments", nlohmann::json::object());
    m.config = j.value("config", nlohmann::json::object());
    m.seed = j.value("seed", std::uint64_t{0});
    m.version = j.value("version", std::string(kArtifactVersion));
    m.created_at = j.value("created_at", "");
    const auto data = j.value("data", nlohmann::json::object());
    for (const auto& [name, f] : data.items()) {
      m.data[name] = FileFingerprint{f.at("path").get<std::string>(), f.at("bytes").get<std::uint64_t>(),
                                     f.at("fnv1a64").get<std::string>()};
    }
    if (j.contains("run_id") && j.at("run_id").get<std::string>() != m.run_id()) {
      throw DataError("manifest run id does not match its contents");
    }
    return m;
  }

  /// Written once; an existing manifest with a different id is an error.
  void write(const std::filesystem::path& path) const {
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      const auto existing = from_json(nlohmann::json::parse(in));
      if (existing.run_id() != run_id()) {
        throw DataError(path.string() + " already holds the manifest of a different run");
      }
      return;
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest " + path.string());
    out << to_json().dump(2) << '\n';
  }

  static RunManifest read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read manifest " + path.string());
    return from_json(nlohmann::json::parse(in));
  }

  /// Throws DataError when a recorded input file changed or disappeared.
  void verify_data() const {
    for (const auto& [name, f] : data) {
      const auto now = fingerprint(f.path);
      if (now.fnv1a64 != f.fnv1a64 || now.bytes != f.bytes) {
        throw DataError("input " + name + " (" + f.path + ") changed since the manifest was written");
      }
    }
  }
};

}  // namespace chatternet
