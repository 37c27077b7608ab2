#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace contreg::cli {

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Provenance record written next to every command's outputs. Timestamps live
/// here only, so the primary outputs stay byte-identical across reruns.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_config(std::string effective_config) { config_ = std::move(effective_config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);

  /// Hashes outputs now and writes the manifest as JSON.
  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::string config_;
  std::uint64_t seed_ = 0;
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::filesystem::path> outputs_;
  std::string started_utc_;
};

}  // namespace contreg::cli
