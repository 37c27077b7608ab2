#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <fstream>
#include <memory>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "contreg/error.hpp"
#include "contreg/scene.hpp"

#ifndef CONTREG_VERSION
#define CONTREG_VERSION "unknown"
#endif

namespace contreg::cli {

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  return fmt::format("{:%Y-%m-%dT%H:%M:%S}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  const std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), started_utc_(utc_now()) {}

void RunManifest::add_input(const std::filesystem::path& path) { inputs_.push_back(path); }
void RunManifest::add_output(const std::filesystem::path& path) { outputs_.push_back(path); }

void RunManifest::write(const std::filesystem::path& path) const {
  const auto hashed = [](const std::vector<std::filesystem::path>& files) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : files) arr.push_back({{"path", f.string()}, {"sha256", sha256_file(f)}});
    return arr;
  };
  const nlohmann::json j = {{"command", command_},
                            {"argv", argv_},
                            {"config", config_},
                            {"seed", seed_},
                            {"tool_version", CONTREG_VERSION},
                            {"inputs", hashed(inputs_)},
                            {"outputs", hashed(outputs_)},
                            {"started_utc", started_utc_},
                            {"finished_utc", utc_now()}};
  write_json(path, j);
}

}  // namespace contreg::cli
