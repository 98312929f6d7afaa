#include "manifest.hpp"

#include <openssl/sha.h>

#include <cstdio>
#include <fstream>
#include <iterator>

#include "mkdm/error.hpp"

namespace mkdm::cli {
namespace {

std::string hex(const unsigned char* bytes, std::size_t n) {
  std::string out;
  char buf[3];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", bytes[i]);
    out += buf;
  }
  return out;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::io, "cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  SHA_CTX ctx;
  SHA1_Init(&ctx);
  SHA1_Update(&ctx, header.data(), header.size());
  SHA1_Update(&ctx, content.data(), content.size());
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1_Final(digest, &ctx);
  return hex(digest, sizeof digest);
}

std::string hash_file(const std::filesystem::path& path) { return git_blob_sha1(read_all(path)); }

std::string RunManifest::input_hash() const {
  std::string joined;
  for (const auto& p : inputs) joined += hash_file(p) + '\n';
  return git_blob_sha1(joined);
}

nlohmann::json RunManifest::to_json(const std::filesystem::path& manifest_dir) const {
  nlohmann::json in = nlohmann::json::array();
  for (const auto& p : inputs) in.push_back({{"path", p.generic_string()}, {"sha1", hash_file(p)}});
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : outputs) {
    out.push_back({{"path", p.lexically_relative(manifest_dir).generic_string()}, {"sha1", hash_file(p)}});
  }
  return {{"run_id", run_id},   {"command", command},          {"config", config},
          {"inputs", in},       {"input_hash", input_hash()}, {"outputs", out},
          {"wall_seconds", wall_seconds}};
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::io, "cannot write " + path.string());
  out << to_json(path.parent_path()).dump(2) << '\n';
}

std::string make_run_id(const std::string& command, const nlohmann::json& config,
                        const std::vector<std::filesystem::path>& inputs) {
  std::string material = command + '\n' + config.dump() + '\n';
  for (const auto& p : inputs) material += hash_file(p) + '\n';
  return command + "-" + git_blob_sha1(material).substr(0, 12);
}

}  // namespace mkdm::cli
