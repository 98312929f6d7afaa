#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mkdm::cli {

/// SHA-1 of "blob <size>\0<content>", as git hashes file contents.
std::string git_blob_sha1(std::string_view content);
std::string hash_file(const std::filesystem::path& path);

/// Record written next to the artifacts of every command that produces any.
struct RunManifest {
  std::string run_id;
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;  // stored relative to the manifest's directory
  double wall_seconds = 0.0;

  /// Hash over the input paths' contents, in order.
  std::string input_hash() const;
  nlohmann::json to_json(const std::filesystem::path& manifest_dir) const;
  void write(const std::filesystem::path& path) const;
};

/// "<command>-" + 12 hex digits over the command, its config and its input contents.
std::string make_run_id(const std::string& command, const nlohmann::json& config,
                        const std::vector<std::filesystem::path>& inputs);

}  // namespace mkdm::cli
