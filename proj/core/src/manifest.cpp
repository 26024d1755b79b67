// SPDX-License-Identifier: Apache-2.0
#include "manifest.hpp"

#include <algorithm>

#include "gq/error.hpp"
#include "gq/tensor_io.hpp"

namespace gq::detail {

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_manifest(const std::filesystem::path& dir, std::string_view kind, const nlohmann::json& meta,
                    std::vector<std::string> files) {
  std::sort(files.begin(), files.end());
  if (std::adjacent_find(files.begin(), files.end()) != files.end()) {
    fail(ErrorCode::Io, "duplicate file in manifest");
  }
  nlohmann::json listed = nlohmann::json::array();
  for (const auto& name : files) {
    listed.push_back({{"name", name}, {"sha256", sha256_hex(read_file(dir / name))}});
  }
  nlohmann::json m = {{"format", kManifestFormat}, {"kind", kind}, {"meta", meta}, {"files", listed}};
  write_file_atomic(dir / kManifestName, dump_json(m));
}

nlohmann::json read_manifest(const std::filesystem::path& dir, std::string_view kind) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(dir / kManifestName));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptFile, (dir / kManifestName).string() + ": " + e.what());
  }
  try {
    if (m.at("format").get<std::string>() != kManifestFormat) {
      fail(ErrorCode::CorruptFile, "unknown manifest format in " + dir.string());
    }
    if (m.at("kind").get<std::string>() != kind) {
      fail(ErrorCode::CorruptFile, dir.string() + " holds a '" + m.at("kind").get<std::string>() +
                                       "' artifact, expected '" + std::string(kind) + "'");
    }
    for (const auto& f : m.at("files")) {
      const auto name = f.at("name").get<std::string>();
      if (sha256_hex(read_file(dir / name)) != f.at("sha256").get<std::string>()) {
        fail(ErrorCode::CorruptFile, "hash mismatch for " + (dir / name).string());
      }
    }
    return m.at("meta");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptFile, (dir / kManifestName).string() + ": " + e.what());
  }
}

}  // namespace gq::detail
