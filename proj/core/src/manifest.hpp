// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gq::detail {

inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kManifestFormat = "gq-manifest-1";

/// Writes <dir>/manifest.json listing every file with its SHA-256.
void write_manifest(const std::filesystem::path& dir, std::string_view kind, const nlohmann::json& meta,
                    std::vector<std::string> files);

/// Reads and checks a manifest: format, kind and every listed file's hash.
/// Returns the "meta" object.
nlohmann::json read_manifest(const std::filesystem::path& dir, std::string_view kind);

/// Canonical text form of a JSON value (two-space indent, trailing newline).
std::string dump_json(const nlohmann::json& j);

}  // namespace gq::detail
