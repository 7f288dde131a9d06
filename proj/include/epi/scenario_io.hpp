#pragma once

#include "epi/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace epi {

/// Loads a scenario from a JSON file. n_override > 0 replaces the grid size
/// of interval domains. The format is documented in docs/scenario-format.md.
Scenario load_scenario(const std::string& path, Eigen::Index n_override = 0);

/// Same, from an already parsed document (used by tests and sweeps).
Scenario scenario_from_json(const nlohmann::json& doc, Eigen::Index n_override = 0);

/// Atomic text write: temp file in the same directory, then rename.
void write_text_atomic(const std::string& path, const std::string& content);

/// JSON serialization with 17 significant digits, written atomically.
void write_json_atomic(const std::string& path, const nlohmann::json& doc);

/// FNV-1a hash of the canonical (sorted-key, compact) dump of a config.
std::uint64_t config_hash(const nlohmann::json& doc);

}  // namespace epi
