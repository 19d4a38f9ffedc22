#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcfl/federation.hpp"

namespace dcfl {

/// Sets one key. Keys are case-sensitive; aliases map to canonical names
/// (e.g. clients -> K, rounds -> T, eps -> epsilon). Unknown keys throw
/// ConfigError; unparsable values throw ValidationError naming the key.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Canonical name for a key or alias; empty if unknown.
std::string canonical_key(std::string_view key);

/// All canonical keys in documentation order.
const std::vector<std::string>& config_keys();

/// `key = value` lines; blank lines and text after '#' ignored. Not
/// validated, so flag overrides can be applied first.
ExperimentConfig parse_config_text(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Canonical (key, value) pairs; parsing them back yields an equal config.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);
std::string to_config_text(const ExperimentConfig& cfg);

/// Shortest round-tripping decimal form.
std::string format_double(double v);

}  // namespace dcfl
