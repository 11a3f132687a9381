#pragma once

// Flat key=value run configuration.
//
//   # comment
//   base_lr = 1e-4
//   loss.delta1_mode = fixed
//
// Unknown keys and malformed values raise UsageError naming the key.

#include "transavs/trainer.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace transavs {

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap read_config_file(const std::filesystem::path& path);

/// Applies every entry onto `cfg`; later calls override earlier ones.
void apply_config(TrainConfig& cfg, const ConfigMap& entries);

/// All recognized keys with their current values, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);
std::string format_config(const TrainConfig& cfg);

/// Round-trip-exact text form of a double.
std::string format_double(double value);

}  // namespace transavs
