#pragma once

#include <filesystem>
#include <string>

#include "touchspot/core.hpp"

namespace CLI {
class App;
}

namespace touchspot {

// Registers one `--<field>` option per SpotConfig field on `app`, writing into `cfg`.
void add_config_options(CLI::App& app, SpotConfig& cfg);

// Key-value text: one `field = value` line per field, `#` starts a comment. Fields not
// named in the text keep their value from `base`.
SpotConfig parse_config_text(const std::string& text, const SpotConfig& base = SpotConfig());
SpotConfig load_config_file(const std::filesystem::path& path, const SpotConfig& base = SpotConfig());
std::string to_config_text(const SpotConfig& cfg);

}  // namespace touchspot
