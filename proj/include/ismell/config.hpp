#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "ismell/detector.hpp"
#include "ismell/harness.hpp"
#include "ismell/result.hpp"

namespace ismell::config {

// Application-wide configuration, loaded from one JSON file. Credentials
// never live in the file itself; `api_key_env` names the environment
// variable that holds the key.
struct AppConfig {
    std::string endpoint;  // empty -> no live backend configured
    std::string api_key_env = "ISMELL_API_KEY";
    std::map<std::string, std::string> models;  // role -> model id
    detector::DetectionConfig detection;
    harness::SessionConfig session;
    int jobs = 1;
};

// Strict loader: unknown keys are rejected with their JSON-pointer location.
Result<AppConfig> load_app_config(const std::filesystem::path& path);
Result<AppConfig> parse_app_config(const std::string& text);

// Resolved API key from the configured environment variable ("" if unset).
std::string resolve_api_key(const AppConfig& cfg);

}  // namespace ismell::config
