#include "ismell/config.hpp"

#include <cstdlib>

#include "ismell/jsonio.hpp"

namespace ismell::config {

using jsonio::Json;

namespace {

Error unknown_key(const std::string& ptr, const std::string& key) {
    return Error{Error::Kind::validation, ptr + "/" + key + ": unknown key"};
}

Error bad_type(const std::string& ptr, const std::string& key, const char* expected) {
    return Error{Error::Kind::validation,
                 ptr + "/" + key + ": expected " + std::string(expected)};
}

std::optional<Error> parse_detection(const Json& j, detector::DetectionConfig& out) {
    for (const auto& [key, value] : j.items()) {
        if (key == "enabled_smells") {
            if (!value.is_array()) return bad_type("/detection", key, "array of smell names");
            for (const Json& name : value) {
                if (!name.is_string()) {
                    return bad_type("/detection", key, "array of smell names");
                }
                auto smell = taxonomy::smell_from_name(name.get<std::string>());
                if (!smell) {
                    return Error{Error::Kind::validation,
                                 "/detection/enabled_smells: unknown smell " +
                                     name.get<std::string>()};
                }
                out.enabled_smells.insert(*smell);
            }
        } else if (key == "repetition_threshold") {
            if (!value.is_number()) return bad_type("/detection", key, "number");
            out.repetition_threshold = value.get<double>();
        } else if (key == "judge_model") {
            if (!value.is_string()) return bad_type("/detection", key, "string");
            out.judge_model = value.get<std::string>();
        } else if (key == "judge_temperature") {
            if (!value.is_number()) return bad_type("/detection", key, "number");
            out.judge_temperature = value.get<double>();
        } else if (key == "heuristics_only") {
            if (!value.is_boolean()) return bad_type("/detection", key, "boolean");
            out.heuristics_only = value.get<bool>();
        } else {
            return unknown_key("/detection", key);
        }
    }
    return std::nullopt;
}

std::optional<Error> parse_session(const Json& j, harness::SessionConfig& out) {
    for (const auto& [key, value] : j.items()) {
        if (key == "max_turns") {
            if (!value.is_number_integer()) return bad_type("/session", key, "integer");
            out.max_turns = value.get<int>();
        } else if (key == "success_threshold") {
            if (!value.is_number_integer()) return bad_type("/session", key, "integer");
            out.success_threshold = value.get<int>();
        } else if (key == "ince_enabled") {
            if (!value.is_boolean()) return bad_type("/session", key, "boolean");
            out.ince_enabled = value.get<bool>();
        } else if (key == "generator_model") {
            if (!value.is_string()) return bad_type("/session", key, "string");
            out.generator_model = value.get<std::string>();
        } else if (key == "simulator_model") {
            if (!value.is_string()) return bad_type("/session", key, "string");
            out.simulator_model = value.get<std::string>();
        } else if (key == "oracle_model") {
            if (!value.is_string()) return bad_type("/session", key, "string");
            out.oracle_model = value.get<std::string>();
        } else if (key == "ince_model") {
            if (!value.is_string()) return bad_type("/session", key, "string");
            out.ince_model = value.get<std::string>();
        } else if (key == "generator_temperature") {
            if (!value.is_number()) return bad_type("/session", key, "number");
            out.generator_temperature = value.get<double>();
        } else if (key == "simulator_temperature") {
            if (!value.is_number()) return bad_type("/session", key, "number");
            out.simulator_temperature = value.get<double>();
        } else if (key == "oracle_temperature") {
            if (!value.is_number()) return bad_type("/session", key, "number");
            out.oracle_temperature = value.get<double>();
        } else if (key == "seed") {
            if (value.is_null()) {
                out.seed = std::nullopt;
            } else if (value.is_number_integer()) {
                out.seed = value.get<long long>();
            } else {
                return bad_type("/session", key, "integer or null");
            }
        } else if (key == "checklist_position") {
            if (!value.is_string()) return bad_type("/session", key, "string");
            const std::string pos = value.get<std::string>();
            if (pos == "before_instruction") {
                out.checklist_position = ince::IncConfig::Position::before_instruction;
            } else if (pos == "before_history") {
                out.checklist_position = ince::IncConfig::Position::before_history;
            } else {
                return Error{Error::Kind::validation,
                             "/session/checklist_position: unknown position " + pos};
            }
        } else {
            return unknown_key("/session", key);
        }
    }
    return std::nullopt;
}

}  // namespace

Result<AppConfig> parse_app_config(const std::string& text) {
    auto parsed = jsonio::parse_json(text, "config");
    if (!parsed) return parsed.error();
    const Json& j = parsed.value();
    if (!j.is_object()) return Error{Error::Kind::parse, "config is not an object"};

    AppConfig cfg;
    // The models map is applied before the detection/session blocks so the
    // blocks can still override individual roles.
    if (j.contains("models")) {
        if (!j["models"].is_object()) return bad_type("", "models", "object");
        for (const auto& [role, model] : j["models"].items()) {
            if (!model.is_string()) {
                return Error{Error::Kind::validation, "/models/" + role + ": expected string"};
            }
            cfg.models[role] = model.get<std::string>();
        }
        auto apply = [&](const char* role, std::string& target) {
            auto it = cfg.models.find(role);
            if (it != cfg.models.end()) target = it->second;
        };
        apply("generator", cfg.session.generator_model);
        apply("simulator", cfg.session.simulator_model);
        apply("oracle", cfg.session.oracle_model);
        apply("ince", cfg.session.ince_model);
        apply("judge", cfg.detection.judge_model);
    }

    for (const auto& [key, value] : j.items()) {
        if (key == "endpoint") {
            if (!value.is_string()) return bad_type("", key, "string");
            cfg.endpoint = value.get<std::string>();
        } else if (key == "api_key_env") {
            if (!value.is_string()) return bad_type("", key, "string");
            cfg.api_key_env = value.get<std::string>();
        } else if (key == "models") {
            // handled above
        } else if (key == "detection") {
            if (!value.is_object()) return bad_type("", key, "object");
            if (auto err = parse_detection(value, cfg.detection)) return *err;
        } else if (key == "session") {
            if (!value.is_object()) return bad_type("", key, "object");
            if (auto err = parse_session(value, cfg.session)) return *err;
        } else if (key == "jobs") {
            if (!value.is_number_integer() || value.get<int>() < 1) {
                return Error{Error::Kind::validation, "/jobs: expected positive integer"};
            }
            cfg.jobs = value.get<int>();
        } else {
            return unknown_key("", key);
        }
    }

    for (const std::string& v : detector::validate_config(cfg.detection)) {
        return Error{Error::Kind::validation, "/detection: " + v};
    }
    for (const std::string& v : harness::validate_session_config(cfg.session)) {
        return Error{Error::Kind::validation, "/session: " + v};
    }
    return cfg;
}

Result<AppConfig> load_app_config(const std::filesystem::path& path) {
    auto text = jsonio::read_file(path);
    if (!text) return text.error();
    auto cfg = parse_app_config(text.value());
    if (!cfg) {
        Error err = cfg.error();
        err.message = path.string() + ": " + err.message;
        return err;
    }
    return cfg;
}

std::string resolve_api_key(const AppConfig& cfg) {
    const char* value = std::getenv(cfg.api_key_env.c_str());
    return value == nullptr ? std::string() : std::string(value);
}

}  // namespace ismell::config
