#include "ismell/backend.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include "ismell/jsonio.hpp"

namespace ismell::backend {

std::string_view msg_role_name(MsgRole r) {
    switch (r) {
        case MsgRole::system: return "system";
        case MsgRole::user: return "user";
        case MsgRole::assistant: return "assistant";
    }
    return "";
}

std::optional<MsgRole> msg_role_from_name(std::string_view name) {
    if (name == "system") return MsgRole::system;
    if (name == "user") return MsgRole::user;
    if (name == "assistant") return MsgRole::assistant;
    return std::nullopt;
}

std::string_view finish_reason_name(FinishReason f) {
    switch (f) {
        case FinishReason::complete: return "complete";
        case FinishReason::truncated: return "truncated";
        case FinishReason::refused: return "refused";
        case FinishReason::error: return "error";
    }
    return "";
}

std::optional<FinishReason> finish_reason_from_name(std::string_view name) {
    if (name == "complete") return FinishReason::complete;
    if (name == "truncated") return FinishReason::truncated;
    if (name == "refused") return FinishReason::refused;
    if (name == "error") return FinishReason::error;
    return std::nullopt;
}

namespace {

std::string normalize_newlines(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            out += '\n';
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        } else {
            out += text[i];
        }
    }
    return out;
}

std::string format_temperature(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", t);
    return buf;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string single_line_prefix(std::string_view text, std::size_t limit) {
    std::string out;
    for (char c : text.substr(0, limit)) {
        out += (c == '\n' || c == '\r' || c == '\t') ? ' ' : c;
    }
    if (text.size() > limit) out += "...";
    return out;
}

}  // namespace

std::string fingerprint(const ChatRequest& req) {
    // Field separators keep ("ab","c") and ("a","bc") distinct.
    std::uint64_t h = fnv1a64(req.model_id);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(format_temperature(req.temperature), h);
    for (const Message& m : req.messages) {
        h = fnv1a64("\x1e", h);
        h = fnv1a64(msg_role_name(m.role), h);
        h = fnv1a64("\x1f", h);
        h = fnv1a64(normalize_newlines(m.content), h);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string request_digest(const ChatRequest& req) {
    std::string last;
    if (!req.messages.empty()) last = single_line_prefix(req.messages.back().content, 60);
    return "model=" + req.model_id + " temp=" + format_temperature(req.temperature) +
           " messages=" + std::to_string(req.messages.size()) + " last=\"" + last + "\"";
}

// ---------------------------------------------------------------------------
// Cassette
// ---------------------------------------------------------------------------

namespace {

using jsonio::Json;

Json response_to_json(const ChatResponse& r) {
    Json j;
    j["content"] = r.content;
    j["finish_reason"] = std::string(finish_reason_name(r.finish_reason));
    j["prompt_tokens"] = r.usage.prompt_tokens;
    j["completion_tokens"] = r.usage.completion_tokens;
    j["latency_ms"] = r.latency_ms;
    return j;
}

Result<ChatResponse> response_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("content") || !j["content"].is_string()) {
        return Error{Error::Kind::parse, "response.content"};
    }
    ChatResponse r;
    r.content = j["content"].get<std::string>();
    if (j.contains("finish_reason")) {
        if (!j["finish_reason"].is_string()) return Error{Error::Kind::parse, "finish_reason"};
        auto fr = finish_reason_from_name(j["finish_reason"].get<std::string>());
        if (!fr) return Error{Error::Kind::parse, "finish_reason"};
        r.finish_reason = *fr;
    }
    if (j.contains("prompt_tokens") && j["prompt_tokens"].is_number_integer()) {
        r.usage.prompt_tokens = j["prompt_tokens"].get<long long>();
    }
    if (j.contains("completion_tokens") && j["completion_tokens"].is_number_integer()) {
        r.usage.completion_tokens = j["completion_tokens"].get<long long>();
    }
    if (j.contains("latency_ms") && j["latency_ms"].is_number_integer()) {
        r.latency_ms = j["latency_ms"].get<long long>();
    }
    return r;
}

std::string entry_to_line(const CassetteEntry& e) {
    Json j;
    if (e.seq) j["seq"] = *e.seq;
    if (e.fingerprint) j["fingerprint"] = *e.fingerprint;
    j["request_digest"] = e.request_digest;
    j["response"] = response_to_json(e.response);
    return j.dump();
}

}  // namespace

Result<Cassette> load_cassette(const std::filesystem::path& path) {
    auto text = jsonio::read_file(path);
    if (!text) return text.error();

    Cassette cassette;
    bool mode_from_header = false;
    std::vector<std::string> fingerprints;
    for (const auto& [line_no, line] : jsonio::split_jsonl(text.value())) {
        auto parsed = jsonio::parse_json(line, path.string() + ":" + std::to_string(line_no));
        if (!parsed) return parsed.error();
        const Json& j = parsed.value();
        if (!j.is_object()) {
            return Error{Error::Kind::parse,
                         path.string() + ":" + std::to_string(line_no) + ": not an object"};
        }
        if (j.contains("cassette_mode")) {
            if (!j["cassette_mode"].is_string()) {
                return Error{Error::Kind::parse, "cassette_mode must be a string"};
            }
            const std::string mode = j["cassette_mode"].get<std::string>();
            if (mode == "strict_sequence") {
                cassette.mode = CassetteMode::strict_sequence;
            } else if (mode == "fingerprint") {
                cassette.mode = CassetteMode::fingerprint;
            } else {
                return Error{Error::Kind::parse, "unknown cassette_mode " + mode};
            }
            mode_from_header = true;
            continue;
        }

        CassetteEntry e;
        if (j.contains("seq")) {
            if (!j["seq"].is_number_integer()) return Error{Error::Kind::parse, "seq"};
            e.seq = j["seq"].get<long long>();
        }
        if (j.contains("fingerprint")) {
            if (!j["fingerprint"].is_string()) return Error{Error::Kind::parse, "fingerprint"};
            e.fingerprint = j["fingerprint"].get<std::string>();
            fingerprints.push_back(*e.fingerprint);
        }
        if (j.contains("request_digest") && j["request_digest"].is_string()) {
            e.request_digest = j["request_digest"].get<std::string>();
        }
        if (!j.contains("response")) {
            return Error{Error::Kind::parse,
                         path.string() + ":" + std::to_string(line_no) + ": missing response"};
        }
        auto resp = response_from_json(j["response"]);
        if (!resp) {
            return Error{Error::Kind::parse, path.string() + ":" + std::to_string(line_no) +
                                                 ": " + resp.error().message};
        }
        e.response = std::move(resp.value());
        cassette.entries.push_back(std::move(e));
    }

    const bool all_unique = [&] {
        if (fingerprints.size() != cassette.entries.size()) return false;
        std::set<std::string> seen(fingerprints.begin(), fingerprints.end());
        return seen.size() == fingerprints.size();
    }();
    if (!mode_from_header) {
        cassette.mode = all_unique ? CassetteMode::fingerprint : CassetteMode::strict_sequence;
    }
    if (cassette.mode == CassetteMode::fingerprint && !all_unique) {
        return Error{Error::Kind::parse,
                     "fingerprint-mode cassette requires unique fingerprints on every entry"};
    }
    return cassette;
}

CassetteBackend::CassetteBackend(Cassette cassette) : cassette_(std::move(cassette)) {
    if (cassette_.mode == CassetteMode::fingerprint) {
        for (const CassetteEntry& e : cassette_.entries) {
            by_fingerprint_.emplace(*e.fingerprint, e.response);
        }
    }
}

Result<std::shared_ptr<CassetteBackend>> CassetteBackend::open(
    const std::filesystem::path& path) {
    auto cassette = load_cassette(path);
    if (!cassette) return cassette.error();
    return std::make_shared<CassetteBackend>(std::move(cassette.value()));
}

Result<ChatResponse> CassetteBackend::complete(const ChatRequest& req) {
    const std::string fp = fingerprint(req);
    ChatResponse response;
    {
        std::lock_guard lock(mu_);
        if (cassette_.mode == CassetteMode::strict_sequence) {
            if (cursor_ >= cassette_.entries.size()) {
                return Error{Error::Kind::cassette_miss,
                             "cassette exhausted; next request fingerprint " + fp};
            }
            const CassetteEntry& e = cassette_.entries[cursor_];
            if (e.fingerprint && *e.fingerprint != fp) {
                return Error{Error::Kind::cassette_miss,
                             "cassette entry " + std::to_string(cursor_ + 1) + " expects " +
                                 *e.fingerprint + ", request fingerprint " + fp};
            }
            ++cursor_;
            response = e.response;
        } else {
            auto it = by_fingerprint_.find(fp);
            if (it == by_fingerprint_.end()) {
                return Error{Error::Kind::cassette_miss, "no cassette entry for fingerprint " + fp};
            }
            response = it->second;
        }
    }
    if (response.finish_reason == FinishReason::error) {
        // Scripted provider failure.
        return Error{Error::Kind::backend,
                     response.content.empty() ? "scripted backend error" : response.content};
    }
    return response;
}

std::size_t CassetteBackend::remaining() const {
    std::lock_guard lock(mu_);
    if (cassette_.mode == CassetteMode::strict_sequence) {
        return cassette_.entries.size() - cursor_;
    }
    return by_fingerprint_.size();
}

RecordingBackend::RecordingBackend(std::shared_ptr<ChatBackend> inner,
                                   const std::filesystem::path& path)
    : inner_(std::move(inner)), path_(path) {
    if (path_.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path_.parent_path(), ec);
    }
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    out << R"({"cassette_mode":"strict_sequence"})" << "\n";
}

RecordingBackend::~RecordingBackend() = default;

Result<ChatResponse> RecordingBackend::complete(const ChatRequest& req) {
    auto result = inner_->complete(req);
    CassetteEntry e;
    e.request_digest = request_digest(req);
    e.fingerprint = fingerprint(req);
    if (result) {
        e.response = result.value();
    } else {
        e.response.finish_reason = FinishReason::error;
        e.response.content = result.error().message;
    }
    {
        std::lock_guard lock(mu_);
        e.seq = next_seq_++;
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        out << entry_to_line(e) << "\n";
        out.flush();
    }
    return result;
}

// ---------------------------------------------------------------------------
// Live HTTP backend
// ---------------------------------------------------------------------------

Json build_chat_payload(const ChatRequest& req) {
    Json j;
    j["model"] = req.model_id;
    Json messages = Json::array();
    for (const Message& m : req.messages) {
        Json mj;
        mj["role"] = std::string(msg_role_name(m.role));
        mj["content"] = m.content;
        messages.push_back(std::move(mj));
    }
    j["messages"] = std::move(messages);
    j["temperature"] = req.temperature;
    j["max_tokens"] = req.max_output_tokens;
    if (req.structured_output_schema) {
        Json wrapper;
        wrapper["type"] = "json_schema";
        wrapper["json_schema"] = Json{{"name", "response"},
                                      {"schema", *req.structured_output_schema}};
        j["response_format"] = std::move(wrapper);
    }
    return j;
}

Result<ChatResponse> parse_chat_payload(const std::string& body) {
    auto parsed = jsonio::parse_json(body, "chat completion body");
    if (!parsed) return parsed.error();
    const Json& j = parsed.value();
    if (j.is_object() && j.contains("error")) {
        std::string msg = "provider error";
        if (j["error"].is_object() && j["error"].contains("message") &&
            j["error"]["message"].is_string()) {
            msg = j["error"]["message"].get<std::string>();
        }
        return Error{Error::Kind::backend, msg};
    }
    if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() ||
        j["choices"].empty()) {
        return Error{Error::Kind::parse, "chat completion body has no choices"};
    }
    const Json& choice = j["choices"][0];
    if (!choice.is_object() || !choice.contains("message") ||
        !choice["message"].is_object() || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string()) {
        return Error{Error::Kind::parse, "chat completion body has no message content"};
    }
    ChatResponse r;
    r.content = choice["message"]["content"].get<std::string>();
    std::string reason = "stop";
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
        reason = choice["finish_reason"].get<std::string>();
    }
    if (reason == "stop") {
        r.finish_reason = FinishReason::complete;
    } else if (reason == "length") {
        r.finish_reason = FinishReason::truncated;
    } else if (reason == "content_filter") {
        r.finish_reason = FinishReason::refused;
    } else {
        r.finish_reason = FinishReason::complete;
    }
    if (j.contains("usage") && j["usage"].is_object()) {
        const Json& u = j["usage"];
        if (u.contains("prompt_tokens") && u["prompt_tokens"].is_number_integer()) {
            r.usage.prompt_tokens = u["prompt_tokens"].get<long long>();
        }
        if (u.contains("completion_tokens") && u["completion_tokens"].is_number_integer()) {
            r.usage.completion_tokens = u["completion_tokens"].get<long long>();
        }
    }
    return r;
}

struct HttpBackend::Impl {
    LiveConfig cfg;
    std::unique_ptr<Transport> transport;
    std::mutex mu;
    std::condition_variable cv;
    int in_flight = 0;
};

HttpBackend::HttpBackend(LiveConfig cfg, std::unique_ptr<Transport> transport)
    : impl_(std::make_unique<Impl>()) {
    impl_->cfg = std::move(cfg);
    impl_->transport =
        transport ? std::move(transport) : make_httplib_transport(impl_->cfg.endpoint);
}

HttpBackend::~HttpBackend() = default;

Result<ChatResponse> HttpBackend::complete(const ChatRequest& req) {
    const LiveConfig& cfg = impl_->cfg;
    if (req.messages.empty()) {
        return Error{Error::Kind::validation, "request has no messages"};
    }
    if (req.temperature < cfg.temperature_min || req.temperature > cfg.temperature_max) {
        return Error{Error::Kind::validation,
                     "temperature " + format_temperature(req.temperature) + " outside [" +
                         format_temperature(cfg.temperature_min) + ", " +
                         format_temperature(cfg.temperature_max) + "]"};
    }

    {
        std::unique_lock lock(impl_->mu);
        impl_->cv.wait(lock, [&] { return impl_->in_flight < cfg.max_in_flight; });
        ++impl_->in_flight;
    }
    struct Release {
        Impl* impl;
        ~Release() {
            std::lock_guard lock(impl->mu);
            --impl->in_flight;
            impl->cv.notify_one();
        }
    } release{impl_.get()};

    const std::string body = build_chat_payload(req).dump();
    std::vector<Header> headers{{"Content-Type", "application/json"}};
    if (!cfg.api_key.empty()) {
        headers.emplace_back("Authorization", "Bearer " + cfg.api_key);
    }

    Error last{Error::Kind::backend, "no attempt made"};
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0 && cfg.backoff_ms > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(cfg.backoff_ms * (1LL << (attempt - 1))));
        }
        const auto start = std::chrono::steady_clock::now();
        auto reply = impl_->transport->post("/chat/completions", headers, body);
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        if (!reply) {
            last = reply.error();
            continue;  // transport failure, retryable
        }
        const int status = reply.value().status;
        if (status == 429 || status >= 500) {
            last = Error{Error::Kind::backend, "http " + std::to_string(status) + ": " +
                                                   single_line_prefix(reply.value().body, 120)};
            continue;
        }
        if (status != 200) {
            return Error{Error::Kind::backend, "http " + std::to_string(status) + ": " +
                                                   single_line_prefix(reply.value().body, 120)};
        }
        auto parsed = parse_chat_payload(reply.value().body);
        if (!parsed) return parsed.error();
        parsed.value().latency_ms = elapsed;
        return parsed;
    }
    return last;
}

// ---------------------------------------------------------------------------
// Structured outputs
// ---------------------------------------------------------------------------

std::optional<Json> extract_json(const std::string& text) {
    for (std::size_t start = 0; start < text.size(); ++start) {
        const char open = text[start];
        if (open != '{' && open != '[') continue;
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{' || c == '[') {
                ++depth;
            } else if (c == '}' || c == ']') {
                --depth;
                if (depth == 0) {
                    Json j = Json::parse(text.substr(start, i - start + 1), nullptr, false);
                    if (!j.is_discarded()) return j;
                    break;  // unbalanced quoting etc.; try the next start
                }
            }
        }
    }
    return std::nullopt;
}

namespace {

bool type_matches(const Json& value, const std::string& type) {
    if (type == "object") return value.is_object();
    if (type == "array") return value.is_array();
    if (type == "string") return value.is_string();
    if (type == "integer") return value.is_number_integer();
    if (type == "number") return value.is_number();
    if (type == "boolean") return value.is_boolean();
    if (type == "null") return value.is_null();
    return false;
}

void validate_schema_at(const Json& value, const Json& schema, const std::string& ptr,
                        std::vector<std::string>& out) {
    const std::string where = ptr.empty() ? "(root)" : ptr;
    if (!schema.is_object()) return;

    if (schema.contains("type")) {
        const Json& t = schema["type"];
        bool ok = false;
        if (t.is_string()) {
            ok = type_matches(value, t.get<std::string>());
        } else if (t.is_array()) {
            for (const Json& alt : t) {
                if (alt.is_string() && type_matches(value, alt.get<std::string>())) ok = true;
            }
        }
        if (!ok) {
            out.push_back(where + ": expected type " + t.dump());
            return;  // further keyword checks would be noise
        }
    }
    if (schema.contains("enum") && schema["enum"].is_array()) {
        bool ok = false;
        for (const Json& candidate : schema["enum"]) {
            if (candidate == value) ok = true;
        }
        if (!ok) out.push_back(where + ": not one of " + schema["enum"].dump());
    }
    if (value.is_number()) {
        if (schema.contains("minimum") && schema["minimum"].is_number() &&
            value.get<double>() < schema["minimum"].get<double>()) {
            out.push_back(where + ": below minimum " + schema["minimum"].dump());
        }
        if (schema.contains("maximum") && schema["maximum"].is_number() &&
            value.get<double>() > schema["maximum"].get<double>()) {
            out.push_back(where + ": above maximum " + schema["maximum"].dump());
        }
    }
    if (value.is_object()) {
        if (schema.contains("required") && schema["required"].is_array()) {
            for (const Json& name : schema["required"]) {
                if (name.is_string() && !value.contains(name.get<std::string>())) {
                    out.push_back(where + ": missing required " + name.get<std::string>());
                }
            }
        }
        if (schema.contains("properties") && schema["properties"].is_object()) {
            for (const auto& [key, sub] : schema["properties"].items()) {
                if (value.contains(key)) {
                    validate_schema_at(value[key], sub, ptr + "/" + key, out);
                }
            }
        }
    }
    if (value.is_array() && schema.contains("items")) {
        for (std::size_t i = 0; i < value.size(); ++i) {
            validate_schema_at(value[i], schema["items"], ptr + "/" + std::to_string(i), out);
        }
    }
}

}  // namespace

std::vector<std::string> validate_against_schema(const Json& value, const Json& schema) {
    std::vector<std::string> violations;
    validate_schema_at(value, schema, "", violations);
    return violations;
}

Result<StructuredResult> complete_structured(ChatBackend& backend, ChatRequest request,
                                             const Json& schema) {
    request.structured_output_schema = schema;
    std::vector<std::string> raw_texts;
    for (int attempt = 1; attempt <= kStructuredAttemptCap; ++attempt) {
        auto response = backend.complete(request);
        if (!response) return response.error();
        const std::string& raw = response.value().content;
        raw_texts.push_back(raw);

        auto value = extract_json(raw);
        std::vector<std::string> violations;
        if (value) {
            violations = validate_against_schema(*value, schema);
            if (violations.empty()) return StructuredResult{std::move(*value), attempt};
        }

        std::string repair =
            "Your previous reply was not a valid JSON value for the required schema.";
        if (!violations.empty()) {
            repair += " Problems:";
            for (const std::string& v : violations) repair += " " + v + ";";
        }
        repair +=
            " Reply again with exactly one JSON value matching the schema and no "
            "surrounding prose.";
        request.messages.push_back({MsgRole::assistant, raw});
        request.messages.push_back({MsgRole::user, repair});
    }
    Error err{Error::Kind::structured_output,
              "no schema-valid reply after " + std::to_string(kStructuredAttemptCap) +
                  " attempts"};
    err.raw_texts = std::move(raw_texts);
    return err;
}

}  // namespace ismell::backend
