#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ismell/result.hpp"

namespace ismell::backend {

using Json = nlohmann::ordered_json;

enum class MsgRole { system, user, assistant };

std::string_view msg_role_name(MsgRole r);
std::optional<MsgRole> msg_role_from_name(std::string_view name);

struct Message {
    MsgRole role = MsgRole::user;
    std::string content;

    friend bool operator==(const Message&, const Message&) = default;
};

struct ChatRequest {
    std::vector<Message> messages;
    double temperature = 0.0;
    std::string model_id;
    int max_output_tokens = 4096;
    std::optional<Json> structured_output_schema;
};

enum class FinishReason { complete, truncated, refused, error };

std::string_view finish_reason_name(FinishReason f);
std::optional<FinishReason> finish_reason_from_name(std::string_view name);

struct Usage {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;
};

struct ChatResponse {
    std::string content;
    FinishReason finish_reason = FinishReason::complete;
    Usage usage;
    long long latency_ms = 0;
};

// Stable identity of a request: FNV-1a-64 over model id, temperature and the
// newline-normalized message list. Whitespace differences (other than \r\n
// vs \n) produce distinct fingerprints on purpose.
std::string fingerprint(const ChatRequest& req);

// Short human-readable request summary recorded next to cassette entries.
std::string request_digest(const ChatRequest& req);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual Result<ChatResponse> complete(const ChatRequest& req) = 0;
    virtual std::string name() const { return "backend"; }
};

// ---------------------------------------------------------------------------
// Cassette record/replay
// ---------------------------------------------------------------------------

enum class CassetteMode { strict_sequence, fingerprint };

struct CassetteEntry {
    std::optional<long long> seq;
    std::optional<std::string> fingerprint;
    std::string request_digest;
    ChatResponse response;
};

struct Cassette {
    CassetteMode mode = CassetteMode::strict_sequence;
    std::vector<CassetteEntry> entries;
};

Result<Cassette> load_cassette(const std::filesystem::path& path);

// Deterministic replay backend. strict_sequence consumes entries in order,
// verifying fingerprints when an entry carries one; fingerprint mode keys on
// the request fingerprint and entries are reusable.
class CassetteBackend : public ChatBackend {
public:
    explicit CassetteBackend(Cassette cassette);
    static Result<std::shared_ptr<CassetteBackend>> open(const std::filesystem::path& path);

    Result<ChatResponse> complete(const ChatRequest& req) override;
    std::string name() const override { return "cassette"; }
    CassetteMode mode() const { return cassette_.mode; }
    std::size_t remaining() const;

private:
    Cassette cassette_;
    std::map<std::string, ChatResponse> by_fingerprint_;
    std::size_t cursor_ = 0;
    mutable std::mutex mu_;
};

// Tees every completion through `inner` into a cassette file, one JSONL
// entry per call, flushed immediately.
class RecordingBackend : public ChatBackend {
public:
    RecordingBackend(std::shared_ptr<ChatBackend> inner, const std::filesystem::path& path);
    ~RecordingBackend() override;

    Result<ChatResponse> complete(const ChatRequest& req) override;
    std::string name() const override { return "recording(" + inner_->name() + ")"; }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::filesystem::path path_;
    long long next_seq_ = 1;
    std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Live HTTP backend (OpenAI-compatible chat completions)
// ---------------------------------------------------------------------------

struct HttpReply {
    int status = 0;
    std::string body;
};

using Header = std::pair<std::string, std::string>;

class Transport {
public:
    virtual ~Transport() = default;
    virtual Result<HttpReply> post(const std::string& path,
                                   const std::vector<Header>& headers,
                                   const std::string& body) = 0;
};

// Thin wrapper over cpp-httplib; `endpoint` looks like
// "https://api.example.com/v1" and the path prefix is preserved.
std::unique_ptr<Transport> make_httplib_transport(const std::string& endpoint);

struct LiveConfig {
    std::string endpoint;
    std::string api_key;        // empty -> no Authorization header
    int max_retries = 3;        // additional attempts after the first
    int backoff_ms = 250;       // doubled per retry
    int max_in_flight = 4;
    double temperature_min = 0.0;
    double temperature_max = 2.0;
};

class HttpBackend : public ChatBackend {
public:
    // The default transport talks to cfg.endpoint; tests inject a fake.
    HttpBackend(LiveConfig cfg, std::unique_ptr<Transport> transport = nullptr);
    ~HttpBackend() override;

    Result<ChatResponse> complete(const ChatRequest& req) override;
    std::string name() const override { return "http"; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Provider-agnostic request/response mapping, kept pure for testing.
Json build_chat_payload(const ChatRequest& req);
Result<ChatResponse> parse_chat_payload(const std::string& body);

// ---------------------------------------------------------------------------
// Structured outputs
// ---------------------------------------------------------------------------

struct StructuredResult {
    Json value;
    int attempts = 1;
};

inline constexpr int kStructuredAttemptCap = 3;

// Extracts the first JSON value from free-form model text (handles fenced
// and prefixed replies). Empty optional when nothing parses.
std::optional<Json> extract_json(const std::string& text);

// Minimal schema check: type / required / properties / items / enum /
// minimum / maximum. Returns violations with JSON-pointer-ish locations.
std::vector<std::string> validate_against_schema(const Json& value, const Json& schema);

// Asks, parses, and on malformed output re-asks with a repair instruction
// appended, up to kStructuredAttemptCap attempts in total. The terminal
// error carries every raw reply.
Result<StructuredResult> complete_structured(ChatBackend& backend,
                                             ChatRequest request,
                                             const Json& schema);

}  // namespace ismell::backend
