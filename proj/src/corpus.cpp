#include "ismell/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "ismell/jsonio.hpp"

namespace ismell::corpus {

using jsonio::Json;

std::string_view source_name(Source s) {
    switch (s) {
        case Source::wildchat_like: return "wildchat-like";
        case Source::lmsys_like: return "lmsys-like";
        case Source::synthetic: return "synthetic";
    }
    return "synthetic";
}

std::optional<Source> source_from_name(std::string_view name) {
    if (name == "wildchat-like") return Source::wildchat_like;
    if (name == "lmsys-like") return Source::lmsys_like;
    if (name == "synthetic") return Source::synthetic;
    return std::nullopt;
}

std::string_view role_name(Role r) { return r == Role::user ? "user" : "assistant"; }

std::optional<Role> role_from_name(std::string_view name) {
    if (name == "user") return Role::user;
    if (name == "assistant") return Role::assistant;
    return std::nullopt;
}

namespace {

struct LineRef {
    std::size_t begin = 0;
    std::size_t end = 0;    // exclusive, excludes the newline
    std::size_t next = 0;   // start of the following line
};

bool next_line(std::string_view text, std::size_t pos, LineRef& out) {
    if (pos >= text.size()) return false;
    std::size_t nl = text.find('\n', pos);
    out.begin = pos;
    out.end = (nl == std::string_view::npos) ? text.size() : nl;
    out.next = (nl == std::string_view::npos) ? text.size() : nl + 1;
    return true;
}

std::size_t skip_spaces(std::string_view text, std::size_t pos, std::size_t end) {
    while (pos < end && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    return pos;
}

// Opening fence: >= 3 backticks after optional indentation. Returns the
// offset of the first backtick, or npos.
std::size_t fence_ticks(std::string_view text, const LineRef& line, std::size_t& tick_count) {
    std::size_t p = skip_spaces(text, line.begin, line.end);
    std::size_t ticks = 0;
    while (p + ticks < line.end && text[p + ticks] == '`') ++ticks;
    if (ticks < 3) return std::string_view::npos;
    tick_count = ticks;
    return p;
}

bool is_closing_fence(std::string_view text, const LineRef& line) {
    std::size_t ticks = 0;
    std::size_t p = fence_ticks(text, line, ticks);
    if (p == std::string_view::npos) return false;
    std::size_t rest = skip_spaces(text, p + ticks, line.end);
    return rest == line.end;
}

}  // namespace

CodeExtraction extract_code_blocks(std::string_view content) {
    CodeExtraction out;
    std::size_t scan = 0;
    LineRef line;
    while (next_line(content, scan, line)) {
        std::size_t ticks = 0;
        std::size_t tick_pos = fence_ticks(content, line, ticks);
        if (tick_pos == std::string_view::npos) {
            scan = line.next;
            continue;
        }
        // Opening fence found. Info tag is the remainder of the line.
        std::size_t tag_begin = skip_spaces(content, tick_pos + ticks, line.end);
        std::size_t tag_end = line.end;
        while (tag_end > tag_begin &&
               (content[tag_end - 1] == ' ' || content[tag_end - 1] == '\t' ||
                content[tag_end - 1] == '\r')) {
            --tag_end;
        }
        std::string info_tag(content.substr(tag_begin, tag_end - tag_begin));
        const std::size_t body_start = line.next;

        // Search for the closing fence.
        std::size_t inner = body_start;
        LineRef candidate;
        bool closed = false;
        while (next_line(content, inner, candidate)) {
            if (is_closing_fence(content, candidate)) {
                closed = true;
                break;
            }
            inner = candidate.next;
        }
        if (!closed) {
            out.warnings.push_back("unterminated code fence at offset " +
                                   std::to_string(tick_pos));
            scan = line.next;  // treat the opener as literal text
            continue;
        }

        std::string text(content.substr(body_start, candidate.begin - body_start));
        if (!text.empty() && text.back() == '\n') text.pop_back();
        if (!text.empty() && text.back() == '\r') text.pop_back();

        CodeBlock block;
        if (!info_tag.empty()) {
            // First token of the info tag is the language hint.
            std::size_t sp = info_tag.find_first_of(" \t");
            block.language_hint = (sp == std::string::npos) ? info_tag : info_tag.substr(0, sp);
        }
        block.text = std::move(text);
        block.begin = tick_pos;
        block.end = candidate.end;
        out.blocks.push_back(std::move(block));
        scan = candidate.next;
    }
    return out;
}

Turn Turn::make(int index, Role role, std::string content) {
    Turn t;
    t.index = index;
    t.role = role;
    t.code_blocks = extract_code_blocks(content).blocks;
    t.content = std::move(content);
    return t;
}

int Conversation::user_turn_count() const {
    int n = 0;
    for (const auto& t : turns) {
        if (t.role == Role::user) ++n;
    }
    return n;
}

std::vector<std::string> validate_conversation(const Conversation& c) {
    std::vector<std::string> violations;
    if (c.id.empty()) violations.push_back("id is empty");
    if (c.turns.empty()) violations.push_back("no turns");
    for (std::size_t i = 0; i < c.turns.size(); ++i) {
        const Turn& t = c.turns[i];
        if (t.index != static_cast<int>(i) + 1) {
            violations.push_back("turn " + std::to_string(i + 1) + ": index not contiguous");
        }
        const Role expected = (i % 2 == 0) ? Role::user : Role::assistant;
        if (t.role != expected) {
            violations.push_back("turn " + std::to_string(i + 1) + ": role order");
        }
        if (t.code_blocks != extract_code_blocks(t.content).blocks) {
            violations.push_back("turn " + std::to_string(i + 1) + ": stale code blocks");
        }
    }
    return violations;
}

Result<Conversation> parse_conversation_line(std::string_view line) {
    if (line.size() > kMaxRecordLineBytes) {
        return Error{Error::Kind::parse, "line too large"};
    }
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return Error{Error::Kind::parse, "json"};
    }

    Conversation c;
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
        return Error{Error::Kind::parse, "id"};
    }
    c.id = j["id"].get<std::string>();

    if (j.contains("source") && !j["source"].is_null()) {
        if (!j["source"].is_string()) return Error{Error::Kind::parse, "source"};
        auto src = source_from_name(j["source"].get<std::string>());
        if (!src) return Error{Error::Kind::parse, "source"};
        c.source = *src;
    }
    if (j.contains("model") && !j["model"].is_null()) {
        if (!j["model"].is_string()) return Error{Error::Kind::parse, "model"};
        c.model_name = j["model"].get<std::string>();
    }
    if (j.contains("language_tags")) {
        if (!j["language_tags"].is_array()) return Error{Error::Kind::parse, "language_tags"};
        for (const auto& tag : j["language_tags"]) {
            if (!tag.is_string()) return Error{Error::Kind::parse, "language_tags"};
            c.language_tags.insert(tag.get<std::string>());
        }
    }

    if (!j.contains("turns") || !j["turns"].is_array() || j["turns"].empty()) {
        return Error{Error::Kind::parse, "turns"};
    }
    int index = 0;
    for (const auto& tj : j["turns"]) {
        if (!tj.is_object() || !tj.contains("role") || !tj["role"].is_string()) {
            return Error{Error::Kind::parse, "role"};
        }
        auto role = role_from_name(tj["role"].get<std::string>());
        if (!role) return Error{Error::Kind::parse, "role"};
        if (!tj.contains("content") || !tj["content"].is_string()) {
            return Error{Error::Kind::parse, "content"};
        }
        ++index;
        const Role expected = (index % 2 == 1) ? Role::user : Role::assistant;
        if (*role != expected) {
            return Error{Error::Kind::parse, "role order"};
        }
        c.turns.push_back(Turn::make(index, *role, tj["content"].get<std::string>()));
    }
    return c;
}

ParseReport parse_corpus(std::istream& in) {
    ParseReport report;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;  // blank

        auto parsed = parse_conversation_line(line);
        if (!parsed) {
            report.rejections.push_back({line_no, parsed.error().message, ""});
            ++report.rejected;
            continue;
        }
        Conversation& c = parsed.value();
        if (!seen_ids.insert(c.id).second) {
            report.rejections.push_back({line_no, "duplicate id", c.id});
            ++report.rejected;
            continue;
        }
        for (const Turn& t : c.turns) {
            for (const std::string& w : extract_code_blocks(t.content).warnings) {
                report.warnings.push_back("line " + std::to_string(line_no) + " turn " +
                                          std::to_string(t.index) + ": " + w);
            }
        }
        report.conversations.push_back(std::move(c));
        ++report.accepted;
    }
    return report;
}

Result<ParseReport> parse_corpus_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return Error{Error::Kind::io, "cannot open " + path.string()};
    }
    ParseReport report = parse_corpus(in);
    if (in.bad()) {
        return Error{Error::Kind::io, "read failure on " + path.string()};
    }
    return report;
}

std::string serialize_conversation(const Conversation& c) {
    Json j;
    j["id"] = c.id;
    j["source"] = std::string(source_name(c.source));
    if (c.model_name) j["model"] = *c.model_name;
    Json turns = Json::array();
    for (const Turn& t : c.turns) {
        Json tj;
        tj["role"] = std::string(role_name(t.role));
        tj["content"] = t.content;
        turns.push_back(std::move(tj));
    }
    j["turns"] = std::move(turns);
    if (!c.language_tags.empty()) {
        j["language_tags"] = c.language_tags;  // std::set iterates sorted
    }
    return j.dump();
}

std::optional<Error> write_corpus_file(const std::vector<Conversation>& corpus,
                                       const std::filesystem::path& path) {
    std::string out;
    for (const Conversation& c : corpus) {
        out += serialize_conversation(c);
        out += '\n';
    }
    return jsonio::atomic_write(path, out);
}

}  // namespace ismell::corpus
