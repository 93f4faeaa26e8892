#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ismell/result.hpp"

namespace ismell::corpus {

enum class Source { wildchat_like, lmsys_like, synthetic };
enum class Role { user, assistant };

std::string_view source_name(Source s);
std::optional<Source> source_from_name(std::string_view name);
std::string_view role_name(Role r);
std::optional<Role> role_from_name(std::string_view name);

// One triple-backtick fenced region. `begin`/`end` are byte offsets into the
// parent turn content; content.substr(begin, end - begin) reproduces the
// fenced region including both fence lines. `text` is the inner code only.
struct CodeBlock {
    std::optional<std::string> language_hint;
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;

    friend bool operator==(const CodeBlock&, const CodeBlock&) = default;
};

struct CodeExtraction {
    std::vector<CodeBlock> blocks;
    std::vector<std::string> warnings;  // e.g. unterminated fences
};

// Scans for fenced code regions. An opening fence is a line whose first
// non-space characters are at least three backticks; the remainder of the
// line is the info tag (first token becomes the language hint). A closing
// fence is a line containing only backticks. An opening fence with no closer
// is treated as literal text and reported on the warning channel.
CodeExtraction extract_code_blocks(std::string_view content);

struct Turn {
    int index = 0;  // 1-based, contiguous within a conversation
    Role role = Role::user;
    std::string content;
    std::vector<CodeBlock> code_blocks;

    // The only way to build a Turn that honors the blocks-match-content
    // invariant; code_blocks are re-derived from `content`.
    static Turn make(int index, Role role, std::string content);

    friend bool operator==(const Turn&, const Turn&) = default;
};

struct Conversation {
    std::string id;
    Source source = Source::synthetic;
    std::optional<std::string> model_name;
    std::vector<Turn> turns;
    std::set<std::string> language_tags;

    int user_turn_count() const;
    // Multi-turn means at least two user turns.
    bool multi_turn() const { return user_turn_count() >= 2; }

    friend bool operator==(const Conversation&, const Conversation&) = default;
};

// Structural checks: role alternation starting with `user`, contiguous
// 1-based indices, non-empty id. Returns human-readable violations.
std::vector<std::string> validate_conversation(const Conversation& c);

struct RecordRejection {
    std::size_t line_number = 0;  // 1-based
    std::string reason;           // short class, e.g. "role order"
    std::string detail;
};

struct ParseReport {
    std::vector<Conversation> conversations;
    std::vector<RecordRejection> rejections;
    std::vector<std::string> warnings;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
};

inline constexpr std::size_t kMaxRecordLineBytes = 10 * 1024 * 1024;

// Parses one line-delimited record. Turn indices are assigned here.
Result<Conversation> parse_conversation_line(std::string_view line);

// Parses a whole stream of line-delimited records. Ill-formed lines are
// reported and skipped; blank lines are ignored. Duplicate ids within the
// stream reject the later record.
ParseReport parse_corpus(std::istream& in);
Result<ParseReport> parse_corpus_file(const std::filesystem::path& path);

// Canonical single-line serialization (fixed key order, no trailing
// whitespace). parse(serialize(c)) == c for any valid conversation.
std::string serialize_conversation(const Conversation& c);

std::optional<Error> write_corpus_file(const std::vector<Conversation>& corpus,
                                       const std::filesystem::path& path);

}  // namespace ismell::corpus
