#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "ismell/backend.hpp"
#include "ismell/corpus.hpp"
#include "ismell/result.hpp"

namespace ismell::filter {

struct LanguageRule {
    std::string language;
    std::vector<std::string> full_names;
    std::vector<std::string> abbreviations;
    std::vector<std::string> extensions;  // each begins with "."
    // Names that double as everyday words ("go", "c", "r"). Name and
    // abbreviation hits for these entries only count when the conversation
    // also contains a code fence or one of the entry's file extensions.
    bool collision_risk = false;
};

struct LanguageRuleSet {
    std::vector<LanguageRule> entries;
};

// Frozen 20-language default rule set (TIOBE-style top 20 snapshot). The
// same data ships as data/tiobe20_rules.jsonl for users who want a starting
// point for their own file.
const LanguageRuleSet& default_rules();

std::vector<std::string> validate_rules(const LanguageRuleSet& rules);
Result<LanguageRuleSet> load_rules(const std::filesystem::path& path);
std::string serialize_rules(const LanguageRuleSet& rules);

struct MatchEvidence {
    int turn_index = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string rule;  // "full_name:python", "extension:.py", "fence_hint:go", ...
};

struct FilterVerdict {
    std::string conversation_id;
    bool matched = false;
    std::set<std::string> matched_languages;
    std::vector<MatchEvidence> evidence;  // sorted by (turn, offset, rule)
};

// Deterministic rule-based coding-task match. Case-insensitive, word-bounded
// name matching; extension and fence-hint hits always count.
FilterVerdict match_coding(const corpus::Conversation& c, const LanguageRuleSet& rules);

struct DisentangleOutcome {
    std::vector<corpus::Conversation> parts;  // >= 1; content verbatim from input
    bool split_applied = false;
    std::vector<std::string> warnings;
};

inline constexpr double kDisentangleTemperature = 1.0;

// Splits a multi-topic conversation into single-topic ones. The backend only
// assigns turns to topics; partitioning happens locally so output text is
// verbatim. Invalid assignments fall back to the unsplit conversation with a
// warning; backend failure is an error carrying the conversation id.
Result<DisentangleOutcome> disentangle(const corpus::Conversation& c,
                                       backend::ChatBackend& be,
                                       const std::string& model_id = "disentangler",
                                       double temperature = kDisentangleTemperature);

enum class Stage { pre, post };

struct CountReport {
    std::size_t total = 0;
    std::size_t kept = 0;
    std::size_t single_turn = 0;  // over kept
    std::size_t multi_turn = 0;   // over kept
    std::size_t disentangled_outputs = 0;
    std::vector<std::string> warnings;
};

struct FilterResult {
    std::vector<corpus::Conversation> kept;
    CountReport stats;
};

// Stage pre: rule match only. Stage post: disentangle (backend required)
// then re-apply the rule match to each part. Per-conversation backend
// failures become warnings, never batch aborts.
FilterResult filter_corpus(const std::vector<corpus::Conversation>& corpus,
                           const LanguageRuleSet& rules,
                           backend::ChatBackend* be,
                           Stage stage,
                           const std::string& disentangle_model = "disentangler");

backend::Json count_report_to_json(const CountReport& stats);

}  // namespace ismell::filter
