#include "ismell/filter.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "ismell/jsonio.hpp"

namespace ismell::filter {

using backend::Json;

const LanguageRuleSet& default_rules() {
    // Frozen snapshot of a TIOBE-style top 20. Collision-risk entries are the
    // ones whose names double as everyday words.
    static const LanguageRuleSet rules{{
        {"Python", {"python"}, {}, {".py"}, false},
        {"C", {"c"}, {}, {".c", ".h"}, true},
        {"C++", {"c++", "cpp", "cplusplus"}, {}, {".cpp", ".cc", ".cxx", ".hpp"}, false},
        {"Java", {"java"}, {}, {".java"}, false},
        {"C#", {"c#", "csharp"}, {}, {".cs"}, false},
        {"JavaScript", {"javascript"}, {"js"}, {".js", ".mjs"}, false},
        {"SQL", {"sql"}, {}, {".sql"}, false},
        {"Visual Basic", {"visual basic", "vb.net"}, {"vb"}, {".vb"}, false},
        {"Go", {"go", "golang"}, {}, {".go"}, true},
        {"Fortran", {"fortran"}, {}, {".f90", ".f95", ".f"}, false},
        {"Delphi/Object Pascal", {"delphi", "object pascal", "pascal"}, {}, {".pas"}, false},
        {"MATLAB", {"matlab"}, {}, {".m"}, false},
        {"PHP", {"php"}, {}, {".php"}, false},
        {"Rust", {"rust"}, {}, {".rs"}, false},
        {"R", {"r"}, {}, {".r"}, true},
        {"Ruby", {"ruby"}, {}, {".rb"}, false},
        {"Swift", {"swift"}, {}, {".swift"}, true},
        {"Kotlin", {"kotlin"}, {}, {".kt", ".kts"}, false},
        {"COBOL", {"cobol"}, {}, {".cob", ".cbl"}, false},
        {"Assembly", {"assembly"}, {"asm"}, {".asm", ".s"}, true},
    }};
    return rules;
}

std::vector<std::string> validate_rules(const LanguageRuleSet& rules) {
    std::vector<std::string> violations;
    std::set<std::string> seen;
    for (const LanguageRule& r : rules.entries) {
        if (r.language.empty()) violations.push_back("rule with empty language name");
        if (!seen.insert(r.language).second) {
            violations.push_back("duplicate language " + r.language);
        }
        for (const std::string& n : r.full_names) {
            if (n.empty()) violations.push_back(r.language + ": empty full name");
        }
        for (const std::string& n : r.abbreviations) {
            if (n.empty()) violations.push_back(r.language + ": empty abbreviation");
        }
        for (const std::string& e : r.extensions) {
            if (e.size() < 2 || e[0] != '.') {
                violations.push_back(r.language + ": extension must start with '.': " + e);
            }
        }
        if (r.full_names.empty() && r.abbreviations.empty() && r.extensions.empty()) {
            violations.push_back(r.language + ": rule matches nothing");
        }
    }
    return violations;
}

std::string serialize_rules(const LanguageRuleSet& rules) {
    std::string out;
    for (const LanguageRule& r : rules.entries) {
        Json j;
        j["language"] = r.language;
        j["full_names"] = r.full_names;
        j["abbreviations"] = r.abbreviations;
        j["extensions"] = r.extensions;
        j["collision_risk"] = r.collision_risk;
        out += j.dump();
        out += '\n';
    }
    return out;
}

Result<LanguageRuleSet> load_rules(const std::filesystem::path& path) {
    auto text = jsonio::read_file(path);
    if (!text) return text.error();
    LanguageRuleSet rules;
    for (const auto& [line_no, line] : jsonio::split_jsonl(text.value())) {
        const std::string where = path.string() + ":" + std::to_string(line_no);
        auto parsed = jsonio::parse_json(line, where);
        if (!parsed) return parsed.error();
        const Json& j = parsed.value();
        if (!j.is_object()) return Error{Error::Kind::parse, where + ": not an object"};
        LanguageRule r;
        for (const auto& [key, value] : j.items()) {
            if (key == "language" && value.is_string()) {
                r.language = value.get<std::string>();
            } else if (key == "full_names" && value.is_array()) {
                r.full_names = value.get<std::vector<std::string>>();
            } else if (key == "abbreviations" && value.is_array()) {
                r.abbreviations = value.get<std::vector<std::string>>();
            } else if (key == "extensions" && value.is_array()) {
                r.extensions = value.get<std::vector<std::string>>();
            } else if (key == "collision_risk" && value.is_boolean()) {
                r.collision_risk = value.get<bool>();
            } else {
                return Error{Error::Kind::parse, where + ": unknown or mistyped key " + key};
            }
        }
        rules.entries.push_back(std::move(r));
    }
    auto violations = validate_rules(rules);
    if (!violations.empty()) {
        return Error{Error::Kind::validation, path.string() + ": " + violations.front()};
    }
    return rules;
}

namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Case-insensitive scan with word boundaries required only at edges that end
// in word characters, so "c++" tolerates a following digit while "java"
// refuses to match inside "javascript".
void find_word_bounded(const std::string& hay_lower, const std::string& needle_lower,
                       int turn_index, const std::string& rule_tag,
                       std::vector<MatchEvidence>& out) {
    if (needle_lower.empty()) return;
    const bool left_bound = is_word_char(needle_lower.front());
    const bool right_bound = is_word_char(needle_lower.back());
    std::size_t pos = 0;
    while ((pos = hay_lower.find(needle_lower, pos)) != std::string::npos) {
        const std::size_t end = pos + needle_lower.size();
        const bool left_ok = !left_bound || pos == 0 || !is_word_char(hay_lower[pos - 1]);
        const bool right_ok =
            !right_bound || end == hay_lower.size() || !is_word_char(hay_lower[end]);
        if (left_ok && right_ok) {
            out.push_back({turn_index, pos, end, rule_tag});
        }
        ++pos;
    }
}

bool hint_matches(const std::string& hint_lower, const LanguageRule& r) {
    for (const std::string& n : r.full_names) {
        if (to_lower(n) == hint_lower) return true;
    }
    for (const std::string& n : r.abbreviations) {
        if (to_lower(n) == hint_lower) return true;
    }
    for (const std::string& e : r.extensions) {
        if (to_lower(e).substr(1) == hint_lower) return true;
    }
    return false;
}

}  // namespace

FilterVerdict match_coding(const corpus::Conversation& c, const LanguageRuleSet& rules) {
    FilterVerdict verdict;
    verdict.conversation_id = c.id;

    bool any_fence = false;
    for (const corpus::Turn& t : c.turns) {
        if (!t.code_blocks.empty()) any_fence = true;
    }

    struct PerRule {
        std::vector<MatchEvidence> gated;  // names and abbreviations
        std::vector<MatchEvidence> hard;   // extensions and fence hints
    };
    std::vector<PerRule> hits(rules.entries.size());

    for (const corpus::Turn& t : c.turns) {
        const std::string lower = to_lower(t.content);
        for (std::size_t ri = 0; ri < rules.entries.size(); ++ri) {
            const LanguageRule& r = rules.entries[ri];
            for (const std::string& n : r.full_names) {
                find_word_bounded(lower, to_lower(n), t.index, "full_name:" + to_lower(n),
                                  hits[ri].gated);
            }
            for (const std::string& n : r.abbreviations) {
                find_word_bounded(lower, to_lower(n), t.index, "abbrev:" + to_lower(n),
                                  hits[ri].gated);
            }
            for (const std::string& e : r.extensions) {
                find_word_bounded(lower, to_lower(e), t.index, "extension:" + to_lower(e),
                                  hits[ri].hard);
            }
            for (const corpus::CodeBlock& block : t.code_blocks) {
                if (block.language_hint && hint_matches(to_lower(*block.language_hint), r)) {
                    hits[ri].hard.push_back({t.index, block.begin, block.end,
                                             "fence_hint:" + to_lower(*block.language_hint)});
                }
            }
        }
    }

    for (std::size_t ri = 0; ri < rules.entries.size(); ++ri) {
        const LanguageRule& r = rules.entries[ri];
        const bool corroborated = any_fence || !hits[ri].hard.empty();
        std::vector<MatchEvidence> counted = hits[ri].hard;
        if (!r.collision_risk || corroborated) {
            counted.insert(counted.end(), hits[ri].gated.begin(), hits[ri].gated.end());
        }
        if (counted.empty()) continue;
        verdict.matched_languages.insert(r.language);
        verdict.evidence.insert(verdict.evidence.end(), counted.begin(), counted.end());
    }
    std::sort(verdict.evidence.begin(), verdict.evidence.end(),
              [](const auto& a, const auto& b) {
                  return std::tie(a.turn_index, a.begin, a.rule) <
                         std::tie(b.turn_index, b.begin, b.rule);
              });
    verdict.matched = !verdict.matched_languages.empty();
    return verdict;
}

namespace {

const char* kDisentangleSystemPrompt =
    "You split a mixed-topic chat between a user and an assistant into independent "
    "single-topic conversations. Turns are numbered. Assign every turn to exactly one "
    "topic label, keeping each user turn and the assistant reply that answers it on the "
    "same topic. If the whole chat is one topic, use a single label. Reply with JSON "
    "only.\n\n"
    "Example:\n"
    "Turn 1 (user): How do I reverse a list in Python?\n"
    "Turn 2 (assistant): Use list.reverse() or reversed().\n"
    "Turn 3 (user): Unrelated: write a haiku about rain.\n"
    "Turn 4 (assistant): Soft rain on the roof...\n"
    "Turn 5 (user): And how do I sort that list descending?\n"
    "Turn 6 (assistant): sorted(xs, reverse=True).\n"
    "Reply:\n"
    "{\"assignments\":[{\"turn\":1,\"topic\":\"A\"},{\"turn\":2,\"topic\":\"A\"},"
    "{\"turn\":3,\"topic\":\"B\"},{\"turn\":4,\"topic\":\"B\"},"
    "{\"turn\":5,\"topic\":\"A\"},{\"turn\":6,\"topic\":\"A\"}]}";

Json assignment_schema() {
    return Json::parse(R"({
        "type": "object",
        "required": ["assignments"],
        "properties": {
            "assignments": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["turn", "topic"],
                    "properties": {
                        "turn": {"type": "integer", "minimum": 1},
                        "topic": {"type": "string"}
                    }
                }
            }
        }
    })");
}

}  // namespace

Result<DisentangleOutcome> disentangle(const corpus::Conversation& c,
                                       backend::ChatBackend& be, const std::string& model_id,
                                       double temperature) {
    DisentangleOutcome outcome;
    if (c.user_turn_count() < 2) {
        outcome.parts.push_back(c);
        return outcome;
    }

    std::string rendered;
    for (const corpus::Turn& t : c.turns) {
        rendered += "Turn " + std::to_string(t.index) + " (" +
                    std::string(corpus::role_name(t.role)) + "): " + t.content + "\n\n";
    }

    backend::ChatRequest req;
    req.model_id = model_id;
    req.temperature = temperature;
    req.messages.push_back({backend::MsgRole::system, kDisentangleSystemPrompt});
    req.messages.push_back({backend::MsgRole::user, rendered});
    auto result = backend::complete_structured(be, std::move(req), assignment_schema());
    if (!result) {
        Error err = result.error();
        err.message = "disentangle " + c.id + ": " + err.message;
        return err;
    }

    // Validate that the reply is a partition of 1..N.
    const Json& assignments = result.value().value["assignments"];
    std::map<int, std::string> topic_of;
    bool valid = true;
    for (const Json& a : assignments) {
        const int turn = a["turn"].get<int>();
        const std::string topic = a["topic"].get<std::string>();
        if (turn < 1 || turn > static_cast<int>(c.turns.size()) || topic.empty() ||
            !topic_of.emplace(turn, topic).second) {
            valid = false;
            break;
        }
    }
    if (valid && topic_of.size() != c.turns.size()) valid = false;

    std::vector<std::string> topic_order;
    std::map<std::string, std::vector<const corpus::Turn*>> groups;
    if (valid) {
        for (const corpus::Turn& t : c.turns) {
            const std::string& topic = topic_of[t.index];
            if (groups.find(topic) == groups.end()) topic_order.push_back(topic);
            groups[topic].push_back(&t);
        }
        // Each part must itself read as a conversation.
        for (const auto& [topic, turns] : groups) {
            for (std::size_t i = 0; i < turns.size(); ++i) {
                const corpus::Role expected =
                    (i % 2 == 0) ? corpus::Role::user : corpus::Role::assistant;
                if (turns[i]->role != expected) valid = false;
            }
        }
    }

    if (!valid) {
        outcome.parts.push_back(c);
        outcome.warnings.push_back("disentangle " + c.id +
                                   ": assignment is not a valid partition; kept unsplit");
        return outcome;
    }
    if (topic_order.size() == 1) {
        outcome.parts.push_back(c);
        return outcome;
    }

    int part_no = 0;
    for (const std::string& topic : topic_order) {
        corpus::Conversation part;
        part.id = c.id + "#" + std::to_string(++part_no);
        part.source = c.source;
        part.model_name = c.model_name;
        part.language_tags = c.language_tags;
        int index = 0;
        for (const corpus::Turn* t : groups[topic]) {
            part.turns.push_back(corpus::Turn::make(++index, t->role, t->content));
        }
        outcome.parts.push_back(std::move(part));
    }
    outcome.split_applied = true;
    return outcome;
}

FilterResult filter_corpus(const std::vector<corpus::Conversation>& corpus,
                           const LanguageRuleSet& rules, backend::ChatBackend* be,
                           Stage stage, const std::string& disentangle_model) {
    FilterResult result;
    result.stats.total = corpus.size();
    for (const corpus::Conversation& c : corpus) {
        std::vector<ismell::corpus::Conversation> parts;
        if (stage == Stage::post) {
            if (be == nullptr) {
                result.stats.warnings.push_back("disentangle skipped for " + c.id +
                                                ": no backend");
                parts.push_back(c);
            } else {
                auto outcome = disentangle(c, *be, disentangle_model);
                if (!outcome) {
                    result.stats.warnings.push_back(outcome.error().message + "; kept unsplit");
                    parts.push_back(c);
                } else {
                    for (const std::string& w : outcome.value().warnings) {
                        result.stats.warnings.push_back(w);
                    }
                    if (outcome.value().split_applied) {
                        result.stats.disentangled_outputs += outcome.value().parts.size();
                    }
                    parts = std::move(outcome.value().parts);
                }
            }
        } else {
            parts.push_back(c);
        }
        for (auto& part : parts) {
            if (!match_coding(part, rules).matched) continue;
            if (part.user_turn_count() == 1) {
                ++result.stats.single_turn;
            } else if (part.multi_turn()) {
                ++result.stats.multi_turn;
            }
            ++result.stats.kept;
            result.kept.push_back(std::move(part));
        }
    }
    return result;
}

Json count_report_to_json(const CountReport& stats) {
    Json j;
    j["total"] = stats.total;
    j["kept"] = stats.kept;
    j["single_turn"] = stats.single_turn;
    j["multi_turn"] = stats.multi_turn;
    j["disentangled_outputs"] = stats.disentangled_outputs;
    j["warnings"] = stats.warnings;
    return j;
}

}  // namespace ismell::filter
