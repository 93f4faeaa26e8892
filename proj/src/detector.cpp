#include "ismell/detector.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace ismell::detector {

using backend::Json;
using taxonomy::Smell;
using taxonomy::SmellAnnotation;

std::vector<std::string> validate_config(const DetectionConfig& cfg) {
    std::vector<std::string> violations;
    if (!(cfg.repetition_threshold > 0.0) || cfg.repetition_threshold > 1.0) {
        violations.push_back("repetition_threshold outside (0,1]");
    }
    if (cfg.judge_temperature < 0.0) violations.push_back("judge_temperature negative");
    if (cfg.judge_model.empty()) violations.push_back("judge_model empty");
    return violations;
}

namespace {

// Fence openers and closers collapse to a bare "```" so a reply that only
// changes the info tag still counts as a repeat.
std::map<std::string, int> token_multiset(std::string_view text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::size_t end = (nl == std::string_view::npos) ? text.size() : nl;
        std::string_view line = text.substr(pos, end - pos);
        std::size_t ws = line.find_first_not_of(" \t");
        if (ws != std::string_view::npos && line.substr(ws).size() >= 3 &&
            line.substr(ws, 3) == "```") {
            cleaned += "```";
        } else {
            cleaned += line;
        }
        cleaned += '\n';
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }

    std::map<std::string, int> tokens;
    std::string current;
    for (char c : cleaned) {
        if (std::isspace(static_cast<unsigned char>(c)) != 0) {
            if (!current.empty()) {
                ++tokens[current];
                current.clear();
            }
        } else {
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    if (!current.empty()) ++tokens[current];
    return tokens;
}

bool blank(std::string_view text) {
    return text.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

std::string clip(std::string_view text, std::size_t limit) {
    std::string out(text.substr(0, limit));
    if (text.size() > limit) out += "...";
    return out;
}

std::string render_turns(const corpus::Conversation& c, int up_to) {
    std::string out;
    for (const corpus::Turn& t : c.turns) {
        if (t.index > up_to) break;
        out += "Turn " + std::to_string(t.index) + " (" +
               std::string(corpus::role_name(t.role)) + "): " + t.content + "\n\n";
    }
    return out;
}

}  // namespace

double repetition_similarity(std::string_view a, std::string_view b) {
    const auto ta = token_multiset(a);
    const auto tb = token_multiset(b);
    long long inter = 0;
    long long uni = 0;
    auto ia = ta.begin();
    auto ib = tb.begin();
    while (ia != ta.end() || ib != tb.end()) {
        if (ib == tb.end() || (ia != ta.end() && ia->first < ib->first)) {
            uni += ia->second;
            ++ia;
        } else if (ia == ta.end() || ib->first < ia->first) {
            uni += ib->second;
            ++ib;
        } else {
            inter += std::min(ia->second, ib->second);
            uni += std::max(ia->second, ib->second);
            ++ia;
            ++ib;
        }
    }
    if (uni == 0) return 1.0;  // both empty
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<SmellAnnotation> detect_heuristic(const corpus::Conversation& c,
                                              const DetectionConfig& cfg) {
    std::vector<SmellAnnotation> out;

    std::vector<const corpus::Turn*> assistant_turns;
    for (const corpus::Turn& t : c.turns) {
        if (t.role == corpus::Role::assistant) assistant_turns.push_back(&t);
    }

    if (cfg.enabled(Smell::repetitive_response)) {
        for (std::size_t i = 1; i < assistant_turns.size(); ++i) {
            const corpus::Turn& prev = *assistant_turns[i - 1];
            const corpus::Turn& cur = *assistant_turns[i];
            // The user must have said something new in between; a repeat of
            // an empty nudge is not informative.
            bool user_said_something = false;
            for (const corpus::Turn& t : c.turns) {
                if (t.index > prev.index && t.index < cur.index &&
                    t.role == corpus::Role::user && !blank(t.content)) {
                    user_said_something = true;
                }
            }
            if (!user_said_something) continue;
            const double sim = repetition_similarity(prev.content, cur.content);
            if (sim < cfg.repetition_threshold) continue;
            SmellAnnotation a;
            a.conversation_id = c.id;
            a.turn_index = cur.index;
            a.smell = Smell::repetitive_response;
            a.evidence = clip(cur.content, 200);
            a.rationale = "similarity " + std::to_string(sim) + " to assistant turn " +
                          std::to_string(prev.index);
            a.detector = taxonomy::DetectorKind::heuristic;
            a.confidence = 1.0;
            out.push_back(std::move(a));
        }
    }

    if (cfg.enabled(Smell::code_rollback)) {
        for (std::size_t k = 2; k < assistant_turns.size(); ++k) {
            const corpus::Turn& t3 = *assistant_turns[k];
            bool annotated = false;
            for (std::size_t i = 0; i + 1 < k && !annotated; ++i) {
                const corpus::Turn& t1 = *assistant_turns[i];
                for (const corpus::CodeBlock& original : t1.code_blocks) {
                    if (original.text.empty()) continue;
                    const corpus::CodeBlock* revert = nullptr;
                    for (const corpus::CodeBlock& candidate : t3.code_blocks) {
                        if (candidate.text == original.text) revert = &candidate;
                    }
                    if (revert == nullptr) continue;
                    // Some turn in between must have replaced the block.
                    for (std::size_t j = i + 1; j < k && !annotated; ++j) {
                        const corpus::Turn& t2 = *assistant_turns[j];
                        if (t2.code_blocks.empty()) continue;
                        bool replaced = true;
                        for (const corpus::CodeBlock& mid : t2.code_blocks) {
                            if (mid.text == original.text) replaced = false;
                        }
                        if (!replaced) continue;
                        SmellAnnotation a;
                        a.conversation_id = c.id;
                        a.turn_index = t3.index;
                        a.smell = Smell::code_rollback;
                        a.evidence = clip(original.text, 200);
                        a.evidence_span = {revert->begin, revert->end};
                        a.rationale = "code from assistant turn " + std::to_string(t1.index) +
                                      " reappears after assistant turn " +
                                      std::to_string(t2.index) + " replaced it";
                        a.detector = taxonomy::DetectorKind::heuristic;
                        a.confidence = 1.0;
                        out.push_back(std::move(a));
                        annotated = true;
                    }
                    if (annotated) break;
                }
            }
        }
    }

    std::stable_sort(out.begin(), out.end(), [](const SmellAnnotation& a,
                                                const SmellAnnotation& b) {
        return std::tie(a.turn_index, a.smell) < std::tie(b.turn_index, b.smell);
    });
    return out;
}

JudgeRubric rubric_for(Smell s) {
    JudgeRubric rubric;
    rubric.smell = s;
    rubric.definition = taxonomy::info(s).definition;
    rubric.decision_schema = Json::parse(R"({
        "type": "object",
        "required": ["present"],
        "properties": {
            "present": {"type": "boolean"},
            "evidence": {"type": "string"},
            "rationale": {"type": "string"},
            "confidence": {"type": "number", "minimum": 0, "maximum": 1}
        }
    })");
    return rubric;
}

bool turn_eligible(const corpus::Conversation& c, int turn_index, Smell s) {
    if (turn_index < 1 || turn_index > static_cast<int>(c.turns.size())) return false;
    const corpus::Turn& turn = c.turns[static_cast<std::size_t>(turn_index) - 1];
    const bool user_smell = taxonomy::attribution_of(s) == taxonomy::Attribution::user_side;
    if (user_smell != (turn.role == corpus::Role::user)) return false;

    int prior_assistant = 0;
    for (const corpus::Turn& t : c.turns) {
        if (t.index >= turn_index) break;
        if (t.role == corpus::Role::assistant) ++prior_assistant;
    }
    switch (s) {
        case Smell::repetitive_response:
        case Smell::signature_mismatch:
        case Smell::cross_turn_inconsistency:
        case Smell::partial_functionality_breakdown:
            return prior_assistant >= 1;
        case Smell::code_rollback:
            return prior_assistant >= 2;
        default:
            return true;
    }
}

Result<DetectionResult> detect(const corpus::Conversation& c, const DetectionConfig& cfg,
                               backend::ChatBackend* be) {
    auto violations = validate_config(cfg);
    if (!violations.empty()) {
        return Error{Error::Kind::validation, violations.front()};
    }

    std::map<std::pair<int, Smell>, SmellAnnotation> heuristic;
    for (SmellAnnotation& a : detect_heuristic(c, cfg)) {
        heuristic.emplace(std::make_pair(a.turn_index, a.smell), std::move(a));
    }

    DetectionResult result;
    if (cfg.heuristics_only) {
        for (auto& [key, a] : heuristic) result.annotations.push_back(std::move(a));
        return result;
    }
    if (be == nullptr) {
        return Error{Error::Kind::usage, "judge backend required unless heuristics_only"};
    }

    for (const corpus::Turn& turn : c.turns) {
        for (const taxonomy::SmellInfo& si : taxonomy::all_smells()) {
            if (!cfg.enabled(si.smell)) continue;
            if (!turn_eligible(c, turn.index, si.smell)) continue;

            // A byte-identical repeat needs no judgment call.
            if (si.smell == Smell::repetitive_response) {
                auto it = heuristic.find({turn.index, si.smell});
                if (it != heuristic.end()) {
                    const corpus::Turn* prev = nullptr;
                    for (const corpus::Turn& t : c.turns) {
                        if (t.index >= turn.index) break;
                        if (t.role == corpus::Role::assistant) prev = &t;
                    }
                    if (prev != nullptr && prev->content == turn.content) {
                        result.annotations.push_back(it->second);
                        continue;
                    }
                }
            }

            JudgeRubric rubric = rubric_for(si.smell);
            backend::ChatRequest req;
            req.model_id = cfg.judge_model;
            req.temperature = cfg.judge_temperature;
            req.messages.push_back(
                {backend::MsgRole::system,
                 "You are auditing a coding conversation for one specific interaction "
                 "defect.\n\nDefect: " +
                     std::string(si.display_name) + ": " + std::string(rubric.definition) +
                     "\n\nDecide whether the defect is present in the indicated turn, using "
                     "the earlier turns as context. Reply with JSON only, matching "
                     "{\"present\": boolean, \"evidence\": string, \"rationale\": string, "
                     "\"confidence\": number in [0,1]}."});
            req.messages.push_back({backend::MsgRole::user,
                                    render_turns(c, turn.index) + "Assess turn " +
                                        std::to_string(turn.index) + "."});

            auto judged = backend::complete_structured(*be, std::move(req),
                                                       rubric.decision_schema);
            if (!judged) {
                if (judged.error().kind == Error::Kind::structured_output) {
                    result.undetermined.push_back(
                        {si.smell, turn.index, judged.error().message});
                    continue;
                }
                return judged.error();
            }
            const Json& verdict = judged.value().value;
            if (!verdict["present"].get<bool>()) continue;

            SmellAnnotation a;
            a.conversation_id = c.id;
            a.turn_index = turn.index;
            a.smell = si.smell;
            if (verdict.contains("evidence") && verdict["evidence"].is_string()) {
                a.evidence = verdict["evidence"].get<std::string>();
            }
            if (verdict.contains("rationale") && verdict["rationale"].is_string()) {
                a.rationale = verdict["rationale"].get<std::string>();
            }
            a.detector = taxonomy::DetectorKind::llm_judge;
            a.confidence = (verdict.contains("confidence") && verdict["confidence"].is_number())
                               ? verdict["confidence"].get<double>()
                               : 0.5;
            result.annotations.push_back(std::move(a));
        }
    }
    return result;
}

}  // namespace ismell::detector
