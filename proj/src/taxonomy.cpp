#include "ismell/taxonomy.hpp"

#include <fstream>
#include <stdexcept>

#include "ismell/jsonio.hpp"

namespace ismell::taxonomy {

using jsonio::Json;

namespace {

constexpr std::array<SmellInfo, kSmellCount> kSmells{{
    {Smell::ambiguous_instruction, Category::user_intent_quality, Attribution::user_side,
     "ambiguous_instruction", "Ambiguous Instruction",
     "The user's instruction admits more than one reasonable interpretation, and the choice "
     "materially changes what code should be produced."},
    {Smell::incomplete_instruction, Category::user_intent_quality, Attribution::user_side,
     "incomplete_instruction", "Incomplete Instruction",
     "The user's instruction omits information needed to produce working code, such as the "
     "input format, the expected behavior, or the runtime context."},
    {Smell::must_do_omission, Category::historical_instruction_compliance,
     Attribution::model_side, "must_do_omission", "Must-Do Omission",
     "The assistant's latest code drops an explicit requirement stated in an earlier user "
     "turn that was never retracted."},
    {Smell::must_not_violation, Category::historical_instruction_compliance,
     Attribution::model_side, "must_not_violation", "Must-Not Violation",
     "The assistant's latest code does something an earlier user turn explicitly forbade, "
     "and the prohibition was never lifted."},
    {Smell::signature_mismatch, Category::historical_response_violation,
     Attribution::model_side, "signature_mismatch", "Signature Mismatch",
     "The assistant changes an established function or interface signature (name, "
     "parameters, return type, or calling convention) without being asked to."},
    {Smell::cross_turn_inconsistency, Category::historical_response_violation,
     Attribution::model_side, "cross_turn_inconsistency", "Cross-Turn Inconsistency",
     "The assistant's latest response contradicts information or behavior it established in "
     "an earlier turn, with no instruction motivating the change."},
    {Smell::partial_functionality_breakdown, Category::historical_response_violation,
     Attribution::model_side, "partial_functionality_breakdown", "Functionality Breakdown",
     "While making a requested change, the assistant's new code breaks functionality that "
     "worked in an earlier turn and was not asked to change."},
    {Smell::code_rollback, Category::historical_response_violation, Attribution::model_side,
     "code_rollback", "Code Rollback",
     "The assistant reverts to code it had produced in an earlier turn, discarding the "
     "intermediate changes, without the user asking for a revert."},
    {Smell::repetitive_response, Category::historical_response_violation,
     Attribution::model_side, "repetitive_response", "Repetitive Response",
     "The assistant repeats its previous output with no new value even though the user "
     "supplied new instructions or feedback."},
}};

}  // namespace

const std::array<SmellInfo, kSmellCount>& all_smells() { return kSmells; }

const SmellInfo& info(Smell s) { return kSmells[static_cast<std::size_t>(s)]; }

Category category_of(Smell s) { return info(s).category; }

Attribution attribution_of(Smell s) { return info(s).attribution; }

std::optional<Smell> smell_from_name(std::string_view id_name) {
    for (const SmellInfo& si : kSmells) {
        if (si.id_name == id_name) return si.smell;
    }
    return std::nullopt;
}

std::string_view category_name(Category c) {
    switch (c) {
        case Category::user_intent_quality: return "user_intent_quality";
        case Category::historical_instruction_compliance:
            return "historical_instruction_compliance";
        case Category::historical_response_violation: return "historical_response_violation";
    }
    return "";
}

std::string_view detector_name(DetectorKind d) {
    switch (d) {
        case DetectorKind::heuristic: return "heuristic";
        case DetectorKind::llm_judge: return "llm_judge";
        case DetectorKind::human: return "human";
    }
    return "";
}

std::optional<DetectorKind> detector_from_name(std::string_view name) {
    if (name == "heuristic") return DetectorKind::heuristic;
    if (name == "llm_judge") return DetectorKind::llm_judge;
    if (name == "human") return DetectorKind::human;
    return std::nullopt;
}

std::vector<std::string> validate_annotation(const SmellAnnotation& a,
                                             const corpus::Conversation& c) {
    std::vector<std::string> violations;
    if (a.conversation_id != c.id) violations.push_back("conversation id mismatch");
    if (a.turn_index < 1 || a.turn_index > static_cast<int>(c.turns.size())) {
        violations.push_back("range");
        return violations;
    }
    const corpus::Role role = c.turns[static_cast<std::size_t>(a.turn_index) - 1].role;
    const bool user_smell = attribution_of(a.smell) == Attribution::user_side;
    if (user_smell != (role == corpus::Role::user)) violations.push_back("attribution");
    if (a.confidence < 0.0 || a.confidence > 1.0) violations.push_back("confidence");
    return violations;
}

DistributionTable smell_distribution(std::span<const SmellAnnotation> annotations,
                                     int denominator,
                                     const std::set<std::string>* known_ids,
                                     std::vector<std::string>* warnings) {
    if (denominator < 1) throw std::invalid_argument("denominator must be positive");
    DistributionTable table;
    table.denominator = denominator;
    std::array<std::set<std::string>, kSmellCount> sessions;
    std::set<std::string> warned;
    for (const SmellAnnotation& a : annotations) {
        if (known_ids != nullptr && known_ids->count(a.conversation_id) == 0) {
            if (warnings != nullptr && warned.insert(a.conversation_id).second) {
                warnings->push_back("annotation for unknown conversation " + a.conversation_id);
            }
            continue;
        }
        sessions[static_cast<std::size_t>(a.smell)].insert(a.conversation_id);
    }
    for (int i = 0; i < kSmellCount; ++i) {
        table.session_counts[static_cast<std::size_t>(i)] =
            static_cast<int>(sessions[static_cast<std::size_t>(i)].size());
    }
    return table;
}

std::string serialize_annotation(const SmellAnnotation& a) {
    Json j;
    j["conversation_id"] = a.conversation_id;
    j["turn_index"] = a.turn_index;
    j["smell"] = std::string(info(a.smell).id_name);
    j["evidence"] = a.evidence;
    if (a.evidence_span) {
        j["evidence_span"] = Json::array({a.evidence_span->first, a.evidence_span->second});
    }
    j["rationale"] = a.rationale;
    j["detector"] = std::string(detector_name(a.detector));
    j["confidence"] = a.confidence;
    return j.dump();
}

Result<SmellAnnotation> parse_annotation_line(std::string_view line) {
    auto parsed = jsonio::parse_json(line, "annotation");
    if (!parsed) return parsed.error();
    const Json& j = parsed.value();
    if (!j.is_object()) return Error{Error::Kind::parse, "annotation is not an object"};

    SmellAnnotation a;
    if (!j.contains("conversation_id") || !j["conversation_id"].is_string()) {
        return Error{Error::Kind::parse, "conversation_id"};
    }
    a.conversation_id = j["conversation_id"].get<std::string>();
    if (!j.contains("turn_index") || !j["turn_index"].is_number_integer() ||
        j["turn_index"].get<int>() < 1) {
        return Error{Error::Kind::parse, "turn_index"};
    }
    a.turn_index = j["turn_index"].get<int>();
    if (!j.contains("smell") || !j["smell"].is_string()) {
        return Error{Error::Kind::parse, "smell"};
    }
    auto smell = smell_from_name(j["smell"].get<std::string>());
    if (!smell) return Error{Error::Kind::parse, "smell"};
    a.smell = *smell;
    if (!j.contains("detector") || !j["detector"].is_string()) {
        return Error{Error::Kind::parse, "detector"};
    }
    auto det = detector_from_name(j["detector"].get<std::string>());
    if (!det) return Error{Error::Kind::parse, "detector"};
    a.detector = *det;

    if (j.contains("evidence")) {
        if (!j["evidence"].is_string()) return Error{Error::Kind::parse, "evidence"};
        a.evidence = j["evidence"].get<std::string>();
    }
    if (j.contains("rationale")) {
        if (!j["rationale"].is_string()) return Error{Error::Kind::parse, "rationale"};
        a.rationale = j["rationale"].get<std::string>();
    }
    if (j.contains("evidence_span")) {
        const Json& span = j["evidence_span"];
        if (!span.is_array() || span.size() != 2 || !span[0].is_number_unsigned() ||
            !span[1].is_number_unsigned()) {
            return Error{Error::Kind::parse, "evidence_span"};
        }
        a.evidence_span = {span[0].get<std::size_t>(), span[1].get<std::size_t>()};
    }
    if (j.contains("confidence")) {
        if (!j["confidence"].is_number()) return Error{Error::Kind::parse, "confidence"};
        a.confidence = j["confidence"].get<double>();
        if (a.confidence < 0.0 || a.confidence > 1.0) {
            return Error{Error::Kind::parse, "confidence"};
        }
    } else {
        a.confidence = (a.detector == DetectorKind::llm_judge) ? 0.5 : 1.0;
    }
    return a;
}

Result<std::vector<SmellAnnotation>> load_annotations(const std::filesystem::path& path) {
    auto text = jsonio::read_file(path);
    if (!text) return text.error();
    std::vector<SmellAnnotation> out;
    for (const auto& [line_no, line] : jsonio::split_jsonl(text.value())) {
        auto a = parse_annotation_line(line);
        if (!a) {
            return Error{Error::Kind::parse, path.string() + ":" + std::to_string(line_no) +
                                                 ": " + a.error().message};
        }
        out.push_back(std::move(a.value()));
    }
    return out;
}

std::optional<Error> write_annotations(std::span<const SmellAnnotation> annotations,
                                       const std::filesystem::path& path) {
    std::string out;
    for (const SmellAnnotation& a : annotations) {
        out += serialize_annotation(a);
        out += '\n';
    }
    return jsonio::atomic_write(path, out);
}

}  // namespace ismell::taxonomy
