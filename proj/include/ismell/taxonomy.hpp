#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ismell/corpus.hpp"
#include "ismell/ratio.hpp"
#include "ismell/result.hpp"

namespace ismell::taxonomy {

// The nine interaction smells. Order matches the reporting column order.
enum class Smell {
    ambiguous_instruction,
    incomplete_instruction,
    must_do_omission,
    must_not_violation,
    signature_mismatch,
    cross_turn_inconsistency,
    partial_functionality_breakdown,
    code_rollback,
    repetitive_response,
};

inline constexpr int kSmellCount = 9;

enum class Category {
    user_intent_quality,
    historical_instruction_compliance,
    historical_response_violation,
};

enum class Attribution { user_side, model_side };

struct SmellInfo {
    Smell smell;
    Category category;
    Attribution attribution;
    std::string_view id_name;       // stable machine name, e.g. "must_do_omission"
    std::string_view display_name;  // report column label, e.g. "Must-Do Omit"
    std::string_view definition;    // rubric text shared with the judge
};

const std::array<SmellInfo, kSmellCount>& all_smells();
const SmellInfo& info(Smell s);
Category category_of(Smell s);
Attribution attribution_of(Smell s);
std::optional<Smell> smell_from_name(std::string_view id_name);
std::string_view category_name(Category c);

enum class DetectorKind { heuristic, llm_judge, human };

std::string_view detector_name(DetectorKind d);
std::optional<DetectorKind> detector_from_name(std::string_view name);

struct SmellAnnotation {
    std::string conversation_id;
    int turn_index = 0;
    Smell smell = Smell::ambiguous_instruction;
    std::string evidence;
    std::optional<std::pair<std::size_t, std::size_t>> evidence_span;
    std::string rationale;
    DetectorKind detector = DetectorKind::heuristic;
    double confidence = 1.0;

    friend bool operator==(const SmellAnnotation&, const SmellAnnotation&) = default;
};

// Checks the annotation against its conversation: index in range, and
// attribution side matches the turn role. Violations come back as data.
std::vector<std::string> validate_annotation(const SmellAnnotation& a,
                                             const corpus::Conversation& c);

// Session-level smell distribution: a session counts once per smell no
// matter how many instances it contains.
struct DistributionTable {
    int denominator = 1;
    std::array<int, kSmellCount> session_counts{};

    Ratio prevalence(Smell s) const {
        return Ratio{100LL * session_counts[static_cast<std::size_t>(s)], denominator};
    }
};

// `known_ids`, when provided, is the universe of sessions; annotations
// referencing other conversations are excluded with a warning.
DistributionTable smell_distribution(std::span<const SmellAnnotation> annotations,
                                     int denominator,
                                     const std::set<std::string>* known_ids = nullptr,
                                     std::vector<std::string>* warnings = nullptr);

// Line-delimited annotation store, stable field order.
std::string serialize_annotation(const SmellAnnotation& a);
Result<SmellAnnotation> parse_annotation_line(std::string_view line);
Result<std::vector<SmellAnnotation>> load_annotations(const std::filesystem::path& path);
std::optional<Error> write_annotations(std::span<const SmellAnnotation> annotations,
                                       const std::filesystem::path& path);

}  // namespace ismell::taxonomy
