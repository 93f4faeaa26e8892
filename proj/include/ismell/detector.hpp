#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ismell/backend.hpp"
#include "ismell/corpus.hpp"
#include "ismell/taxonomy.hpp"

namespace ismell::detector {

struct DetectionConfig {
    std::set<taxonomy::Smell> enabled_smells;  // empty means all nine
    double repetition_threshold = 0.95;        // in (0,1]
    std::string judge_model = "judge";
    double judge_temperature = 0.0;
    bool heuristics_only = false;

    bool enabled(taxonomy::Smell s) const {
        return enabled_smells.empty() || enabled_smells.count(s) > 0;
    }
};

std::vector<std::string> validate_config(const DetectionConfig& cfg);

// Token-multiset Jaccard over lowercased whitespace tokens, with fence info
// tags stripped first so "```python" and "```" compare equal. Symmetric;
// two empty texts score 1.0.
double repetition_similarity(std::string_view a, std::string_view b);

// Deterministic pre-pass. Emits RepetitiveResponse for consecutive assistant
// turns at or above the similarity threshold (with a non-empty user turn in
// between) and CodeRollback candidates for byte-identical reverts of a code
// block that an intermediate assistant turn had replaced.
std::vector<taxonomy::SmellAnnotation> detect_heuristic(const corpus::Conversation& c,
                                                        const DetectionConfig& cfg);

struct UndeterminedPair {
    taxonomy::Smell smell;
    int turn_index = 0;
    std::string reason;
};

struct DetectionResult {
    std::vector<taxonomy::SmellAnnotation> annotations;
    std::vector<UndeterminedPair> undetermined;
};

struct JudgeRubric {
    taxonomy::Smell smell;
    std::string_view definition;  // identical to the taxonomy definition
    backend::Json decision_schema;
};

JudgeRubric rubric_for(taxonomy::Smell s);

// Which turns a smell can annotate at all (role side plus minimum history).
bool turn_eligible(const corpus::Conversation& c, int turn_index, taxonomy::Smell s);

// Runs the judge over every enabled (smell, eligible turn) pair with the
// full prior history in view. Heuristic candidates are confirmed or dropped
// by the judge, except exact-duplicate RepetitiveResponse which stands on
// its own. Structured-output failures park the pair as undetermined.
// heuristics_only skips the backend entirely (be may then be null).
Result<DetectionResult> detect(const corpus::Conversation& c,
                               const DetectionConfig& cfg,
                               backend::ChatBackend* be);

}  // namespace ismell::detector
