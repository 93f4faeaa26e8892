#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ismell/backend.hpp"
#include "ismell/corpus.hpp"
#include "ismell/taxonomy.hpp"

namespace ismell::ince {

enum class Polarity { must_do, must_not };

std::string_view polarity_name(Polarity p);
std::optional<Polarity> polarity_from_name(std::string_view name);

enum class ConstraintStatus { active, superseded };

struct Constraint {
    std::string id;  // "c1", "c2", ... assigned by the pool
    Polarity polarity = Polarity::must_do;
    std::string text;  // normalized imperative statement
    int origin_turn = 0;
    std::string topic_key;  // conflict-group key
    ConstraintStatus status = ConstraintStatus::active;
    std::string superseded_by;  // set iff status == superseded

    friend bool operator==(const Constraint&, const Constraint&) = default;
};

enum class PoolAction { added, superseded, retained };

std::string_view pool_action_name(PoolAction a);

struct PoolLogEntry {
    int revision = 0;
    PoolAction action = PoolAction::retained;
    std::string constraint_id;  // empty marks a no-change revision

    friend bool operator==(const PoolLogEntry&, const PoolLogEntry&) = default;
};

// The evolving set of global constraints. Constraints are only ever added or
// superseded; the log records every action. At most one constraint per
// (topic_key, polarity) is active, and under conflict the latest origin_turn
// wins.
class InvariantPool {
public:
    const std::vector<Constraint>& constraints() const { return constraints_; }
    int revision() const { return revision_; }
    const std::vector<PoolLogEntry>& log() const { return log_; }

    std::vector<const Constraint*> active() const;
    const Constraint* find(const std::string& id) const;
    const Constraint* active_for(const std::string& topic_key, Polarity polarity) const;

    // One evolution step. Mutations after begin_step() log under the new
    // revision; end_step() drops a retained-nothing marker when the step
    // made no changes.
    void begin_step();
    void end_step();

    // Adds an active constraint and, if one is already active for the same
    // (topic_key, polarity), supersedes it by the new one. Returns the id.
    std::string add(Polarity polarity, std::string text, int origin_turn, std::string topic_key);
    // Supersedes an active constraint by an explicit successor id.
    void supersede(const std::string& old_id, const std::string& new_id);
    void note_retained(const std::string& id);

    std::vector<std::string> validate() const;

    // Snapshot file: one meta line, one line per constraint, one per log row.
    std::string to_jsonl() const;
    static Result<InvariantPool> from_jsonl(const std::string& text);

    friend bool operator==(const InvariantPool&, const InvariantPool&) = default;

private:
    void log_action(PoolAction action, const std::string& id);

    std::vector<Constraint> constraints_;
    std::vector<PoolLogEntry> log_;
    int revision_ = 0;
    bool step_open_ = false;
    bool step_touched_ = false;
    long long next_id_ = 1;
};

struct IncConfig {
    std::string model = "constraint-manager";
    double temperature = 0.0;
    // Where the checklist preamble goes relative to the history.
    enum class Position { before_instruction, before_history };
    Position position = Position::before_instruction;
};

struct ChecklistItem {
    std::string text;
    std::string source;  // constraint id, or "current_instruction"
    Polarity polarity = Polarity::must_do;

    friend bool operator==(const ChecklistItem&, const ChecklistItem&) = default;
};

struct ConflictResolution {
    std::string old_constraint_id;
    std::string new_constraint_id;
    std::string note;
};

struct BlockingIssue {
    taxonomy::Smell smell;  // ambiguous / incomplete / cross-turn only
    std::string description;
};

struct ConstraintChecklist {
    std::vector<ChecklistItem> items;
    std::vector<ConflictResolution> conflicts_resolved;
    std::vector<BlockingIssue> blocking_issues;
    bool degraded = false;

    bool injectable() const { return blocking_issues.empty(); }
};

struct ExtractionResult {
    InvariantPool pool;
    bool degraded = false;  // backend failure; pool returned unchanged
    std::vector<std::string> warnings;
};

// Proposes candidate constraints from the newest user turn and merges them
// into the pool under latest-instruction priority. `history` must end with a
// user turn.
ExtractionResult extract_invariants(std::span<const corpus::Turn> history,
                                    const InvariantPool& pool,
                                    backend::ChatBackend& be,
                                    const IncConfig& cfg = {});

struct AuditResult {
    ConstraintChecklist checklist;
    InvariantPool pool;  // pool after conflict resolution
    bool degraded = false;
};

// Cross-references the next instruction against the active pool. Semantic
// conflicts resolve latest-priority (old constraint superseded by one built
// from the instruction); pre-generation-detectable smells become blocking
// issues. `history` is the prior transcript, excluding the instruction.
AuditResult audit_instruction(const InvariantPool& pool,
                              const std::string& instruction,
                              std::span<const corpus::Turn> history,
                              backend::ChatBackend& be,
                              const IncConfig& cfg = {});

// Deterministic checklist preamble ("REQUIREMENTS (n)" / "PROHIBITIONS (m)"
// sections, items tagged with their source). Empty for an empty checklist.
std::string render_checklist(const ConstraintChecklist& checklist);

struct ComposeRefusal {
    std::vector<BlockingIssue> issues;
};

using ComposeOutcome = std::variant<std::vector<backend::Message>, ComposeRefusal>;

// history + checklist preamble + instruction, in positional order. Refuses
// when the checklist has blocking issues, unless the caller overrides.
ComposeOutcome compose_prompt(std::span<const corpus::Turn> history,
                              const ConstraintChecklist& checklist,
                              const std::string& instruction,
                              bool override_block = false,
                              IncConfig::Position position = IncConfig::Position::before_instruction);

}  // namespace ismell::ince
