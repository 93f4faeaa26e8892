#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ismell/backend.hpp"
#include "ismell/corpus.hpp"
#include "ismell/detector.hpp"
#include "ismell/ince.hpp"
#include "ismell/taxonomy.hpp"

namespace ismell::harness {

struct TaskSeed {
    std::string id;
    std::string initial_instruction;
    std::vector<std::string> checklist;  // 5-10 verifiable items (warn outside)
    std::string category;
};

std::vector<std::string> validate_task(const TaskSeed& task);

struct TaskFile {
    std::vector<TaskSeed> tasks;
    std::vector<std::string> warnings;
};

Result<TaskFile> load_tasks(const std::filesystem::path& path);

struct VerdictItem {
    int index = 0;  // 1-based checklist item
    bool pass = false;
    std::string note;
};

struct OracleVerdict {
    int score = 0;  // integer 0..10
    std::vector<VerdictItem> per_item;
    std::string error_report;  // empty when the score clears the threshold
    // Hard backend failure (distinct from a repairable structured-output
    // failure); the session aborts instead of recording such a verdict.
    std::string backend_error;
};

struct SessionConfig {
    int max_turns = 11;
    int success_threshold = 9;
    bool ince_enabled = false;
    std::string generator_model = "generator";
    std::string simulator_model = "simulator";
    std::string oracle_model = "oracle";
    std::string ince_model;  // empty falls back to generator_model
    double generator_temperature = 0.0;
    double simulator_temperature = 0.7;
    double oracle_temperature = 0.0;
    std::optional<long long> seed;
    ince::IncConfig::Position checklist_position = ince::IncConfig::Position::before_instruction;
};

std::vector<std::string> validate_session_config(const SessionConfig& cfg);

enum class Outcome { success, exhausted, aborted };

std::string_view outcome_name(Outcome o);
std::optional<Outcome> outcome_from_name(std::string_view name);

struct SimulationSession {
    std::string task_id;
    corpus::Conversation transcript;
    std::vector<OracleVerdict> verdicts;  // one per assistant turn
    Outcome outcome = Outcome::aborted;
    int turns_used = 0;  // == verdicts.size(); 0 only for early aborts
    std::optional<ince::InvariantPool> pool_snapshot;
    std::vector<taxonomy::SmellAnnotation> annotations;  // post-hoc
    std::string abort_reason;
    std::vector<std::string> warnings;
};

// Structural invariants for completed (non-aborted) sessions plus general
// transcript checks; returns violations.
std::vector<std::string> validate_session(const SimulationSession& s, const SessionConfig& cfg);

struct RoleBackends {
    std::shared_ptr<backend::ChatBackend> generator;
    std::shared_ptr<backend::ChatBackend> simulator;
    std::shared_ptr<backend::ChatBackend> oracle;
    std::shared_ptr<backend::ChatBackend> ince;  // null -> use generator

    backend::ChatBackend& ince_or_generator() const {
        return ince ? *ince : *generator;
    }
};

// One closed-loop session: instruction, generate (optionally through the
// invariant/audit/compose pipeline), score, refine; halts at the first
// verdict clearing the threshold or at the turn cap. Backend failures abort
// the session but preserve the partial transcript.
SimulationSession run_session(const TaskSeed& task, const SessionConfig& cfg,
                              const RoleBackends& backends);

// Scores the latest response against the task checklist; the error report is
// built locally from the failing items. Structured-output failure yields a
// score-0 verdict so the session can continue.
OracleVerdict score_response(const TaskSeed& task, const corpus::Conversation& transcript,
                             const std::string& latest_response, backend::ChatBackend& oracle,
                             const SessionConfig& cfg);

// Independent sessions, output order == task order. jobs > 1 runs sessions
// concurrently; per-session failures stay isolated.
std::vector<SimulationSession> run_batch(std::span<const TaskSeed> tasks,
                                         const SessionConfig& cfg,
                                         const RoleBackends& backends,
                                         int jobs = 1);

// Fills session.annotations with a heuristic detector pass.
void annotate_sessions(std::vector<SimulationSession>& sessions,
                       const detector::DetectionConfig& det);

backend::Json session_to_json(const SimulationSession& s);
Result<SimulationSession> session_from_json(const backend::Json& j);

// One directory per batch: NNN_<task>.json per session plus batch.json.
// Files are written atomically and byte-deterministically.
std::optional<Error> write_batch(const std::vector<SimulationSession>& sessions,
                                 const SessionConfig& cfg,
                                 const std::filesystem::path& out_dir);

struct LoadedBatch {
    std::string model;
    std::string variant;  // "vanilla" | "ince"
    std::vector<SimulationSession> sessions;
};

Result<LoadedBatch> load_batch(const std::filesystem::path& dir);

}  // namespace ismell::harness
