#include "ismell/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <set>
#include <thread>

#include "ismell/jsonio.hpp"

namespace ismell::harness {

using backend::Json;

std::vector<std::string> validate_task(const TaskSeed& task) {
    std::vector<std::string> problems;
    if (task.id.empty()) problems.push_back("task id empty");
    if (task.initial_instruction.empty()) problems.push_back("initial_instruction empty");
    if (task.checklist.empty()) problems.push_back("checklist empty");
    for (const std::string& item : task.checklist) {
        if (item.empty()) problems.push_back("checklist item empty");
    }
    return problems;
}

Result<TaskFile> load_tasks(const std::filesystem::path& path) {
    auto text = jsonio::read_file(path);
    if (!text) return text.error();
    TaskFile file;
    std::set<std::string> ids;
    for (const auto& [line_no, line] : jsonio::split_jsonl(text.value())) {
        const std::string where = path.string() + ":" + std::to_string(line_no);
        auto parsed = jsonio::parse_json(line, where);
        if (!parsed) return parsed.error();
        const Json& j = parsed.value();
        if (!j.is_object()) return Error{Error::Kind::parse, where + ": not an object"};
        TaskSeed task;
        task.id = j.value("id", "");
        task.initial_instruction = j.value("initial_instruction", "");
        if (j.contains("checklist") && j["checklist"].is_array()) {
            for (const Json& item : j["checklist"]) {
                if (!item.is_string()) {
                    return Error{Error::Kind::parse, where + ": checklist item not a string"};
                }
                task.checklist.push_back(item.get<std::string>());
            }
        }
        task.category = j.value("category", "");
        auto problems = validate_task(task);
        if (!problems.empty()) {
            return Error{Error::Kind::validation, where + ": " + problems.front()};
        }
        if (!ids.insert(task.id).second) {
            return Error{Error::Kind::validation, where + ": duplicate task id " + task.id};
        }
        if (task.checklist.size() < 5 || task.checklist.size() > 10) {
            file.warnings.push_back("task " + task.id + ": checklist has " +
                                    std::to_string(task.checklist.size()) +
                                    " items, expected 5-10");
        }
        file.tasks.push_back(std::move(task));
    }
    return file;
}

std::vector<std::string> validate_session_config(const SessionConfig& cfg) {
    std::vector<std::string> problems;
    if (cfg.max_turns < 1) problems.push_back("max_turns < 1");
    if (cfg.success_threshold < 0 || cfg.success_threshold > 10) {
        problems.push_back("success_threshold outside [0,10]");
    }
    if (cfg.generator_model.empty()) problems.push_back("generator_model empty");
    if (cfg.simulator_model.empty()) problems.push_back("simulator_model empty");
    if (cfg.oracle_model.empty()) problems.push_back("oracle_model empty");
    if (cfg.generator_temperature < 0.0 || cfg.simulator_temperature < 0.0 ||
        cfg.oracle_temperature < 0.0) {
        problems.push_back("negative temperature");
    }
    return problems;
}

std::string_view outcome_name(Outcome o) {
    switch (o) {
        case Outcome::success: return "success";
        case Outcome::exhausted: return "exhausted";
        case Outcome::aborted: return "aborted";
    }
    return "";
}

std::optional<Outcome> outcome_from_name(std::string_view name) {
    if (name == "success") return Outcome::success;
    if (name == "exhausted") return Outcome::exhausted;
    if (name == "aborted") return Outcome::aborted;
    return std::nullopt;
}

namespace {

std::string render_transcript(const corpus::Conversation& c) {
    std::string out;
    for (const corpus::Turn& t : c.turns) {
        out += "Turn " + std::to_string(t.index) + " (" +
               std::string(corpus::role_name(t.role)) + "): " + t.content + "\n\n";
    }
    return out;
}

std::string render_checklist_items(const TaskSeed& task) {
    std::string out;
    for (std::size_t i = 0; i < task.checklist.size(); ++i) {
        out += std::to_string(i + 1) + ". " + task.checklist[i] + "\n";
    }
    return out;
}

Json oracle_schema() {
    return Json::parse(R"({
        "type": "object",
        "required": ["score", "per_item"],
        "properties": {
            "score": {"type": "integer", "minimum": 0, "maximum": 10},
            "per_item": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["index", "pass"],
                    "properties": {
                        "index": {"type": "integer", "minimum": 1},
                        "pass": {"type": "boolean"},
                        "note": {"type": "string"}
                    }
                }
            }
        }
    })");
}

std::string format_error(const Error& e) {
    return std::string(error_kind_name(e.kind)) + ": " + e.message;
}

}  // namespace

OracleVerdict score_response(const TaskSeed& task, const corpus::Conversation& transcript,
                             const std::string& latest_response,
                             backend::ChatBackend& oracle, const SessionConfig& cfg) {
    backend::ChatRequest req;
    req.model_id = cfg.oracle_model;
    req.temperature = cfg.oracle_temperature;
    req.messages.push_back(
        {backend::MsgRole::system,
         "You are the evaluation oracle for a coding session. Score how well the latest "
         "assistant response satisfies the task checklist, as an integer 0-10 where 10 "
         "means every item holds. Also judge each checklist item. Reply with JSON only, "
         "matching {\"score\": integer, \"per_item\": [{\"index\": integer, \"pass\": "
         "boolean, \"note\": string}]}."});
    req.messages.push_back({backend::MsgRole::user,
                            "Task:\n" + task.initial_instruction + "\n\nChecklist:\n" +
                                render_checklist_items(task) + "\nConversation:\n" +
                                render_transcript(transcript) +
                                "Score the latest assistant response:\n" + latest_response});

    OracleVerdict verdict;
    auto reply = backend::complete_structured(oracle, std::move(req), oracle_schema());
    if (!reply) {
        if (reply.error().kind != Error::Kind::structured_output) {
            verdict.backend_error = format_error(reply.error());
            return verdict;
        }
        verdict.score = 0;
        verdict.error_report = "oracle failure: could not obtain a valid verdict";
        return verdict;
    }
    const Json& j = reply.value().value;
    verdict.score = j["score"].get<int>();
    for (const Json& item : j["per_item"]) {
        VerdictItem vi;
        vi.index = item["index"].get<int>();
        vi.pass = item["pass"].get<bool>();
        vi.note = item.value("note", "");
        verdict.per_item.push_back(std::move(vi));
    }

    if (verdict.score < cfg.success_threshold) {
        // The report is assembled locally from the failing items so it cannot
        // drift from the per-item flags.
        std::string report = "Checklist items not yet satisfied:";
        bool any = false;
        for (const VerdictItem& vi : verdict.per_item) {
            if (vi.pass) continue;
            any = true;
            report += "\n- item " + std::to_string(vi.index);
            if (vi.index >= 1 && vi.index <= static_cast<int>(task.checklist.size())) {
                report += ": " + task.checklist[static_cast<std::size_t>(vi.index) - 1];
            }
            if (!vi.note.empty()) report += " (" + vi.note + ")";
        }
        if (!any) {
            report = "Score " + std::to_string(verdict.score) +
                     " is below the success threshold; no specific failing items were "
                     "reported.";
        }
        verdict.error_report = report;
    }
    return verdict;
}

SimulationSession run_session(const TaskSeed& task, const SessionConfig& cfg,
                              const RoleBackends& backends) {
    SimulationSession session;
    session.task_id = task.id;
    session.transcript.id = task.id;
    session.transcript.source = corpus::Source::synthetic;
    session.transcript.model_name = cfg.generator_model;
    session.outcome = Outcome::aborted;

    ince::InvariantPool pool;
    ince::IncConfig inc_cfg;
    inc_cfg.model = cfg.ince_model.empty() ? cfg.generator_model : cfg.ince_model;
    inc_cfg.position = cfg.checklist_position;

    std::string instruction = task.initial_instruction;
    for (int round = 1; round <= cfg.max_turns; ++round) {
        auto& turns = session.transcript.turns;
        turns.push_back(corpus::Turn::make(static_cast<int>(turns.size()) + 1,
                                           corpus::Role::user, instruction));

        std::vector<backend::Message> messages;
        if (cfg.ince_enabled) {
            auto extraction =
                ince::extract_invariants(turns, pool, backends.ince_or_generator(), inc_cfg);
            for (const std::string& w : extraction.warnings) session.warnings.push_back(w);
            pool = std::move(extraction.pool);

            std::span<const corpus::Turn> prior(turns.data(), turns.size() - 1);
            auto audit = ince::audit_instruction(pool, instruction, prior,
                                                 backends.ince_or_generator(), inc_cfg);
            pool = std::move(audit.pool);
            if (audit.degraded) {
                session.warnings.push_back("turn " + std::to_string(turns.back().index) +
                                           ": audit degraded; using pool-only checklist");
            }

            bool override_block = false;
            if (!audit.checklist.injectable()) {
                // Mid-simulation there is no one to ask for clarification;
                // proceed, but leave a trace.
                std::string note = "turn " + std::to_string(turns.back().index) +
                                   ": audit flagged blocking issues (";
                for (std::size_t i = 0; i < audit.checklist.blocking_issues.size(); ++i) {
                    if (i > 0) note += ", ";
                    note += taxonomy::info(audit.checklist.blocking_issues[i].smell).id_name;
                }
                note += "); proceeding with checklist";
                session.warnings.push_back(note);
                override_block = true;
            }
            auto composed = ince::compose_prompt(prior, audit.checklist, instruction,
                                                 override_block, inc_cfg.position);
            messages = std::get<std::vector<backend::Message>>(std::move(composed));
        } else {
            for (const corpus::Turn& t : turns) {
                messages.push_back({t.role == corpus::Role::user
                                        ? backend::MsgRole::user
                                        : backend::MsgRole::assistant,
                                    t.content});
            }
        }

        backend::ChatRequest gen_req;
        gen_req.messages = std::move(messages);
        gen_req.model_id = cfg.generator_model;
        gen_req.temperature = cfg.generator_temperature;
        auto generated = backends.generator->complete(gen_req);
        if (!generated) {
            session.abort_reason = "generator " + format_error(generated.error());
            break;
        }
        turns.push_back(corpus::Turn::make(static_cast<int>(turns.size()) + 1,
                                           corpus::Role::assistant,
                                           generated.value().content));

        OracleVerdict verdict = score_response(task, session.transcript,
                                               generated.value().content,
                                               *backends.oracle, cfg);
        if (!verdict.backend_error.empty()) {
            session.abort_reason = "oracle " + verdict.backend_error;
            break;
        }
        session.verdicts.push_back(verdict);
        if (verdict.score >= cfg.success_threshold) {
            session.outcome = Outcome::success;
            break;
        }
        if (round == cfg.max_turns) {
            session.outcome = Outcome::exhausted;
            break;
        }

        backend::ChatRequest sim_req;
        sim_req.model_id = cfg.simulator_model;
        sim_req.temperature = cfg.simulator_temperature;
        sim_req.messages.push_back(
            {backend::MsgRole::system,
             "You play the user in a coding session. You privately know the task "
             "checklist; never paste its items verbatim. Read the conversation and the "
             "evaluator's error report, then write the next user message: concise "
             "corrective feedback, in your own words, that moves the assistant toward "
             "satisfying the checklist. Reply with the message text only."});
        sim_req.messages.push_back(
            {backend::MsgRole::user,
             "Task:\n" + task.initial_instruction + "\n\nChecklist (private):\n" +
                 render_checklist_items(task) + "\nConversation so far:\n" +
                 render_transcript(session.transcript) + "Evaluator's error report:\n" +
                 (verdict.error_report.empty() ? "(none)" : verdict.error_report) +
                 "\n\nWrite the next user message."});
        auto simulated = backends.simulator->complete(sim_req);
        if (!simulated) {
            session.abort_reason = "simulator " + format_error(simulated.error());
            break;
        }
        instruction = simulated.value().content;
    }

    session.turns_used = static_cast<int>(session.verdicts.size());
    if (cfg.ince_enabled) session.pool_snapshot = std::move(pool);
    return session;
}

std::vector<std::string> validate_session(const SimulationSession& s,
                                          const SessionConfig& cfg) {
    std::vector<std::string> violations;
    if (s.turns_used != static_cast<int>(s.verdicts.size())) {
        violations.push_back("turns_used != verdict count");
    }
    if (s.turns_used > cfg.max_turns) violations.push_back("turns_used exceeds max_turns");

    int assistant_turns = 0;
    for (const corpus::Turn& t : s.transcript.turns) {
        if (t.role == corpus::Role::assistant) ++assistant_turns;
    }
    // An abort may preserve one assistant turn whose verdict never arrived.
    const int verdicts = static_cast<int>(s.verdicts.size());
    if (s.outcome == Outcome::aborted) {
        if (assistant_turns != verdicts && assistant_turns != verdicts + 1) {
            violations.push_back("aborted transcript out of step with verdicts");
        }
    } else if (assistant_turns != verdicts) {
        violations.push_back("assistant turn count != verdict count");
    }
    if (!s.transcript.turns.empty()) {
        for (const std::string& v : corpus::validate_conversation(s.transcript)) {
            violations.push_back("transcript: " + v);
        }
    }
    for (std::size_t i = 0; i < s.verdicts.size(); ++i) {
        const OracleVerdict& v = s.verdicts[i];
        if (v.score < 0 || v.score > 10) violations.push_back("score out of range");
        const bool passing = v.score >= cfg.success_threshold;
        if (passing != v.error_report.empty()) {
            violations.push_back("error_report presence disagrees with score");
        }
        const bool last = i + 1 == s.verdicts.size();
        if (!last && passing) violations.push_back("session continued past a passing score");
    }

    switch (s.outcome) {
        case Outcome::success:
            if (s.verdicts.empty() || s.verdicts.back().score < cfg.success_threshold) {
                violations.push_back("success without a passing final verdict");
            }
            break;
        case Outcome::exhausted:
            if (s.turns_used != cfg.max_turns) {
                violations.push_back("exhausted before max_turns");
            }
            if (!s.verdicts.empty() && s.verdicts.back().score >= cfg.success_threshold) {
                violations.push_back("exhausted with a passing final verdict");
            }
            break;
        case Outcome::aborted:
            if (s.abort_reason.empty()) violations.push_back("aborted without a reason");
            return violations;  // partial state; skip the completeness checks
    }
    if (cfg.ince_enabled != s.pool_snapshot.has_value()) {
        violations.push_back("pool snapshot presence disagrees with config");
    }
    if (s.pool_snapshot) {
        for (const std::string& v : s.pool_snapshot->validate()) {
            violations.push_back("pool: " + v);
        }
    }
    return violations;
}

std::vector<SimulationSession> run_batch(std::span<const TaskSeed> tasks,
                                         const SessionConfig& cfg,
                                         const RoleBackends& backends, int jobs) {
    std::vector<SimulationSession> sessions(tasks.size());
    if (jobs <= 1 || tasks.size() <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            sessions[i] = run_session(tasks[i], cfg, backends);
        }
        return sessions;
    }
    std::atomic<std::size_t> next{0};
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(jobs), tasks.size());
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= tasks.size()) return;
                sessions[i] = run_session(tasks[i], cfg, backends);
            }
        });
    }
    for (std::thread& t : pool) t.join();
    return sessions;
}

void annotate_sessions(std::vector<SimulationSession>& sessions,
                       const detector::DetectionConfig& det) {
    for (SimulationSession& s : sessions) {
        s.annotations = detector::detect_heuristic(s.transcript, det);
    }
}

Json session_to_json(const SimulationSession& s) {
    Json j;
    j["task_id"] = s.task_id;
    j["outcome"] = std::string(outcome_name(s.outcome));
    j["turns_used"] = s.turns_used;
    if (!s.abort_reason.empty()) j["abort_reason"] = s.abort_reason;

    Json transcript;
    transcript["id"] = s.transcript.id;
    transcript["source"] = std::string(corpus::source_name(s.transcript.source));
    if (s.transcript.model_name) transcript["model"] = *s.transcript.model_name;
    Json turns = Json::array();
    for (const corpus::Turn& t : s.transcript.turns) {
        Json tj;
        tj["role"] = std::string(corpus::role_name(t.role));
        tj["content"] = t.content;
        turns.push_back(std::move(tj));
    }
    transcript["turns"] = std::move(turns);
    j["transcript"] = std::move(transcript);

    Json verdicts = Json::array();
    for (const OracleVerdict& v : s.verdicts) {
        Json vj;
        vj["score"] = v.score;
        Json items = Json::array();
        for (const VerdictItem& vi : v.per_item) {
            Json ij;
            ij["index"] = vi.index;
            ij["pass"] = vi.pass;
            ij["note"] = vi.note;
            items.push_back(std::move(ij));
        }
        vj["per_item"] = std::move(items);
        vj["error_report"] = v.error_report;
        verdicts.push_back(std::move(vj));
    }
    j["verdicts"] = std::move(verdicts);

    if (s.pool_snapshot) j["pool"] = s.pool_snapshot->to_jsonl();
    if (!s.annotations.empty()) {
        Json annotations = Json::array();
        for (const taxonomy::SmellAnnotation& a : s.annotations) {
            annotations.push_back(Json::parse(taxonomy::serialize_annotation(a)));
        }
        j["annotations"] = std::move(annotations);
    }
    if (!s.warnings.empty()) j["warnings"] = s.warnings;
    return j;
}

Result<SimulationSession> session_from_json(const Json& j) {
    if (!j.is_object()) return Error{Error::Kind::parse, "session is not an object"};
    SimulationSession s;
    s.task_id = j.value("task_id", "");
    auto outcome = outcome_from_name(j.value("outcome", ""));
    if (!outcome) return Error{Error::Kind::parse, "bad outcome"};
    s.outcome = *outcome;
    s.turns_used = j.value("turns_used", 0);
    s.abort_reason = j.value("abort_reason", "");

    if (!j.contains("transcript") || !j["transcript"].is_object()) {
        return Error{Error::Kind::parse, "missing transcript"};
    }
    const Json& tj = j["transcript"];
    const bool empty_transcript =
        !tj.contains("turns") || !tj["turns"].is_array() || tj["turns"].empty();
    if (empty_transcript) {
        // An aborted session can carry an empty transcript skeleton.
        s.transcript.id = tj.value("id", s.task_id);
        if (tj.contains("model") && tj["model"].is_string()) {
            s.transcript.model_name = tj["model"].get<std::string>();
        }
    } else {
        auto transcript = corpus::parse_conversation_line(tj.dump());
        if (!transcript) {
            return Error{Error::Kind::parse, "transcript: " + transcript.error().message};
        }
        s.transcript = std::move(transcript.value());
    }

    if (j.contains("verdicts")) {
        for (const Json& vj : j["verdicts"]) {
            OracleVerdict v;
            v.score = vj.value("score", 0);
            if (vj.contains("per_item")) {
                for (const Json& ij : vj["per_item"]) {
                    v.per_item.push_back({ij.value("index", 0), ij.value("pass", false),
                                          ij.value("note", "")});
                }
            }
            v.error_report = vj.value("error_report", "");
            s.verdicts.push_back(std::move(v));
        }
    }
    if (j.contains("pool")) {
        auto pool = ince::InvariantPool::from_jsonl(j["pool"].get<std::string>());
        if (!pool) return pool.error();
        s.pool_snapshot = std::move(pool.value());
    }
    if (j.contains("annotations")) {
        for (const Json& aj : j["annotations"]) {
            auto a = taxonomy::parse_annotation_line(aj.dump());
            if (!a) return a.error();
            s.annotations.push_back(std::move(a.value()));
        }
    }
    if (j.contains("warnings")) {
        s.warnings = j["warnings"].get<std::vector<std::string>>();
    }
    return s;
}

namespace {

std::string sanitize_for_filename(const std::string& name) {
    std::string out;
    for (char c : name) {
        out += (std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '-' || c == '_')
                   ? c
                   : '_';
    }
    return out.empty() ? "task" : out;
}

}  // namespace

std::optional<Error> write_batch(const std::vector<SimulationSession>& sessions,
                                 const SessionConfig& cfg,
                                 const std::filesystem::path& out_dir) {
    Json manifest;
    manifest["model"] = cfg.generator_model;
    manifest["variant"] = cfg.ince_enabled ? "ince" : "vanilla";
    manifest["ince_enabled"] = cfg.ince_enabled;
    manifest["task_count"] = sessions.size();
    Json files = Json::array();

    for (std::size_t i = 0; i < sessions.size(); ++i) {
        char prefix[8];
        std::snprintf(prefix, sizeof prefix, "%03zu", i + 1);
        const std::string name =
            std::string(prefix) + "_" + sanitize_for_filename(sessions[i].task_id) + ".json";
        files.push_back(name);
        auto err = jsonio::atomic_write(out_dir / name, session_to_json(sessions[i]).dump(2) + "\n");
        if (err) return err;
    }
    manifest["sessions"] = std::move(files);

    Json config;
    config["max_turns"] = cfg.max_turns;
    config["success_threshold"] = cfg.success_threshold;
    config["generator_model"] = cfg.generator_model;
    config["simulator_model"] = cfg.simulator_model;
    config["oracle_model"] = cfg.oracle_model;
    config["ince_model"] = cfg.ince_model;
    config["generator_temperature"] = cfg.generator_temperature;
    config["simulator_temperature"] = cfg.simulator_temperature;
    config["oracle_temperature"] = cfg.oracle_temperature;
    if (cfg.seed) {
        config["seed"] = *cfg.seed;
    } else {
        config["seed"] = nullptr;
    }
    config["checklist_position"] =
        cfg.checklist_position == ince::IncConfig::Position::before_instruction
            ? "before_instruction"
            : "before_history";
    manifest["config"] = std::move(config);

    return jsonio::atomic_write(out_dir / "batch.json", manifest.dump(2) + "\n");
}

Result<LoadedBatch> load_batch(const std::filesystem::path& dir) {
    auto text = jsonio::read_file(dir / "batch.json");
    if (!text) return text.error();
    auto parsed = jsonio::parse_json(text.value(), (dir / "batch.json").string());
    if (!parsed) return parsed.error();
    const Json& manifest = parsed.value();
    if (!manifest.is_object() || !manifest.contains("sessions") ||
        !manifest["sessions"].is_array()) {
        return Error{Error::Kind::parse, dir.string() + ": batch.json missing sessions"};
    }

    LoadedBatch batch;
    batch.model = manifest.value("model", "");
    batch.variant = manifest.value("variant", "vanilla");
    for (const Json& name : manifest["sessions"]) {
        if (!name.is_string()) return Error{Error::Kind::parse, "session filename not a string"};
        auto session_text = jsonio::read_file(dir / name.get<std::string>());
        if (!session_text) return session_text.error();
        auto session_json = jsonio::parse_json(session_text.value(), name.get<std::string>());
        if (!session_json) return session_json.error();
        auto session = session_from_json(session_json.value());
        if (!session) {
            return Error{Error::Kind::parse,
                         name.get<std::string>() + ": " + session.error().message};
        }
        batch.sessions.push_back(std::move(session.value()));
    }
    return batch;
}

}  // namespace ismell::harness
