#include "ismell/ince.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "ismell/jsonio.hpp"

namespace ismell::ince {

using backend::Json;

std::string_view polarity_name(Polarity p) {
    return p == Polarity::must_do ? "must_do" : "must_not";
}

std::optional<Polarity> polarity_from_name(std::string_view name) {
    if (name == "must_do") return Polarity::must_do;
    if (name == "must_not") return Polarity::must_not;
    return std::nullopt;
}

std::string_view pool_action_name(PoolAction a) {
    switch (a) {
        case PoolAction::added: return "added";
        case PoolAction::superseded: return "superseded";
        case PoolAction::retained: return "retained";
    }
    return "";
}

namespace {

std::optional<PoolAction> pool_action_from_name(std::string_view name) {
    if (name == "added") return PoolAction::added;
    if (name == "superseded") return PoolAction::superseded;
    if (name == "retained") return PoolAction::retained;
    return std::nullopt;
}

// Lowercased, space-collapsed text for semantic-duplicate comparison.
std::string normalize_text(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c)) != 0) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out += ' ';
            pending_space = false;
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return out;
}

std::set<std::string> word_set(std::string_view text) {
    std::set<std::string> words;
    std::string current;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) != 0) {
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!current.empty()) {
            words.insert(current);
            current.clear();
        }
    }
    if (!current.empty()) words.insert(current);
    return words;
}

double word_jaccard(std::string_view a, std::string_view b) {
    const auto wa = word_set(a);
    const auto wb = word_set(b);
    if (wa.empty() && wb.empty()) return 0.0;
    std::size_t inter = 0;
    for (const std::string& w : wa) inter += wb.count(w);
    return static_cast<double>(inter) / static_cast<double>(wa.size() + wb.size() - inter);
}

std::string slug_from_text(std::string_view text) {
    std::string slug;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) != 0) {
            slug += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!slug.empty() && slug.back() != '-') {
            slug += '-';
        }
        if (slug.size() >= 40) break;
    }
    while (!slug.empty() && slug.back() == '-') slug.pop_back();
    return slug.empty() ? "general" : slug;
}

}  // namespace

// ---------------------------------------------------------------------------
// InvariantPool
// ---------------------------------------------------------------------------

std::vector<const Constraint*> InvariantPool::active() const {
    std::vector<const Constraint*> out;
    for (const Constraint& c : constraints_) {
        if (c.status == ConstraintStatus::active) out.push_back(&c);
    }
    return out;
}

const Constraint* InvariantPool::find(const std::string& id) const {
    for (const Constraint& c : constraints_) {
        if (c.id == id) return &c;
    }
    return nullptr;
}

const Constraint* InvariantPool::active_for(const std::string& topic_key,
                                            Polarity polarity) const {
    for (const Constraint& c : constraints_) {
        if (c.status == ConstraintStatus::active && c.topic_key == topic_key &&
            c.polarity == polarity) {
            return &c;
        }
    }
    return nullptr;
}

void InvariantPool::begin_step() {
    ++revision_;
    step_open_ = true;
    step_touched_ = false;
}

void InvariantPool::end_step() {
    if (!step_touched_) {
        // No-change marker so the history still shows the step happened.
        log_.push_back({revision_, PoolAction::retained, ""});
    }
    step_open_ = false;
    step_touched_ = false;
}

void InvariantPool::log_action(PoolAction action, const std::string& id) {
    log_.push_back({revision_, action, id});
    step_touched_ = true;
}

std::string InvariantPool::add(Polarity polarity, std::string text, int origin_turn,
                               std::string topic_key) {
    if (!step_open_) ++revision_;  // standalone mutation is its own step
    const Constraint* previous = active_for(topic_key, polarity);
    std::string previous_id = previous ? previous->id : "";

    Constraint c;
    c.id = "c" + std::to_string(next_id_++);
    c.polarity = polarity;
    c.text = std::move(text);
    c.origin_turn = origin_turn;
    c.topic_key = std::move(topic_key);
    const std::string new_id = c.id;
    constraints_.push_back(std::move(c));
    log_action(PoolAction::added, new_id);

    if (!previous_id.empty()) {
        for (Constraint& old : constraints_) {
            if (old.id == previous_id) {
                old.status = ConstraintStatus::superseded;
                old.superseded_by = new_id;
            }
        }
        log_action(PoolAction::superseded, previous_id);
    }
    return new_id;
}

void InvariantPool::supersede(const std::string& old_id, const std::string& new_id) {
    if (!step_open_) ++revision_;
    for (Constraint& c : constraints_) {
        if (c.id == old_id && c.status == ConstraintStatus::active) {
            c.status = ConstraintStatus::superseded;
            c.superseded_by = new_id;
            log_action(PoolAction::superseded, old_id);
            return;
        }
    }
}

void InvariantPool::note_retained(const std::string& id) {
    if (!step_open_) ++revision_;
    log_action(PoolAction::retained, id);
}

std::vector<std::string> InvariantPool::validate() const {
    std::vector<std::string> violations;
    std::set<std::string> ids;
    long long last_num = 0;
    for (const Constraint& c : constraints_) {
        if (!ids.insert(c.id).second) violations.push_back("duplicate id " + c.id);
        if (c.id.size() < 2 || c.id[0] != 'c') {
            violations.push_back("malformed id " + c.id);
            continue;
        }
        const long long num = std::atoll(c.id.c_str() + 1);
        if (num <= last_num) violations.push_back("ids not ascending at " + c.id);
        last_num = num;
        const bool superseded = c.status == ConstraintStatus::superseded;
        if (superseded != !c.superseded_by.empty()) {
            violations.push_back(c.id + ": status and superseded_by disagree");
        }
        if (superseded) {
            const Constraint* successor = find(c.superseded_by);
            if (successor == nullptr) {
                violations.push_back(c.id + ": successor " + c.superseded_by + " missing");
            } else if (successor->origin_turn < c.origin_turn) {
                violations.push_back(c.id + ": superseded by an earlier-origin constraint");
            }
        }
    }
    std::set<std::pair<std::string, Polarity>> active_keys;
    for (const Constraint& c : constraints_) {
        if (c.status != ConstraintStatus::active) continue;
        if (!active_keys.insert({c.topic_key, c.polarity}).second) {
            violations.push_back("two active constraints for topic " + c.topic_key);
        }
    }
    int last_rev = 0;
    for (const PoolLogEntry& e : log_) {
        if (e.revision < last_rev) violations.push_back("log revisions decrease");
        last_rev = e.revision;
        if (!e.constraint_id.empty() && find(e.constraint_id) == nullptr) {
            violations.push_back("log references missing " + e.constraint_id);
        }
    }
    if (last_rev > revision_) violations.push_back("revision behind log");
    return violations;
}

std::string InvariantPool::to_jsonl() const {
    std::string out;
    Json meta;
    meta["pool_revision"] = revision_;
    meta["next_id"] = next_id_;
    out += meta.dump();
    out += '\n';
    for (const Constraint& c : constraints_) {
        Json j;
        j["id"] = c.id;
        j["polarity"] = std::string(polarity_name(c.polarity));
        j["text"] = c.text;
        j["origin_turn"] = c.origin_turn;
        j["topic_key"] = c.topic_key;
        j["status"] = c.status == ConstraintStatus::active ? "active" : "superseded";
        if (!c.superseded_by.empty()) j["superseded_by"] = c.superseded_by;
        out += j.dump();
        out += '\n';
    }
    for (const PoolLogEntry& e : log_) {
        Json j;
        j["log_revision"] = e.revision;
        j["action"] = std::string(pool_action_name(e.action));
        j["constraint_id"] = e.constraint_id;
        out += j.dump();
        out += '\n';
    }
    return out;
}

Result<InvariantPool> InvariantPool::from_jsonl(const std::string& text) {
    InvariantPool pool;
    bool meta_seen = false;
    for (const auto& [line_no, line] : jsonio::split_jsonl(text)) {
        auto parsed = jsonio::parse_json(line, "pool line " + std::to_string(line_no));
        if (!parsed) return parsed.error();
        const Json& j = parsed.value();
        if (!j.is_object()) return Error{Error::Kind::parse, "pool line not an object"};
        if (j.contains("pool_revision")) {
            if (meta_seen) return Error{Error::Kind::parse, "duplicate pool meta line"};
            meta_seen = true;
            pool.revision_ = j["pool_revision"].get<int>();
            if (j.contains("next_id")) pool.next_id_ = j["next_id"].get<long long>();
            continue;
        }
        if (j.contains("log_revision")) {
            PoolLogEntry e;
            e.revision = j["log_revision"].get<int>();
            auto action = pool_action_from_name(j.value("action", ""));
            if (!action) return Error{Error::Kind::parse, "unknown pool action"};
            e.action = *action;
            e.constraint_id = j.value("constraint_id", "");
            pool.log_.push_back(std::move(e));
            continue;
        }
        Constraint c;
        if (!j.contains("id") || !j["id"].is_string()) {
            return Error{Error::Kind::parse, "constraint line missing id"};
        }
        c.id = j["id"].get<std::string>();
        auto polarity = polarity_from_name(j.value("polarity", ""));
        if (!polarity) return Error{Error::Kind::parse, c.id + ": bad polarity"};
        c.polarity = *polarity;
        c.text = j.value("text", "");
        c.origin_turn = j.value("origin_turn", 0);
        c.topic_key = j.value("topic_key", "");
        const std::string status = j.value("status", "active");
        if (status == "active") {
            c.status = ConstraintStatus::active;
        } else if (status == "superseded") {
            c.status = ConstraintStatus::superseded;
        } else {
            return Error{Error::Kind::parse, c.id + ": bad status"};
        }
        c.superseded_by = j.value("superseded_by", "");
        pool.constraints_.push_back(std::move(c));
    }
    if (!meta_seen) return Error{Error::Kind::parse, "pool meta line missing"};
    auto violations = pool.validate();
    if (!violations.empty()) {
        return Error{Error::Kind::validation, "pool snapshot: " + violations.front()};
    }
    return pool;
}

// ---------------------------------------------------------------------------
// Invariant extraction
// ---------------------------------------------------------------------------

namespace {

std::string render_active(const InvariantPool& pool) {
    std::string out;
    for (const Constraint* c : pool.active()) {
        out += "[" + c->id + "] (" + std::string(polarity_name(c->polarity)) + ", topic " +
               c->topic_key + ") " + c->text + "\n";
    }
    if (out.empty()) out = "(none)\n";
    return out;
}

Json candidate_schema() {
    return Json::parse(R"({
        "type": "object",
        "required": ["candidates"],
        "properties": {
            "candidates": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["polarity", "text"],
                    "properties": {
                        "polarity": {"type": "string", "enum": ["must_do", "must_not"]},
                        "text": {"type": "string"},
                        "topic_key": {"type": "string"},
                        "duplicate_of": {"type": "string"}
                    }
                }
            }
        }
    })");
}

const char* kExtractionSystemPrompt =
    "You maintain a pool of lasting constraints for a coding conversation. Read the "
    "newest user message and list the durable requirements (polarity must_do) and "
    "prohibitions (polarity must_not) it introduces: rules that should keep holding in "
    "later turns, not one-off requests. Phrase each as a short imperative. Give each a "
    "short topic_key naming what it constrains so later revisions of the same rule can "
    "replace it. If a rule is already covered by an active constraint, reference it via "
    "duplicate_of instead of restating it. An empty list is fine. Reply with JSON only, "
    "matching {\"candidates\": [{\"polarity\", \"text\", \"topic_key\", "
    "\"duplicate_of\"}]}.";

}  // namespace

ExtractionResult extract_invariants(std::span<const corpus::Turn> history,
                                    const InvariantPool& pool, backend::ChatBackend& be,
                                    const IncConfig& cfg) {
    ExtractionResult result;
    result.pool = pool;
    if (history.empty() || history.back().role != corpus::Role::user) {
        result.degraded = true;
        result.warnings.push_back("history does not end with a user turn");
        return result;
    }

    std::string context;
    for (std::size_t i = 0; i + 1 < history.size(); ++i) {
        const corpus::Turn& t = history[i];
        context += "Turn " + std::to_string(t.index) + " (" +
                   std::string(corpus::role_name(t.role)) + "): " + t.content + "\n\n";
    }
    if (context.empty()) context = "(start of conversation)\n\n";

    backend::ChatRequest req;
    req.model_id = cfg.model;
    req.temperature = cfg.temperature;
    req.messages.push_back({backend::MsgRole::system, kExtractionSystemPrompt});
    req.messages.push_back({backend::MsgRole::user,
                            "Active constraints:\n" + render_active(pool) +
                                "\nConversation so far:\n" + context +
                                "Newest user message:\n" + history.back().content});
    auto reply = backend::complete_structured(be, std::move(req), candidate_schema());
    if (!reply) {
        result.degraded = true;
        result.warnings.push_back("invariant extraction failed: " + reply.error().message);
        return result;
    }

    const int origin_turn = history.back().index;
    result.pool.begin_step();
    for (const Json& candidate : reply.value().value["candidates"]) {
        const std::string text = candidate.value("text", "");
        auto polarity = polarity_from_name(candidate.value("polarity", ""));
        if (text.empty() || !polarity) {
            result.warnings.push_back("dropped malformed candidate");
            continue;
        }
        const std::string duplicate_of = candidate.value("duplicate_of", "");
        if (!duplicate_of.empty()) {
            const Constraint* existing = result.pool.find(duplicate_of);
            if (existing != nullptr && existing->status == ConstraintStatus::active) {
                result.pool.note_retained(duplicate_of);
                continue;
            }
        }

        std::string topic_key = candidate.value("topic_key", "");
        if (topic_key.empty()) {
            // Fall back to the most lexically similar active constraint's
            // topic, else mint one from the text.
            double best = 0.0;
            for (const Constraint* c : result.pool.active()) {
                const double sim = word_jaccard(text, c->text);
                if (sim > best) {
                    best = sim;
                    topic_key = c->topic_key;
                }
            }
            if (best == 0.0) topic_key = slug_from_text(text);
        }

        const Constraint* existing = result.pool.active_for(topic_key, *polarity);
        if (existing != nullptr && normalize_text(existing->text) == normalize_text(text)) {
            result.pool.note_retained(existing->id);
            continue;
        }
        result.pool.add(*polarity, text, origin_turn, topic_key);
    }
    result.pool.end_step();
    return result;
}

// ---------------------------------------------------------------------------
// Instruction audit
// ---------------------------------------------------------------------------

namespace {

Json audit_schema() {
    return Json::parse(R"({
        "type": "object",
        "required": ["blocking_issues", "conflicts", "requirements"],
        "properties": {
            "blocking_issues": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["smell", "description"],
                    "properties": {
                        "smell": {"type": "string", "enum": [
                            "ambiguous_instruction",
                            "incomplete_instruction",
                            "cross_turn_inconsistency"]},
                        "description": {"type": "string"}
                    }
                }
            },
            "conflicts": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["constraint_id", "replacement_text"],
                    "properties": {
                        "constraint_id": {"type": "string"},
                        "replacement_text": {"type": "string"},
                        "replacement_polarity":
                            {"type": "string", "enum": ["must_do", "must_not"]},
                        "note": {"type": "string"}
                    }
                }
            },
            "requirements": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["polarity", "text"],
                    "properties": {
                        "polarity": {"type": "string", "enum": ["must_do", "must_not"]},
                        "text": {"type": "string"}
                    }
                }
            }
        }
    })");
}

const char* kAuditSystemPrompt =
    "You audit the next user instruction of a coding conversation before the assistant "
    "answers it. Cross-reference the instruction against the active constraints.\n"
    "- blocking_issues: report ambiguous_instruction when the instruction has several "
    "materially different readings, incomplete_instruction when information needed to act "
    "is missing, and cross_turn_inconsistency when it contradicts the conversation in a "
    "way that cannot be resolved by simply updating a constraint.\n"
    "- conflicts: when the instruction deliberately changes an active constraint, name "
    "the constraint id and give replacement_text (the newest instruction wins).\n"
    "- requirements: short-lived requirements or prohibitions specific to this "
    "instruction that the answer must honor.\n"
    "Empty lists are fine. Reply with JSON only.";

ConstraintChecklist checklist_from_pool(const InvariantPool& pool) {
    ConstraintChecklist checklist;
    for (const Constraint* c : pool.active()) {
        checklist.items.push_back({c->text, c->id, c->polarity});
    }
    return checklist;
}

}  // namespace

AuditResult audit_instruction(const InvariantPool& pool, const std::string& instruction,
                              std::span<const corpus::Turn> history,
                              backend::ChatBackend& be, const IncConfig& cfg) {
    AuditResult result;
    result.pool = pool;

    std::string context;
    for (const corpus::Turn& t : history) {
        context += "Turn " + std::to_string(t.index) + " (" +
                   std::string(corpus::role_name(t.role)) + "): " + t.content + "\n\n";
    }
    if (context.empty()) context = "(start of conversation)\n\n";

    backend::ChatRequest req;
    req.model_id = cfg.model;
    req.temperature = cfg.temperature;
    req.messages.push_back({backend::MsgRole::system, kAuditSystemPrompt});
    req.messages.push_back({backend::MsgRole::user,
                            "Active constraints:\n" + render_active(pool) +
                                "\nConversation so far:\n" + context +
                                "Next instruction:\n" + instruction});
    auto reply = backend::complete_structured(be, std::move(req), audit_schema());
    if (!reply) {
        // Degraded mode still provides the checklist the pool already implies.
        result.checklist = checklist_from_pool(pool);
        result.checklist.degraded = true;
        result.degraded = true;
        return result;
    }
    const Json& verdict = reply.value().value;

    for (const Json& issue : verdict["blocking_issues"]) {
        auto smell = taxonomy::smell_from_name(issue["smell"].get<std::string>());
        if (!smell) continue;  // schema enum already restricts this
        result.checklist.blocking_issues.push_back(
            {*smell, issue["description"].get<std::string>()});
    }

    const int instruction_turn =
        history.empty() ? 1 : history.back().index + 1;
    bool step_open = false;
    for (const Json& conflict : verdict["conflicts"]) {
        const std::string old_id = conflict["constraint_id"].get<std::string>();
        const Constraint* old = result.pool.find(old_id);
        if (old == nullptr || old->status != ConstraintStatus::active) continue;
        const Polarity old_polarity = old->polarity;
        const std::string topic = old->topic_key;
        auto polarity = polarity_from_name(conflict.value("replacement_polarity", ""));
        if (!step_open) {
            result.pool.begin_step();
            step_open = true;
        }
        const std::string new_id =
            result.pool.add(polarity ? *polarity : old_polarity,
                            conflict["replacement_text"].get<std::string>(),
                            instruction_turn, topic);
        // A polarity flip escapes the add()'s same-key supersede; close it out.
        if (const Constraint* still = result.pool.find(old_id);
            still != nullptr && still->status == ConstraintStatus::active) {
            result.pool.supersede(old_id, new_id);
        }
        result.checklist.conflicts_resolved.push_back(
            {old_id, new_id, conflict.value("note", "")});
    }
    if (step_open) result.pool.end_step();

    result.checklist.items = checklist_from_pool(result.pool).items;
    for (const Json& requirement : verdict["requirements"]) {
        auto polarity = polarity_from_name(requirement["polarity"].get<std::string>());
        const std::string text = requirement["text"].get<std::string>();
        if (!polarity || text.empty()) continue;
        result.checklist.items.push_back({text, "current_instruction", *polarity});
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checklist rendering and prompt composition
// ---------------------------------------------------------------------------

std::string render_checklist(const ConstraintChecklist& checklist) {
    std::vector<const ChecklistItem*> requirements;
    std::vector<const ChecklistItem*> prohibitions;
    for (const ChecklistItem& item : checklist.items) {
        (item.polarity == Polarity::must_do ? requirements : prohibitions).push_back(&item);
    }
    if (requirements.empty() && prohibitions.empty()) return "";

    auto tag = [](const ChecklistItem& item) {
        return item.source == "current_instruction" ? std::string("current") : item.source;
    };
    std::string out =
        "Constraint checklist distilled from this conversation. Honor every item when "
        "answering the next instruction.";
    if (!requirements.empty()) {
        out += "\n\nREQUIREMENTS (" + std::to_string(requirements.size()) + "):";
        for (std::size_t i = 0; i < requirements.size(); ++i) {
            out += "\n" + std::to_string(i + 1) + ". [" + tag(*requirements[i]) + "] " +
                   requirements[i]->text;
        }
    }
    if (!prohibitions.empty()) {
        out += "\n\nPROHIBITIONS (" + std::to_string(prohibitions.size()) + "):";
        for (std::size_t i = 0; i < prohibitions.size(); ++i) {
            out += "\n" + std::to_string(i + 1) + ". [" + tag(*prohibitions[i]) + "] " +
                   prohibitions[i]->text;
        }
    }
    return out;
}

ComposeOutcome compose_prompt(std::span<const corpus::Turn> history,
                              const ConstraintChecklist& checklist,
                              const std::string& instruction, bool override_block,
                              IncConfig::Position position) {
    if (!checklist.injectable() && !override_block) {
        return ComposeRefusal{checklist.blocking_issues};
    }
    const std::string preamble = render_checklist(checklist);
    std::vector<backend::Message> messages;
    if (!preamble.empty() && position == IncConfig::Position::before_history) {
        messages.push_back({backend::MsgRole::system, preamble});
    }
    for (const corpus::Turn& t : history) {
        messages.push_back({t.role == corpus::Role::user ? backend::MsgRole::user
                                                         : backend::MsgRole::assistant,
                            t.content});
    }
    if (!preamble.empty() && position == IncConfig::Position::before_instruction) {
        messages.push_back({backend::MsgRole::system, preamble});
    }
    messages.push_back({backend::MsgRole::user, instruction});
    return messages;
}

}  // namespace ismell::ince
