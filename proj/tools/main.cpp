#include <CLI11.hpp>

#include <iostream>
#include <memory>

#include "ismell/config.hpp"
#include "ismell/corpus.hpp"
#include "ismell/detector.hpp"
#include "ismell/filter.hpp"
#include "ismell/harness.hpp"
#include "ismell/ince.hpp"
#include "ismell/jsonio.hpp"
#include "ismell/metrics.hpp"

namespace {

using namespace ismell;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct GlobalOptions {
    std::string config_path;
    std::string cassette_path;
    std::string record_path;
    int jobs = 0;  // 0 -> take the config value
    bool verbose = false;
};

struct BackendSetup {
    std::shared_ptr<backend::ChatBackend> backend;  // may be null
    bool strict_sequence = false;
};

int fail(const Error& e) {
    std::cerr << "error: " << error_kind_name(e.kind) << ": " << e.message << "\n";
    return kExitFailure;
}

int usage_error(const std::string& message) {
    std::cerr << "error: " << message << "\n";
    return kExitUsage;
}

Result<BackendSetup> build_backend(const GlobalOptions& opts, const config::AppConfig& cfg) {
    BackendSetup setup;
    if (!opts.cassette_path.empty() && !opts.record_path.empty()) {
        return Error{Error::Kind::usage, "--cassette and --record are mutually exclusive"};
    }
    if (!opts.cassette_path.empty()) {
        auto cassette = backend::CassetteBackend::open(opts.cassette_path);
        if (!cassette) return cassette.error();
        setup.strict_sequence =
            cassette.value()->mode() == backend::CassetteMode::strict_sequence;
        setup.backend = cassette.value();
        return setup;
    }
    if (!cfg.endpoint.empty()) {
        backend::LiveConfig live;
        live.endpoint = cfg.endpoint;
        live.api_key = config::resolve_api_key(cfg);
        setup.backend = std::make_shared<backend::HttpBackend>(live);
        if (!opts.record_path.empty()) {
            setup.backend =
                std::make_shared<backend::RecordingBackend>(setup.backend, opts.record_path);
        }
        return setup;
    }
    if (!opts.record_path.empty()) {
        return Error{Error::Kind::usage, "--record needs a configured endpoint"};
    }
    return setup;  // no backend
}

Result<std::vector<corpus::Conversation>> load_corpus(const std::string& path, bool verbose) {
    auto report = corpus::parse_corpus_file(path);
    if (!report) return report.error();
    for (const corpus::RecordRejection& r : report.value().rejections) {
        std::cerr << path << ":" << r.line_number << ": rejected (" << r.reason << ")"
                  << (r.detail.empty() ? "" : ": " + r.detail) << "\n";
    }
    for (const std::string& w : report.value().warnings) {
        std::cerr << path << ": warning: " << w << "\n";
    }
    if (verbose) {
        std::cerr << path << ": " << report.value().accepted << " conversations accepted, "
                  << report.value().rejected << " rejected\n";
    }
    return std::move(report.value().conversations);
}

int run_filter(const GlobalOptions& opts, const config::AppConfig& cfg,
               const std::string& in_path, const std::string& out_path,
               const std::string& rules_path, const std::string& stage_name,
               const std::string& report_path) {
    auto conversations = load_corpus(in_path, opts.verbose);
    if (!conversations) return fail(conversations.error());

    filter::LanguageRuleSet rules = filter::default_rules();
    if (!rules_path.empty()) {
        auto loaded = filter::load_rules(rules_path);
        if (!loaded) return fail(loaded.error());
        rules = std::move(loaded.value());
    }

    const filter::Stage stage =
        stage_name == "post" ? filter::Stage::post : filter::Stage::pre;
    std::shared_ptr<backend::ChatBackend> be;
    if (stage == filter::Stage::post) {
        auto setup = build_backend(opts, cfg);
        if (!setup) {
            return setup.error().kind == Error::Kind::usage
                       ? usage_error(setup.error().message)
                       : fail(setup.error());
        }
        be = setup.value().backend;
        if (!be) return usage_error("post stage needs --cassette or a configured endpoint");
    }

    auto result = filter::filter_corpus(conversations.value(), rules, be.get(), stage);
    for (const std::string& w : result.stats.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    if (!out_path.empty()) {
        if (auto err = corpus::write_corpus_file(result.kept, out_path)) return fail(*err);
    }
    const std::string report = filter::count_report_to_json(result.stats).dump(2) + "\n";
    if (report_path.empty()) {
        std::cout << report;
    } else if (auto err = jsonio::atomic_write(report_path, report)) {
        return fail(*err);
    }
    return kExitOk;
}

int run_disentangle(const GlobalOptions& opts, const config::AppConfig& cfg,
                    const std::string& in_path, const std::string& out_path) {
    auto conversations = load_corpus(in_path, opts.verbose);
    if (!conversations) return fail(conversations.error());
    auto setup = build_backend(opts, cfg);
    if (!setup) {
        return setup.error().kind == Error::Kind::usage ? usage_error(setup.error().message)
                                                        : fail(setup.error());
    }
    if (!setup.value().backend) {
        return usage_error("disentangle needs --cassette or a configured endpoint");
    }

    std::vector<corpus::Conversation> out;
    bool failed = false;
    for (const corpus::Conversation& c : conversations.value()) {
        auto outcome = filter::disentangle(c, *setup.value().backend);
        if (!outcome) {
            std::cerr << "error: " << outcome.error().message << "; kept unsplit\n";
            out.push_back(c);
            failed = true;
            continue;
        }
        for (const std::string& w : outcome.value().warnings) {
            std::cerr << "warning: " << w << "\n";
        }
        for (corpus::Conversation& part : outcome.value().parts) {
            out.push_back(std::move(part));
        }
    }
    if (auto err = corpus::write_corpus_file(out, out_path)) return fail(*err);
    if (opts.verbose) {
        std::cerr << out.size() << " conversations written to " << out_path << "\n";
    }
    return failed ? kExitFailure : kExitOk;
}

int run_annotate(const GlobalOptions& opts, const config::AppConfig& cfg,
                 const std::string& in_path, const std::string& out_path,
                 bool heuristics_only, const std::vector<std::string>& smell_names) {
    auto conversations = load_corpus(in_path, opts.verbose);
    if (!conversations) return fail(conversations.error());

    detector::DetectionConfig det = cfg.detection;
    if (heuristics_only) det.heuristics_only = true;
    for (const std::string& name : smell_names) {
        auto smell = taxonomy::smell_from_name(name);
        if (!smell) return usage_error("unknown smell " + name);
        det.enabled_smells.insert(*smell);
    }

    std::shared_ptr<backend::ChatBackend> be;
    if (!det.heuristics_only) {
        auto setup = build_backend(opts, cfg);
        if (!setup) {
            return setup.error().kind == Error::Kind::usage
                       ? usage_error(setup.error().message)
                       : fail(setup.error());
        }
        be = setup.value().backend;
        if (!be) {
            return usage_error(
                "annotate needs --cassette or a configured endpoint unless "
                "--heuristics-only is set");
        }
    }

    std::vector<taxonomy::SmellAnnotation> annotations;
    for (const corpus::Conversation& c : conversations.value()) {
        auto result = detector::detect(c, det, be.get());
        if (!result) return fail(result.error());
        for (const detector::UndeterminedPair& u : result.value().undetermined) {
            std::cerr << "warning: " << c.id << " turn " << u.turn_index << " "
                      << taxonomy::info(u.smell).id_name << " undetermined: " << u.reason
                      << "\n";
        }
        annotations.insert(annotations.end(), result.value().annotations.begin(),
                           result.value().annotations.end());
    }
    if (auto err = taxonomy::write_annotations(annotations, out_path)) return fail(*err);
    if (opts.verbose) {
        std::cerr << annotations.size() << " annotations written to " << out_path << "\n";
    }
    return kExitOk;
}

int run_simulate(const GlobalOptions& opts, const config::AppConfig& cfg,
                 const std::string& tasks_path, const std::string& out_dir, bool ince_flag,
                 const std::string& model_override, int max_turns_override,
                 int threshold_override) {
    auto tasks = harness::load_tasks(tasks_path);
    if (!tasks) return fail(tasks.error());
    for (const std::string& w : tasks.value().warnings) {
        std::cerr << "warning: " << w << "\n";
    }

    harness::SessionConfig session = cfg.session;
    if (ince_flag) session.ince_enabled = true;
    if (!model_override.empty()) session.generator_model = model_override;
    if (max_turns_override > 0) session.max_turns = max_turns_override;
    if (threshold_override >= 0) session.success_threshold = threshold_override;
    for (const std::string& v : harness::validate_session_config(session)) {
        return usage_error("session config: " + v);
    }

    auto setup = build_backend(opts, cfg);
    if (!setup) {
        return setup.error().kind == Error::Kind::usage ? usage_error(setup.error().message)
                                                        : fail(setup.error());
    }
    if (!setup.value().backend) {
        return usage_error("simulate needs --cassette or a configured endpoint");
    }
    harness::RoleBackends backends;
    backends.generator = setup.value().backend;
    backends.simulator = setup.value().backend;
    backends.oracle = setup.value().backend;

    int jobs = opts.jobs > 0 ? opts.jobs : cfg.jobs;
    if (setup.value().strict_sequence && jobs > 1) {
        std::cerr << "note: strict-sequence cassette; forcing --jobs 1\n";
        jobs = 1;
    }

    auto sessions = harness::run_batch(tasks.value().tasks, session, backends, jobs);
    harness::annotate_sessions(sessions, cfg.detection);
    if (auto err = harness::write_batch(sessions, session, out_dir)) return fail(*err);

    bool any_aborted = false;
    for (const harness::SimulationSession& s : sessions) {
        if (s.outcome == harness::Outcome::aborted) {
            any_aborted = true;
            std::cerr << "session " << s.task_id << " aborted: " << s.abort_reason << "\n";
        }
    }
    metrics::MetricsReport report = metrics::compute_tsr(sessions);
    std::cout << "sessions=" << report.n_total << " successes=" << report.n_success
              << " tsr=" << format_percent(report.tsr_percent)
              << " ats=" << (report.ats ? format_2dp(*report.ats) : "-") << "\n";
    return any_aborted ? kExitFailure : kExitOk;
}

int run_report(const std::vector<std::string>& batch_dirs,
               const std::string& annotations_path, const std::string& format_name,
               const std::string& out_path) {
    std::vector<metrics::BatchSummary> batches;
    for (const std::string& dir : batch_dirs) {
        auto loaded = harness::load_batch(dir);
        if (!loaded) return fail(loaded.error());
        metrics::BatchSummary summary;
        summary.model = loaded.value().model;
        summary.variant = loaded.value().variant == "ince" ? metrics::Variant::ince
                                                           : metrics::Variant::vanilla;
        summary.sessions = std::move(loaded.value().sessions);
        batches.push_back(std::move(summary));
    }
    std::vector<taxonomy::SmellAnnotation> extra;
    if (!annotations_path.empty()) {
        auto loaded = taxonomy::load_annotations(annotations_path);
        if (!loaded) return fail(loaded.error());
        extra = std::move(loaded.value());
    }
    const metrics::ReportFormat format = format_name == "csv" ? metrics::ReportFormat::csv
                                                              : metrics::ReportFormat::markdown;
    metrics::ReportDocuments docs = metrics::render_reports(batches, extra, format);
    if (out_path.empty()) {
        std::cout << docs.combined;
    } else if (auto err = jsonio::atomic_write(out_path, docs.combined)) {
        return fail(*err);
    }
    return kExitOk;
}

int run_rules(const std::string& out_path) {
    const std::string text = filter::serialize_rules(filter::default_rules());
    if (out_path.empty()) {
        std::cout << text;
    } else if (auto err = jsonio::atomic_write(out_path, text)) {
        return fail(*err);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interaction-smell toolkit for multi-turn coding conversations"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "JSON configuration file");
    app.add_option("--cassette", opts.cassette_path, "replay backend calls from a cassette");
    app.add_option("--record", opts.record_path, "record live backend calls to a cassette");
    app.add_option("--jobs", opts.jobs, "concurrent sessions (simulate)");
    app.add_flag("--verbose", opts.verbose, "progress details on stderr");

    std::string in_path, out_path, rules_path, report_path;
    std::string stage_name = "pre";
    auto* filter_cmd = app.add_subcommand("filter", "keep coding-related conversations");
    filter_cmd->add_option("--in", in_path, "corpus JSONL")->required();
    filter_cmd->add_option("--out", out_path, "kept conversations JSONL");
    filter_cmd->add_option("--rules", rules_path, "language rule JSONL (default: built-in)");
    filter_cmd->add_option("--stage", stage_name, "pre or post (post disentangles)")
        ->check(CLI::IsMember({"pre", "post"}));
    filter_cmd->add_option("--report", report_path, "write count report JSON here");

    auto* disentangle_cmd =
        app.add_subcommand("disentangle", "split multi-topic conversations");
    disentangle_cmd->add_option("--in", in_path, "corpus JSONL")->required();
    disentangle_cmd->add_option("--out", out_path, "output JSONL")->required();

    bool heuristics_only = false;
    std::vector<std::string> smell_names;
    auto* annotate_cmd = app.add_subcommand("annotate", "detect interaction smells");
    annotate_cmd->add_option("--in", in_path, "corpus JSONL")->required();
    annotate_cmd->add_option("--out", out_path, "annotation JSONL")->required();
    annotate_cmd->add_flag("--heuristics-only", heuristics_only,
                           "deterministic detectors only, no judge");
    annotate_cmd->add_option("--smell", smell_names, "restrict to these smells (repeatable)");

    std::string tasks_path, batch_dir, model_override;
    bool ince_flag = false;
    int max_turns_override = 0;
    int threshold_override = -1;
    auto* simulate_cmd = app.add_subcommand("simulate", "run closed-loop sessions");
    simulate_cmd->add_option("--tasks", tasks_path, "task JSONL")->required();
    simulate_cmd->add_option("--out", batch_dir, "batch output directory")->required();
    simulate_cmd->add_flag("--ince", ince_flag, "enable the constraint pipeline");
    simulate_cmd->add_option("--model", model_override, "generator model id");
    simulate_cmd->add_option("--max-turns", max_turns_override, "turn cap override");
    simulate_cmd->add_option("--threshold", threshold_override, "success score override");

    std::vector<std::string> batch_dirs;
    std::string annotations_path, format_name = "markdown";
    auto* report_cmd = app.add_subcommand("report", "render metric tables from batches");
    report_cmd->add_option("--batch", batch_dirs, "batch directory (repeatable)")->required();
    report_cmd->add_option("--annotations", annotations_path, "extra annotation JSONL");
    report_cmd->add_option("--format", format_name, "markdown or csv")
        ->check(CLI::IsMember({"markdown", "csv"}));
    report_cmd->add_option("--out", out_path, "write the combined document here");

    auto* rules_cmd = app.add_subcommand("rules", "dump the built-in language rules");
    rules_cmd->add_option("--out", out_path, "output JSONL (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    config::AppConfig cfg;
    if (!opts.config_path.empty()) {
        auto loaded = config::load_app_config(opts.config_path);
        if (!loaded) return fail(loaded.error());
        cfg = std::move(loaded.value());
    }

    if (app.got_subcommand(filter_cmd)) {
        return run_filter(opts, cfg, in_path, out_path, rules_path, stage_name, report_path);
    }
    if (app.got_subcommand(disentangle_cmd)) {
        return run_disentangle(opts, cfg, in_path, out_path);
    }
    if (app.got_subcommand(annotate_cmd)) {
        return run_annotate(opts, cfg, in_path, out_path, heuristics_only, smell_names);
    }
    if (app.got_subcommand(simulate_cmd)) {
        return run_simulate(opts, cfg, tasks_path, batch_dir, ince_flag, model_override,
                            max_turns_override, threshold_override);
    }
    if (app.got_subcommand(report_cmd)) {
        return run_report(batch_dirs, annotations_path, format_name, out_path);
    }
    if (app.got_subcommand(rules_cmd)) {
        return run_rules(out_path);
    }
    return kExitUsage;
}
