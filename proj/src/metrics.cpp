#include "ismell/metrics.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace ismell::metrics {

MetricsReport compute_tsr(std::span<const harness::SimulationSession> sessions) {
    MetricsReport report;
    report.n_total = static_cast<int>(sessions.size());
    for (const harness::SimulationSession& s : sessions) {
        if (s.outcome == harness::Outcome::success) ++report.n_success;
        ++report.turns_histogram[s.turns_used];
    }
    report.tsr_percent =
        report.n_total == 0 ? Ratio{0, 1} : Ratio{100LL * report.n_success, report.n_total};
    report.ats = compute_ats(sessions);
    return report;
}

std::optional<Ratio> compute_ats(std::span<const harness::SimulationSession> sessions) {
    long long turns = 0;
    long long successes = 0;
    for (const harness::SimulationSession& s : sessions) {
        if (s.outcome != harness::Outcome::success) continue;
        turns += s.turns_used;
        ++successes;
    }
    if (successes == 0) return std::nullopt;
    return Ratio{turns, successes};
}

double cohen_kappa(std::span<const std::string> labels_a,
                   std::span<const std::string> labels_b) {
    if (labels_a.size() != labels_b.size()) {
        throw std::invalid_argument("label vectors differ in length");
    }
    if (labels_a.empty()) throw std::invalid_argument("label vectors are empty");

    const double n = static_cast<double>(labels_a.size());
    std::map<std::string, long long> count_a;
    std::map<std::string, long long> count_b;
    long long agree = 0;
    for (std::size_t i = 0; i < labels_a.size(); ++i) {
        if (labels_a[i] == labels_b[i]) ++agree;
        ++count_a[labels_a[i]];
        ++count_b[labels_b[i]];
    }
    const double po = static_cast<double>(agree) / n;
    double pe = 0.0;
    for (const auto& [label, ca] : count_a) {
        auto it = count_b.find(label);
        if (it == count_b.end()) continue;
        pe += (static_cast<double>(ca) / n) * (static_cast<double>(it->second) / n);
    }
    // Two constant, identical raters agree perfectly; the usual formula
    // degenerates to 0/0 there.
    if (pe >= 1.0) return 1.0;
    return (po - pe) / (1.0 - pe);
}

std::string_view variant_name(Variant v) { return v == Variant::vanilla ? "vanilla" : "ince"; }

std::string_view variant_display(Variant v) { return v == Variant::vanilla ? "Vanilla" : "Ours"; }

std::vector<std::string> validate_table(const ComparisonTable& table) {
    std::vector<std::string> violations;
    std::set<std::pair<std::string, Variant>> seen;
    for (const ComparisonRow& row : table.rows) {
        if (row.model.empty()) violations.push_back("row with empty model");
        if (!seen.insert({row.model, row.variant}).second) {
            violations.push_back("duplicate row for " + row.model);
        }
        auto check_percent = [&](const Ratio& r, const char* what) {
            if (r.den <= 0 || r.num < 0 || r.num > 100 * r.den) {
                violations.push_back(row.model + ": " + what + " outside [0,100]");
            }
        };
        check_percent(row.tsr, "tsr");
        if (row.ats && (row.ats->den <= 0 || row.ats->num < 0)) {
            violations.push_back(row.model + ": ats negative");
        }
        for (const auto& p : row.smell_prevalence) {
            if (p) check_percent(*p, "prevalence");
        }
    }
    return violations;
}

DistributionRow distribution_row(const std::string& label,
                                 const taxonomy::DistributionTable& t) {
    DistributionRow row;
    row.label = label;
    for (const taxonomy::SmellInfo& si : taxonomy::all_smells()) {
        row.prevalence[static_cast<std::size_t>(si.smell)] = t.prevalence(si.smell);
    }
    return row;
}

namespace {

std::string markdown_row(const std::vector<std::string>& cells) {
    std::string out = "|";
    for (const std::string& cell : cells) {
        out += " " + cell + " |";
    }
    out += "\n";
    return out;
}

std::string markdown_separator(std::size_t columns) {
    std::string out = "|";
    for (std::size_t i = 0; i < columns; ++i) out += " --- |";
    out += "\n";
    return out;
}

std::string csv_row(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) out += ",";
        // Cells here are labels and numbers; quote only when needed.
        if (cells[i].find_first_of(",\"\n") != std::string::npos) {
            out += '"';
            for (char c : cells[i]) {
                if (c == '"') out += '"';
                out += c;
            }
            out += '"';
        } else {
            out += cells[i];
        }
    }
    out += "\n";
    return out;
}

std::string percent_cell(const std::optional<Ratio>& r, ReportFormat format) {
    if (!r) return format == ReportFormat::markdown ? "-" : "";
    return format == ReportFormat::markdown ? format_percent(*r) : format_2dp(*r);
}

std::string plain_cell(const std::optional<Ratio>& r, ReportFormat format) {
    if (!r) return format == ReportFormat::markdown ? "-" : "";
    return format_2dp(*r);
}

std::vector<std::string> smell_headers(ReportFormat format) {
    std::vector<std::string> out;
    for (const taxonomy::SmellInfo& si : taxonomy::all_smells()) {
        out.emplace_back(format == ReportFormat::markdown ? si.display_name : si.id_name);
    }
    return out;
}

// Rows keyed by model, first-appearance order, vanilla before ince.
std::vector<std::pair<const ComparisonRow*, const ComparisonRow*>> pair_rows(
    const ComparisonTable& table, std::vector<std::string>& model_order) {
    std::map<std::string, std::pair<const ComparisonRow*, const ComparisonRow*>> by_model;
    for (const ComparisonRow& row : table.rows) {
        if (by_model.find(row.model) == by_model.end()) {
            model_order.push_back(row.model);
            by_model[row.model] = {nullptr, nullptr};
        }
        if (row.variant == Variant::vanilla) {
            by_model[row.model].first = &row;
        } else {
            by_model[row.model].second = &row;
        }
    }
    std::vector<std::pair<const ComparisonRow*, const ComparisonRow*>> out;
    out.reserve(model_order.size());
    for (const std::string& model : model_order) out.push_back(by_model[model]);
    return out;
}

}  // namespace

std::string render_distribution_table(std::span<const DistributionRow> rows,
                                      ReportFormat format) {
    std::vector<std::string> header{format == ReportFormat::markdown ? "Model" : "model"};
    for (std::string& h : smell_headers(format)) header.push_back(std::move(h));

    std::string out;
    if (format == ReportFormat::markdown) {
        out += markdown_row(header);
        out += markdown_separator(header.size());
    } else {
        out += csv_row(header);
    }
    for (const DistributionRow& row : rows) {
        std::vector<std::string> cells{row.label};
        for (const auto& p : row.prevalence) cells.push_back(percent_cell(p, format));
        out += format == ReportFormat::markdown ? markdown_row(cells) : csv_row(cells);
    }
    return out;
}

std::string render_comparison_table(const ComparisonTable& table, ReportFormat format) {
    std::vector<std::string> model_order;
    const auto pairs = pair_rows(table, model_order);

    const std::vector<std::string> header =
        format == ReportFormat::markdown
            ? std::vector<std::string>{"Model", "TSR Vanilla (%)", "TSR Ours (%)",
                                       "ATS Vanilla", "ATS Ours"}
            : std::vector<std::string>{"model", "tsr_vanilla", "tsr_ours", "ats_vanilla",
                                       "ats_ours"};
    std::string out;
    if (format == ReportFormat::markdown) {
        out += markdown_row(header);
        out += markdown_separator(header.size());
    } else {
        out += csv_row(header);
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const ComparisonRow* vanilla = pairs[i].first;
        const ComparisonRow* ours = pairs[i].second;
        std::vector<std::string> cells{model_order[i]};
        cells.push_back(plain_cell(vanilla ? std::optional<Ratio>(vanilla->tsr) : std::nullopt,
                                   format));
        cells.push_back(
            plain_cell(ours ? std::optional<Ratio>(ours->tsr) : std::nullopt, format));
        cells.push_back(plain_cell(vanilla ? vanilla->ats : std::nullopt, format));
        cells.push_back(plain_cell(ours ? ours->ats : std::nullopt, format));
        out += format == ReportFormat::markdown ? markdown_row(cells) : csv_row(cells);
    }
    return out;
}

std::string render_mitigation_table(const ComparisonTable& table, ReportFormat format) {
    std::vector<std::string> model_order;
    const auto pairs = pair_rows(table, model_order);

    std::vector<std::string> header{format == ReportFormat::markdown ? "Model" : "model",
                                    format == ReportFormat::markdown ? "Method" : "method"};
    for (std::string& h : smell_headers(format)) header.push_back(std::move(h));

    std::string out;
    if (format == ReportFormat::markdown) {
        out += markdown_row(header);
        out += markdown_separator(header.size());
    } else {
        out += csv_row(header);
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        for (const ComparisonRow* row : {pairs[i].first, pairs[i].second}) {
            if (row == nullptr) continue;
            std::vector<std::string> cells{model_order[i],
                                           std::string(format == ReportFormat::markdown
                                                           ? variant_display(row->variant)
                                                           : variant_name(row->variant))};
            for (const auto& p : row->smell_prevalence) {
                cells.push_back(percent_cell(p, format));
            }
            out += format == ReportFormat::markdown ? markdown_row(cells) : csv_row(cells);
        }
    }
    return out;
}

ComparisonRow summarize_batch(const BatchSummary& batch,
                              std::span<const taxonomy::SmellAnnotation> extra_annotations) {
    ComparisonRow row;
    row.model = batch.model;
    row.variant = batch.variant;

    MetricsReport report = compute_tsr(batch.sessions);
    row.tsr = report.tsr_percent;
    row.ats = report.ats;

    if (batch.sessions.empty()) return row;

    std::set<std::string> ids;
    std::vector<taxonomy::SmellAnnotation> annotations;
    for (const harness::SimulationSession& s : batch.sessions) {
        ids.insert(s.transcript.id);
        annotations.insert(annotations.end(), s.annotations.begin(), s.annotations.end());
    }
    for (const taxonomy::SmellAnnotation& a : extra_annotations) {
        if (ids.count(a.conversation_id) > 0) annotations.push_back(a);
    }
    const taxonomy::DistributionTable table = taxonomy::smell_distribution(
        annotations, static_cast<int>(batch.sessions.size()), &ids, nullptr);
    for (const taxonomy::SmellInfo& si : taxonomy::all_smells()) {
        row.smell_prevalence[static_cast<std::size_t>(si.smell)] = table.prevalence(si.smell);
    }
    return row;
}

ReportDocuments render_reports(std::span<const BatchSummary> batches,
                               std::span<const taxonomy::SmellAnnotation> extra_annotations,
                               ReportFormat format) {
    ComparisonTable table;
    std::vector<DistributionRow> distribution_rows;
    for (const BatchSummary& batch : batches) {
        ComparisonRow row = summarize_batch(batch, extra_annotations);
        if (batch.variant == Variant::vanilla) {
            DistributionRow d;
            d.label = row.model;
            d.prevalence = row.smell_prevalence;
            distribution_rows.push_back(std::move(d));
        }
        table.rows.push_back(std::move(row));
    }

    ReportDocuments docs;
    docs.distribution = render_distribution_table(distribution_rows, format);
    docs.comparison = render_comparison_table(table, format);
    docs.mitigation = render_mitigation_table(table, format);
    if (format == ReportFormat::markdown) {
        docs.combined = "## Smell distribution\n\n" + docs.distribution +
                        "\n## Success metrics\n\n" + docs.comparison +
                        "\n## Smell mitigation\n\n" + docs.mitigation;
    } else {
        docs.combined = "# smell distribution\n" + docs.distribution +
                        "\n# success metrics\n" + docs.comparison +
                        "\n# smell mitigation\n" + docs.mitigation;
    }
    return docs;
}

}  // namespace ismell::metrics
