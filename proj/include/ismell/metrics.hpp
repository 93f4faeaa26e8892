#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ismell/harness.hpp"
#include "ismell/ratio.hpp"
#include "ismell/taxonomy.hpp"

namespace ismell::metrics {

struct MetricsReport {
    int n_total = 0;
    int n_success = 0;
    Ratio tsr_percent{0, 1};
    std::optional<Ratio> ats;  // absent when no session succeeded
    std::map<int, int> turns_histogram;
};

// Aborted sessions count in the denominator as non-successes.
MetricsReport compute_tsr(std::span<const harness::SimulationSession> sessions);

// Mean turns_used over successful sessions only.
std::optional<Ratio> compute_ats(std::span<const harness::SimulationSession> sessions);

// Standard two-rater kappa over equal-length label vectors. Both raters
// constant and equal (p_e == 1) is defined as 1.0. Length mismatch or empty
// input throws std::invalid_argument.
double cohen_kappa(std::span<const std::string> labels_a, std::span<const std::string> labels_b);

enum class Variant { vanilla, ince };

std::string_view variant_name(Variant v);       // "vanilla" | "ince"
std::string_view variant_display(Variant v);    // "Vanilla" | "Ours"

struct ComparisonRow {
    std::string model;
    Variant variant = Variant::vanilla;
    Ratio tsr{0, 1};
    std::optional<Ratio> ats;
    std::array<std::optional<Ratio>, taxonomy::kSmellCount> smell_prevalence;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;  // (model, variant) unique
};

std::vector<std::string> validate_table(const ComparisonTable& table);

struct DistributionRow {
    std::string label;
    std::array<std::optional<Ratio>, taxonomy::kSmellCount> prevalence;
};

DistributionRow distribution_row(const std::string& label, const taxonomy::DistributionTable& t);

enum class ReportFormat { markdown, csv };

// Model x nine-smell prevalence table.
std::string render_distribution_table(std::span<const DistributionRow> rows, ReportFormat format);
// Model x {TSR, ATS} x {Vanilla, Ours} table; one output row per model.
std::string render_comparison_table(const ComparisonTable& table, ReportFormat format);
// Model x method x nine-smell mitigation table.
std::string render_mitigation_table(const ComparisonTable& table, ReportFormat format);

struct BatchSummary {
    std::string model;
    Variant variant = Variant::vanilla;
    std::vector<harness::SimulationSession> sessions;
};

// Session annotations plus any extra annotation records whose conversation
// ids appear in the batch.
ComparisonRow summarize_batch(const BatchSummary& batch,
                              std::span<const taxonomy::SmellAnnotation> extra_annotations);

struct ReportDocuments {
    std::string distribution;
    std::string comparison;
    std::string mitigation;
    std::string combined;  // all three with section headings
};

ReportDocuments render_reports(std::span<const BatchSummary> batches,
                               std::span<const taxonomy::SmellAnnotation> extra_annotations,
                               ReportFormat format);

}  // namespace ismell::metrics
