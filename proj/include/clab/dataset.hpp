#pragma once

// Unit-level experiment data: CSV ingestion with triggered-unit
// deduplication, per-variant sample-size bookkeeping at both entity levels,
// pooled-quantile outlier capping, and data-quality guardrails.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clab/taxonomy.hpp"

namespace clab {

// One randomization unit (contract) with its aggregated metrics. y/n are
// the experiment-period numerator and denominator counts, x_pre/m_pre the
// pre-period counterparts, n_pre the pre-period active analysis units used
// by the sample-ratio guardrail.
struct UnitRecord {
    std::string unit_id;
    std::string variant;
    double y = 0.0;
    double n = 0.0;
    double x_pre = 0.0;
    double m_pre = 0.0;
    double n_pre = 0.0;
    std::vector<double> covariates;
};

// Metric fields addressable by estimators. `one` is the constant-1 pseudo
// denominator that turns the ratio machinery into count-metric analysis.
enum class Field { y, n, x_pre, m_pre, n_pre, one };
const char* field_name(Field f);
std::optional<Field> field_from_name(const std::string& name);
double field_value(const UnitRecord& r, Field f);

class ExperimentDataset {
public:
    ExperimentDataset(ExperimentDesign design, std::vector<UnitRecord> records);

    const ExperimentDesign& design() const { return design_; }
    const std::vector<UnitRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    // Randomization-unit counts per variant (all design variants present,
    // zero-count included).
    const std::map<std::string, std::size_t>& variant_unit_counts() const { return unit_counts_; }
    // Triggered analysis-unit totals per variant (sum of n).
    const std::map<std::string, double>& variant_analysis_totals() const {
        return analysis_totals_;
    }

    std::vector<std::size_t> indices_of(const std::string& variant) const;
    std::vector<double> column(Field f, const std::string& variant) const;
    std::vector<double> column(Field f) const;  // all records

    // Two-arm view (control + one treatment) sharing the parent allocation.
    ExperimentDataset pair_subset(const std::string& treatment_variant) const;

private:
    ExperimentDesign design_;
    std::vector<UnitRecord> records_;
    std::map<std::string, std::size_t> unit_counts_;
    std::map<std::string, double> analysis_totals_;
};

struct IngestStats {
    std::size_t rows_read = 0;
    std::size_t duplicates_merged = 0;
    std::size_t missing_pre_period_columns = 0;  // columns defaulted to 0, with warning
    std::vector<std::string> warnings;
};

// Structured ingest failure; `kind` is machine-readable for the CLI error
// JSON.
class IngestError : public std::runtime_error {
public:
    IngestError(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

// CSV header: unit_id,variant,y,n,x_pre,m_pre,n_pre,cov_0,...,cov_k.
// Pre-period columns may be absent (defaulted to 0 with a counted warning);
// covariate columns require the full fixed prefix. Duplicate rows for a
// unit merge additively (first covariate vector wins); a unit appearing in
// two variants is rejected as randomization corruption.
ExperimentDataset ingest(const std::filesystem::path& path, const ExperimentDesign& design,
                         IngestStats* stats = nullptr);
ExperimentDataset ingest_stream(std::istream& in, const ExperimentDesign& design,
                                IngestStats* stats = nullptr);

void write_dataset_csv(const ExperimentDataset& ds, std::ostream& out);

enum class GuardrailKind { EMPTY_VARIANT, ZERO_DENOMINATOR_VARIANT, ALL_ZERO_METRIC };
const char* guardrail_kind_name(GuardrailKind kind);

struct GuardrailAlert {
    GuardrailKind kind;
    std::string subject;  // variant or metric column name
    std::string message;
};

// EMPTY_VARIANT and ZERO_DENOMINATOR_VARIANT make ratio analysis impossible;
// ALL_ZERO_METRIC is reported but analysis can proceed.
std::vector<GuardrailAlert> guardrail_check(const ExperimentDataset& ds);
bool guardrail_alert_is_fatal(const GuardrailAlert& alert);

struct CapPolicy {
    double quantile = 0.99;        // in (0.5, 1.0)
    std::set<Field> metrics;       // subset of {y, x_pre}; denominators are never capped
    void validate() const;
};

struct CapEntry {
    std::string unit_id;
    Field metric;
    double original;
    double capped;
};

struct CapLog {
    std::map<Field, double> thresholds;  // pooled empirical quantile per metric
    std::vector<CapEntry> entries;
};

// Pooled (all-variant) empirical quantile capping. Thresholds use the
// type-7 (linear interpolation) quantile; values strictly above are
// replaced by the threshold. Denominators are never capped: capping n or
// m_pre would change the estimand.
std::pair<ExperimentDataset, CapLog> apply_capping(const ExperimentDataset& ds,
                                                   const CapPolicy& policy);

void write_caplog_csv(const CapLog& log, std::ostream& out);

// Type-7 empirical quantile (linear interpolation between order statistics).
double empirical_quantile(std::vector<double> values, double q);

}  // namespace clab
