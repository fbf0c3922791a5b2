#include "clab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace clab {

const char* field_name(Field f) {
    switch (f) {
        case Field::y: return "y";
        case Field::n: return "n";
        case Field::x_pre: return "x_pre";
        case Field::m_pre: return "m_pre";
        case Field::n_pre: return "n_pre";
        case Field::one: return "one";
    }
    return "unknown";
}

std::optional<Field> field_from_name(const std::string& name) {
    if (name == "y") return Field::y;
    if (name == "n") return Field::n;
    if (name == "x_pre") return Field::x_pre;
    if (name == "m_pre") return Field::m_pre;
    if (name == "n_pre") return Field::n_pre;
    if (name == "one") return Field::one;
    return std::nullopt;
}

double field_value(const UnitRecord& r, Field f) {
    switch (f) {
        case Field::y: return r.y;
        case Field::n: return r.n;
        case Field::x_pre: return r.x_pre;
        case Field::m_pre: return r.m_pre;
        case Field::n_pre: return r.n_pre;
        case Field::one: return 1.0;
    }
    return 0.0;
}

ExperimentDataset::ExperimentDataset(ExperimentDesign design, std::vector<UnitRecord> records)
    : design_(std::move(design)), records_(std::move(records)) {
    for (const auto& v : design_.variants) {
        unit_counts_[v.name] = 0;
        analysis_totals_[v.name] = 0.0;
    }
    std::unordered_map<std::string, const std::string*> seen;
    std::size_t covariate_width = records_.empty() ? 0 : records_.front().covariates.size();
    for (const auto& r : records_) {
        auto count_it = unit_counts_.find(r.variant);
        if (count_it == unit_counts_.end()) {
            throw IngestError("unknown_variant",
                              "record '" + r.unit_id + "' has variant '" + r.variant +
                                  "' which is not in the design");
        }
        auto [it, inserted] = seen.emplace(r.unit_id, &r.variant);
        if (!inserted) {
            throw IngestError("duplicate_unit", "unit '" + r.unit_id + "' appears twice");
        }
        if (r.n < 0.0 || r.m_pre < 0.0 || r.n_pre < 0.0) {
            throw IngestError("negative_denominator",
                              "unit '" + r.unit_id + "' has a negative denominator field");
        }
        if (r.covariates.size() != covariate_width) {
            throw IngestError("ragged_covariates",
                              "unit '" + r.unit_id + "' has " +
                                  std::to_string(r.covariates.size()) + " covariates, expected " +
                                  std::to_string(covariate_width));
        }
        count_it->second += 1;
        analysis_totals_[r.variant] += r.n;
    }
}

std::vector<std::size_t> ExperimentDataset::indices_of(const std::string& variant) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (records_[i].variant == variant) idx.push_back(i);
    }
    return idx;
}

std::vector<double> ExperimentDataset::column(Field f, const std::string& variant) const {
    std::vector<double> out;
    for (const auto& r : records_) {
        if (r.variant == variant) out.push_back(field_value(r, f));
    }
    return out;
}

std::vector<double> ExperimentDataset::column(Field f) const {
    std::vector<double> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(field_value(r, f));
    return out;
}

ExperimentDataset ExperimentDataset::pair_subset(const std::string& treatment_variant) const {
    const VariantSpec* ctrl = design_.control();
    if (ctrl == nullptr) throw std::runtime_error("pair_subset: design has no control variant");
    if (!design_.has_variant(treatment_variant) || treatment_variant == ctrl->name) {
        throw std::runtime_error("pair_subset: '" + treatment_variant +
                                 "' is not a treatment variant");
    }
    ExperimentDesign pair_design = design_;
    pair_design.variants.clear();
    for (const auto& v : design_.variants) {
        if (v.is_control || v.name == treatment_variant) pair_design.variants.push_back(v);
    }
    std::vector<UnitRecord> subset;
    for (const auto& r : records_) {
        if (r.variant == ctrl->name || r.variant == treatment_variant) subset.push_back(r);
    }
    return ExperimentDataset(std::move(pair_design), std::move(subset));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_numeric(const std::string& cell, std::size_t line_no, const std::string& column) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || begin == end) {
        throw IngestError("unparseable_numeric", "line " + std::to_string(line_no) + ", column '" +
                                                     column + "': cannot parse '" + cell + "'");
    }
    return value;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

ExperimentDataset ingest_stream(std::istream& in, const ExperimentDesign& design,
                                IngestStats* stats) {
    IngestStats local;
    IngestStats& st = stats ? *stats : local;

    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw IngestError("missing_header", "input is empty; expected a CSV header row");
    }
    const auto header = split_csv_line(strip_cr(header_line));
    static const std::vector<std::string> canonical = {"unit_id", "variant", "y",
                                                       "n",       "x_pre",   "m_pre", "n_pre"};
    if (header.size() < 4) {
        throw IngestError("missing_column", "header must start with unit_id,variant,y,n");
    }
    std::size_t fixed = std::min(header.size(), canonical.size());
    for (std::size_t i = 0; i < fixed; ++i) {
        if (header[i] != canonical[i]) {
            throw IngestError("missing_column", "expected column '" + canonical[i] +
                                                    "' at position " + std::to_string(i + 1) +
                                                    ", found '" + header[i] + "'");
        }
    }
    std::size_t covariate_count = 0;
    if (header.size() > canonical.size()) {
        covariate_count = header.size() - canonical.size();
        for (std::size_t i = 0; i < covariate_count; ++i) {
            const std::string expected = "cov_" + std::to_string(i);
            if (header[canonical.size() + i] != expected) {
                throw IngestError("missing_column",
                                  "expected covariate column '" + expected + "', found '" +
                                      header[canonical.size() + i] + "'");
            }
        }
    }
    if (fixed < canonical.size()) {
        st.missing_pre_period_columns = canonical.size() - fixed;
        st.warnings.push_back("pre-period columns absent from header; " +
                              std::to_string(st.missing_pre_period_columns) +
                              " column(s) defaulted to 0");
    }

    std::unordered_map<std::string, std::size_t> index_of;
    std::vector<UnitRecord> records;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw IngestError("row_width",
                              "line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " cells, found " +
                                  std::to_string(cells.size()));
        }
        ++st.rows_read;
        UnitRecord row;
        row.unit_id = cells[0];
        row.variant = cells[1];
        if (row.unit_id.empty()) {
            throw IngestError("missing_unit_id", "line " + std::to_string(line_no) +
                                                     ": empty unit_id");
        }
        if (!design.has_variant(row.variant)) {
            throw IngestError("unknown_variant", "line " + std::to_string(line_no) +
                                                     ": variant '" + row.variant +
                                                     "' is not in the design");
        }
        row.y = parse_numeric(cells[2], line_no, "y");
        row.n = parse_numeric(cells[3], line_no, "n");
        if (fixed > 4) row.x_pre = parse_numeric(cells[4], line_no, "x_pre");
        if (fixed > 5) row.m_pre = parse_numeric(cells[5], line_no, "m_pre");
        if (fixed > 6) row.n_pre = parse_numeric(cells[6], line_no, "n_pre");
        row.covariates.reserve(covariate_count);
        for (std::size_t i = 0; i < covariate_count; ++i) {
            row.covariates.push_back(
                parse_numeric(cells[canonical.size() + i], line_no, "cov_" + std::to_string(i)));
        }
        if (row.n < 0.0 || row.m_pre < 0.0 || row.n_pre < 0.0) {
            throw IngestError("negative_denominator",
                              "line " + std::to_string(line_no) + ": unit '" + row.unit_id +
                                  "' has a negative denominator field");
        }

        auto it = index_of.find(row.unit_id);
        if (it == index_of.end()) {
            index_of.emplace(row.unit_id, records.size());
            records.push_back(std::move(row));
            continue;
        }
        UnitRecord& merged = records[it->second];
        if (merged.variant != row.variant) {
            throw IngestError("cross_variant_unit",
                              "unit '" + row.unit_id + "' appears in variants '" + merged.variant +
                                  "' and '" + row.variant +
                                  "'; randomization assignment is corrupted");
        }
        merged.y += row.y;
        merged.n += row.n;
        merged.x_pre += row.x_pre;
        merged.m_pre += row.m_pre;
        merged.n_pre += row.n_pre;
        // First covariate vector wins for merged rows.
        ++st.duplicates_merged;
    }
    return ExperimentDataset(design, std::move(records));
}

ExperimentDataset ingest(const std::filesystem::path& path, const ExperimentDesign& design,
                         IngestStats* stats) {
    std::ifstream in(path);
    if (!in) throw IngestError("file_not_found", "cannot open data file: " + path.string());
    return ingest_stream(in, design, stats);
}

namespace {

void write_double(std::ostream& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
}

}  // namespace

void write_dataset_csv(const ExperimentDataset& ds, std::ostream& out) {
    const std::size_t covariates =
        ds.records().empty() ? 0 : ds.records().front().covariates.size();
    out << "unit_id,variant,y,n,x_pre,m_pre,n_pre";
    for (std::size_t i = 0; i < covariates; ++i) out << ",cov_" << i;
    out << "\n";
    for (const auto& r : ds.records()) {
        out << r.unit_id << ',' << r.variant << ',';
        write_double(out, r.y);
        out << ',';
        write_double(out, r.n);
        out << ',';
        write_double(out, r.x_pre);
        out << ',';
        write_double(out, r.m_pre);
        out << ',';
        write_double(out, r.n_pre);
        for (double c : r.covariates) {
            out << ',';
            write_double(out, c);
        }
        out << "\n";
    }
}

const char* guardrail_kind_name(GuardrailKind kind) {
    switch (kind) {
        case GuardrailKind::EMPTY_VARIANT: return "EMPTY_VARIANT";
        case GuardrailKind::ZERO_DENOMINATOR_VARIANT: return "ZERO_DENOMINATOR_VARIANT";
        case GuardrailKind::ALL_ZERO_METRIC: return "ALL_ZERO_METRIC";
    }
    return "unknown";
}

bool guardrail_alert_is_fatal(const GuardrailAlert& alert) {
    return alert.kind != GuardrailKind::ALL_ZERO_METRIC;
}

std::vector<GuardrailAlert> guardrail_check(const ExperimentDataset& ds) {
    std::vector<GuardrailAlert> alerts;
    for (const auto& [variant, count] : ds.variant_unit_counts()) {
        if (count == 0) {
            alerts.push_back({GuardrailKind::EMPTY_VARIANT, variant,
                              "variant '" + variant + "' has no triggered units"});
        }
    }
    for (const auto& [variant, total] : ds.variant_analysis_totals()) {
        if (ds.variant_unit_counts().at(variant) > 0 && total == 0.0) {
            alerts.push_back({GuardrailKind::ZERO_DENOMINATOR_VARIANT, variant,
                              "variant '" + variant + "' has zero triggered analysis units"});
        }
    }
    if (!ds.empty()) {
        for (Field f : {Field::y, Field::n, Field::x_pre, Field::m_pre, Field::n_pre}) {
            bool all_zero = true;
            for (const auto& r : ds.records()) {
                if (field_value(r, f) != 0.0) {
                    all_zero = false;
                    break;
                }
            }
            if (all_zero) {
                alerts.push_back({GuardrailKind::ALL_ZERO_METRIC, field_name(f),
                                  std::string("metric column '") + field_name(f) +
                                      "' is identically zero"});
            }
        }
    }
    return alerts;
}

void CapPolicy::validate() const {
    if (!(quantile > 0.5 && quantile < 1.0)) {
        throw std::invalid_argument("cap policy quantile must be strictly between 0.5 and 1");
    }
    for (Field f : metrics) {
        if (f != Field::y && f != Field::x_pre) {
            throw std::invalid_argument(std::string("cap policy cannot cap field '") +
                                        field_name(f) + "'; only numerators {y, x_pre} are "
                                        "cappable");
        }
    }
}

double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("empirical_quantile: empty input");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("empirical_quantile: q outside [0,1]");
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::pair<ExperimentDataset, CapLog> apply_capping(const ExperimentDataset& ds,
                                                   const CapPolicy& policy) {
    policy.validate();
    if (ds.empty()) throw std::invalid_argument("apply_capping: dataset is empty");
    CapLog log;
    for (Field metric : policy.metrics) {
        log.thresholds[metric] = empirical_quantile(ds.column(metric), policy.quantile);
    }
    std::vector<UnitRecord> capped = ds.records();
    for (auto& r : capped) {
        for (Field metric : policy.metrics) {
            const double threshold = log.thresholds.at(metric);
            const double value = field_value(r, metric);
            if (value > threshold) {
                log.entries.push_back({r.unit_id, metric, value, threshold});
                if (metric == Field::y) r.y = threshold;
                if (metric == Field::x_pre) r.x_pre = threshold;
            }
        }
    }
    return {ExperimentDataset(ds.design(), std::move(capped)), std::move(log)};
}

void write_caplog_csv(const CapLog& log, std::ostream& out) {
    out << "unit_id,metric,original,capped\n";
    for (const auto& e : log.entries) {
        out << e.unit_id << ',' << field_name(e.metric) << ',';
        write_double(out, e.original);
        out << ',';
        write_double(out, e.capped);
        out << "\n";
    }
}

}  // namespace clab
