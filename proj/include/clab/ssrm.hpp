#pragma once

// Two-level sample-size-ratio-mismatch detection.
//
// Level 1 (randomization units): chi-square goodness of fit of per-variant
// unit counts against the design allocation. Level 2 (analysis units): a
// baseline-adjusted t test on triggered-analysis-unit counts,
//
//   D_i = n_i - theta * (n_pre_i - mean(n_pre)),
//   theta = cov(n, n_pre) / var(n_pre)  (pooled over arms),
//
// run per treatment-control pair, which is only meaningful once level 1 has
// passed. The flow gates level 2 on level 1 and attaches the recommended
// follow-up: fix and rerun on a level-1 alert, split the ratio metric into
// separate numerator/denominator analyses on a level-2 alert.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clab/dataset.hpp"
#include "clab/stats.hpp"

namespace clab {

struct SsrmSeatStats {
    std::map<std::string, std::vector<double>> d_values;  // variant -> adjusted counts
    std::map<std::string, double> mean_d;
    double theta = 0.0;
    double mean_n_pre = 0.0;       // pooled mean of n_pre
    bool degenerate_pre = false;   // var(n_pre) ~ 0 forced theta = 0
};

enum class SsrmAlertKind { CONTRACT_SSRM, SEAT_SSRM };
const char* ssrm_alert_name(SsrmAlertKind kind);

enum class SsrmRecommendation {
    proceed,
    fix_and_rerun,
    analyze_untriggered_population,
    split_numerator_denominator,
};
const char* ssrm_recommendation_name(SsrmRecommendation rec);

struct SsrmReport {
    TestResult contract_level;
    // Present only when the contract level passed. For multi-variant
    // designs this is the worst (smallest p) treatment-control pair.
    std::optional<TestResult> seat_level;
    std::vector<std::pair<std::string, TestResult>> seat_level_pairs;
    std::optional<SsrmSeatStats> seat_stats;
    std::set<SsrmAlertKind> alerts;
    SsrmRecommendation recommendation = SsrmRecommendation::proceed;
    // Secondary mitigation noted alongside fix_and_rerun: rerun over the
    // whole (untriggered included) population.
    std::optional<SsrmRecommendation> mitigation;
    double alpha_contract = 0.001;
    double alpha_seat = 0.001;
};

// Chi-square of randomization-unit counts vs design allocation fractions
// (renormalized over the design's variants).
TestResult contract_level_ssrm(const ExperimentDataset& ds, double alpha);

// Baseline-adjusted analysis-unit test on a two-variant dataset. Requires
// >= 2 triggered units per arm.
std::pair<TestResult, SsrmSeatStats> seat_level_ssrm(const ExperimentDataset& ds, double alpha);

// Full gated flow over all variants.
SsrmReport ssrm_flow(const ExperimentDataset& ds, double alpha_contract, double alpha_seat);

}  // namespace clab
