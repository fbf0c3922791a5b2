#include "clab/ssrm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace clab {

const char* ssrm_alert_name(SsrmAlertKind kind) {
    switch (kind) {
        case SsrmAlertKind::CONTRACT_SSRM: return "CONTRACT_SSRM";
        case SsrmAlertKind::SEAT_SSRM: return "SEAT_SSRM";
    }
    return "unknown";
}

const char* ssrm_recommendation_name(SsrmRecommendation rec) {
    switch (rec) {
        case SsrmRecommendation::proceed: return "proceed";
        case SsrmRecommendation::fix_and_rerun: return "fix_and_rerun";
        case SsrmRecommendation::analyze_untriggered_population:
            return "analyze_untriggered_population";
        case SsrmRecommendation::split_numerator_denominator:
            return "split_numerator_denominator";
    }
    return "unknown";
}

TestResult contract_level_ssrm(const ExperimentDataset& ds, double alpha) {
    std::map<std::string, double> observed;
    for (const auto& [variant, count] : ds.variant_unit_counts()) {
        observed[variant] = static_cast<double>(count);
    }
    std::map<std::string, double> expected;
    for (const auto& v : ds.design().variants) expected[v.name] = v.fraction;
    return chi_square_ratio_test(observed, expected, alpha);
}

std::pair<TestResult, SsrmSeatStats> seat_level_ssrm(const ExperimentDataset& ds, double alpha) {
    if (ds.design().variants.size() != 2) {
        throw std::invalid_argument("seat_level_ssrm: needs a two-variant dataset");
    }
    const VariantSpec* ctrl = ds.design().control();
    if (ctrl == nullptr) throw std::invalid_argument("seat_level_ssrm: design has no control");
    std::string treatment;
    for (const auto& v : ds.design().variants) {
        if (!v.is_control) treatment = v.name;
    }
    for (const auto& name : {treatment, ctrl->name}) {
        if (ds.variant_unit_counts().at(name) < 2) {
            throw std::invalid_argument("seat_level_ssrm: variant '" + name +
                                        "' needs at least 2 triggered units");
        }
    }

    const auto n = ds.column(Field::n);
    const auto n_pre = ds.column(Field::n_pre);

    SsrmSeatStats stats;
    stats.mean_n_pre = sample_mean(n_pre);
    const double var_pre = sample_var(n_pre);
    double pre_scale = 0.0;
    for (double v : n_pre) pre_scale = std::max(pre_scale, v * v);
    if (var_pre <= 1e-14 * pre_scale) {
        // Uninformative baseline: the test degenerates to a plain t test on n.
        stats.theta = 0.0;
        stats.degenerate_pre = true;
    } else {
        stats.theta = sample_cov(n, n_pre) / var_pre;
    }

    for (std::size_t i = 0; i < ds.size(); ++i) {
        const UnitRecord& r = ds.records()[i];
        const double d = r.n - stats.theta * (r.n_pre - stats.mean_n_pre);
        stats.d_values[r.variant].push_back(d);
    }
    for (const auto& [variant, values] : stats.d_values) {
        stats.mean_d[variant] = sample_mean(values);
    }

    TestResult test =
        welch_t_test(stats.d_values.at(treatment), stats.d_values.at(ctrl->name), alpha);
    return {test, std::move(stats)};
}

SsrmReport ssrm_flow(const ExperimentDataset& ds, double alpha_contract, double alpha_seat) {
    SsrmReport report;
    report.alpha_contract = alpha_contract;
    report.alpha_seat = alpha_seat;
    report.contract_level = contract_level_ssrm(ds, alpha_contract);
    if (report.contract_level.significant()) {
        report.alerts.insert(SsrmAlertKind::CONTRACT_SSRM);
        report.recommendation = SsrmRecommendation::fix_and_rerun;
        report.mitigation = SsrmRecommendation::analyze_untriggered_population;
        return report;  // seat level is meaningless under a contract-level mismatch
    }

    bool any_seat_alert = false;
    for (const auto& treatment : ds.design().treatment_names()) {
        const ExperimentDataset pair =
            ds.design().variants.size() == 2 ? ds : ds.pair_subset(treatment);
        auto [test, stats] = seat_level_ssrm(pair, alpha_seat);
        if (test.significant()) any_seat_alert = true;
        if (!report.seat_level.has_value() || test.p_value < report.seat_level->p_value) {
            report.seat_level = test;
            report.seat_stats = std::move(stats);
        }
        report.seat_level_pairs.emplace_back(treatment, test);
    }
    if (any_seat_alert) {
        report.alerts.insert(SsrmAlertKind::SEAT_SSRM);
        report.recommendation = SsrmRecommendation::split_numerator_denominator;
    } else {
        report.recommendation = SsrmRecommendation::proceed;
    }
    return report;
}

}  // namespace clab
