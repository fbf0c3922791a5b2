#pragma once

// Synthetic hierarchical-experiment generator with known ground truth: the
// verification oracle behind every estimator and guardrail test.
//
// Data-generating process per contract i:
//   - seat count S_i = max(1, round(exp(mu_logsize + sigma_logsize * z)))
//   - contract effects (u_pre, u_post) ~ bivariate normal, variance
//     contract_effect_var, correlation pre_post_corr
//   - observable covariate w_i ~ N(0,1); nonlinearity adds
//     nonlinearity * (w_i^2 - 1) to every seat's experiment-period outcome
//   - seat outcome pairs: pre = base_rate + u_pre + e_pre, post = base_rate
//     + u_post + nonlinearity*(w^2-1) + lift*T + e_post, with seat noise
//     (e_pre, e_post) bivariate at the same correlation and variance
//     seat_noise_var; outcomes truncate at 0
//   - a seat is active in each period independently with seat_trigger_rate;
//     the contract triggers if >= 1 seat is active in the experiment period
//     and its contract-level gate passes (contract_trigger_rate, minus
//     treatment_contract_trigger_drop for treated contracts)
//   - attrition de-triggers the floor(attrition_rate * n) lowest-outcome
//     treated seats, so survivors are the most active ones and the per-seat
//     ratio is biased upward while no contract is ever emptied
//
// Everything is a pure function of the seed; replications use documented
// substreams so summaries are reproducible under any execution order.

#include <cstdint>
#include <string>
#include <utility>

#include <json.hpp>

#include "clab/dataset.hpp"
#include "clab/stats.hpp"

namespace clab {

struct DgpSpec {
    std::size_t n_contracts = 1000;
    double mu_logsize = 1.5;
    double sigma_logsize = 1.0;
    double base_rate = 10.0;
    double contract_effect_var = 0.3;
    double seat_noise_var = 0.7;
    double pre_post_corr = 0.0;
    double treatment_lift = 0.0;       // additive per-seat lift in the experiment period
    double attrition_rate = 0.0;       // [0, 1): seat-level SSRM injection
    double seat_trigger_rate = 1.0;    // per-seat per-period activity probability
    double contract_trigger_rate = 1.0;
    double treatment_contract_trigger_drop = 0.0;  // absolute drop, contract-level SSRM injection
    double nonlinearity = 0.0;
    double allocation = 0.5;           // fraction of contracts treated
    std::uint64_t seed = 1;

    void validate() const;
    static DgpSpec from_json(const nlohmann::json& doc);
    nlohmann::ordered_json to_json() const;
};

enum class SsrmInjection { none, contract_level, seat_level };
const char* ssrm_injection_name(SsrmInjection injection);

struct GroundTruth {
    double true_ratio_lift = 0.0;   // per-seat lift on the ratio scale (no-SSRM designs)
    bool is_null = true;            // no lift and no injected mismatch
    SsrmInjection ssrm_injected = SsrmInjection::none;
    // Large-sample per-seat lift induced by attrition selection alone:
    // sd_seat * phi(z_a) / (1 - a) for attrition fraction a.
    double selection_lift_approx = 0.0;
    std::uint64_t seed = 0;
    std::string rng_algorithm;

    nlohmann::ordered_json to_json() const;
};

// Variant names used by generated datasets.
inline constexpr const char* kSimTreatment = "treatment";
inline constexpr const char* kSimControl = "control";

ExperimentDesign simulated_design(double allocation);

std::pair<ExperimentDataset, GroundTruth> generate(const DgpSpec& spec);

enum class AnalysisProcedure {
    unadjusted,      // difference of ratios, delta-method variance
    naive_ratio,     // same point estimate, per-unit-ratio sample variance
    cuped,
    aipw_zero,
    aipw_arm_mean,
    aipw_linear,
    aipw_knn,
};
const char* analysis_procedure_name(AnalysisProcedure procedure);

struct MonteCarloSummary {
    std::size_t reps = 0;
    double mean_estimate = 0.0;
    double empirical_variance = 0.0;   // variance of the point estimates
    double mean_model_variance = 0.0;  // average reported variance
    double ci_coverage = 0.0;          // CIs covering the true lift
    double significant_rate = 0.0;     // p < alpha
    double positive_significant_rate = 0.0;
    double mean_p_value = 0.0;
};

// Run `procedure` on `reps` independent replications of the DGP.
// Deterministic given (spec.seed, reps).
MonteCarloSummary replicate(const DgpSpec& spec, AnalysisProcedure procedure, std::size_t reps,
                            double alpha = 0.05, int aipw_folds = 5);

// Collect the p-values of a procedure across replications (for uniformity
// checks on null DGPs).
std::vector<double> replicate_p_values(const DgpSpec& spec, AnalysisProcedure procedure,
                                       std::size_t reps, double alpha = 0.05, int aipw_folds = 5);

struct SsrmRates {
    std::size_t reps = 0;
    double contract_alert_rate = 0.0;
    double seat_alert_rate = 0.0;  // among replications where the contract level passed
};

SsrmRates replicate_ssrm(const DgpSpec& spec, std::size_t reps, double alpha_contract,
                         double alpha_seat);

// The aggregate-ratio delta method next to the variance formula that treats
// per-unit ratios as independent observations. The naive column exists only
// in this comparison report; production estimates never use it.
struct CoverageComparison {
    std::size_t reps = 0;
    double delta_coverage = 0.0;
    double naive_coverage = 0.0;
};

CoverageComparison compare_delta_vs_naive(const DgpSpec& spec, std::size_t reps,
                                          double alpha = 0.05);

// Simulator-only: per-unit-ratio sample-variance inference (the clustering
// mistake the comparison report demonstrates).
TestResult naive_ratio_test(const ExperimentDataset& ds, double alpha);

}  // namespace clab
