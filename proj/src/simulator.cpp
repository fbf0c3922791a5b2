#include "clab/simulator.hpp"

#include "clab/advanced_vr.hpp"
#include "clab/cuped.hpp"
#include "clab/dist.hpp"
#include "clab/rng.hpp"
#include "clab/ssrm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace clab {

namespace {
constexpr double kSqrt2Pi = 2.5066282746310002;
}

void DgpSpec::validate() const {
    if (n_contracts < 4) throw std::invalid_argument("dgp: n_contracts must be >= 4");
    if (sigma_logsize < 0.0) throw std::invalid_argument("dgp: sigma_logsize must be >= 0");
    if (contract_effect_var < 0.0 || seat_noise_var < 0.0) {
        throw std::invalid_argument("dgp: variances must be >= 0");
    }
    if (!(pre_post_corr >= -1.0 && pre_post_corr <= 1.0)) {
        throw std::invalid_argument("dgp: pre_post_corr must be in [-1, 1]");
    }
    if (!(attrition_rate >= 0.0 && attrition_rate < 1.0)) {
        throw std::invalid_argument("dgp: attrition_rate must be in [0, 1)");
    }
    if (!(seat_trigger_rate > 0.0 && seat_trigger_rate <= 1.0)) {
        throw std::invalid_argument("dgp: seat_trigger_rate must be in (0, 1]");
    }
    if (!(contract_trigger_rate > 0.0 && contract_trigger_rate <= 1.0)) {
        throw std::invalid_argument("dgp: contract_trigger_rate must be in (0, 1]");
    }
    if (!(treatment_contract_trigger_drop >= 0.0 &&
          treatment_contract_trigger_drop < contract_trigger_rate)) {
        throw std::invalid_argument(
            "dgp: treatment_contract_trigger_drop must be in [0, contract_trigger_rate)");
    }
    if (!(allocation > 0.0 && allocation < 1.0)) {
        throw std::invalid_argument("dgp: allocation must be in (0, 1)");
    }
}

DgpSpec DgpSpec::from_json(const nlohmann::json& doc) {
    DgpSpec s;
    s.n_contracts = doc.value("n_contracts", s.n_contracts);
    s.mu_logsize = doc.value("mu_logsize", s.mu_logsize);
    s.sigma_logsize = doc.value("sigma_logsize", s.sigma_logsize);
    s.base_rate = doc.value("base_rate", s.base_rate);
    s.contract_effect_var = doc.value("contract_effect_var", s.contract_effect_var);
    s.seat_noise_var = doc.value("seat_noise_var", s.seat_noise_var);
    s.pre_post_corr = doc.value("pre_post_corr", s.pre_post_corr);
    s.treatment_lift = doc.value("treatment_lift", s.treatment_lift);
    s.attrition_rate = doc.value("attrition_rate", s.attrition_rate);
    s.seat_trigger_rate = doc.value("seat_trigger_rate", s.seat_trigger_rate);
    s.contract_trigger_rate = doc.value("contract_trigger_rate", s.contract_trigger_rate);
    s.treatment_contract_trigger_drop =
        doc.value("treatment_contract_trigger_drop", s.treatment_contract_trigger_drop);
    s.nonlinearity = doc.value("nonlinearity", s.nonlinearity);
    s.allocation = doc.value("allocation", s.allocation);
    s.seed = doc.value("seed", s.seed);
    s.validate();
    return s;
}

nlohmann::ordered_json DgpSpec::to_json() const {
    nlohmann::ordered_json doc;
    doc["n_contracts"] = n_contracts;
    doc["mu_logsize"] = mu_logsize;
    doc["sigma_logsize"] = sigma_logsize;
    doc["base_rate"] = base_rate;
    doc["contract_effect_var"] = contract_effect_var;
    doc["seat_noise_var"] = seat_noise_var;
    doc["pre_post_corr"] = pre_post_corr;
    doc["treatment_lift"] = treatment_lift;
    doc["attrition_rate"] = attrition_rate;
    doc["seat_trigger_rate"] = seat_trigger_rate;
    doc["contract_trigger_rate"] = contract_trigger_rate;
    doc["treatment_contract_trigger_drop"] = treatment_contract_trigger_drop;
    doc["nonlinearity"] = nonlinearity;
    doc["allocation"] = allocation;
    doc["seed"] = seed;
    return doc;
}

const char* ssrm_injection_name(SsrmInjection injection) {
    switch (injection) {
        case SsrmInjection::none: return "none";
        case SsrmInjection::contract_level: return "contract_level";
        case SsrmInjection::seat_level: return "seat_level";
    }
    return "unknown";
}

nlohmann::ordered_json GroundTruth::to_json() const {
    nlohmann::ordered_json doc;
    doc["true_ratio_lift"] = true_ratio_lift;
    doc["is_null"] = is_null;
    doc["ssrm_injected"] = ssrm_injection_name(ssrm_injected);
    doc["selection_lift_approx"] = selection_lift_approx;
    doc["seed"] = seed;
    doc["rng_algorithm"] = rng_algorithm;
    return doc;
}

ExperimentDesign simulated_design(double allocation) {
    ExperimentDesign design;
    design.taxonomy_name = "enterprise";
    design.randomization_entity = "contract";
    design.analysis_entity = "seat";
    design.variants.push_back({kSimControl, 1.0 - allocation, true});
    design.variants.push_back({kSimTreatment, allocation, false});
    return design;
}

std::pair<ExperimentDataset, GroundTruth> generate(const DgpSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    const double sd_contract = std::sqrt(spec.contract_effect_var);
    const double sd_seat = std::sqrt(spec.seat_noise_var);

    std::vector<UnitRecord> records;
    records.reserve(spec.n_contracts);
    const int id_width = static_cast<int>(std::to_string(spec.n_contracts).size());

    for (std::size_t i = 0; i < spec.n_contracts; ++i) {
        const double size_draw = rng.lognormal(spec.mu_logsize, spec.sigma_logsize);
        const long seats = std::max(1L, std::lround(size_draw));
        const bool treated = rng.bernoulli(spec.allocation);
        const double gate_rate =
            spec.contract_trigger_rate -
            (treated ? spec.treatment_contract_trigger_drop : 0.0);
        const bool gate = rng.bernoulli(gate_rate);
        const auto [zu_pre, zu_post] = rng.bivariate_normal(spec.pre_post_corr);
        const double u_pre = sd_contract * zu_pre;
        const double u_post = sd_contract * zu_post;
        const double w = rng.normal();
        const double contract_post_shift =
            spec.nonlinearity * (w * w - 1.0) + (treated ? spec.treatment_lift : 0.0);

        std::vector<double> triggered_outcomes;
        double x_sum = 0.0;
        long pre_active = 0;
        for (long s = 0; s < seats; ++s) {
            const bool active_pre = rng.bernoulli(spec.seat_trigger_rate);
            const bool active_post = rng.bernoulli(spec.seat_trigger_rate);
            const auto [ze_pre, ze_post] = rng.bivariate_normal(spec.pre_post_corr);
            const double outcome_pre = std::max(0.0, spec.base_rate + u_pre + sd_seat * ze_pre);
            const double outcome_post =
                std::max(0.0, spec.base_rate + u_post + contract_post_shift + sd_seat * ze_post);
            if (active_pre) {
                x_sum += outcome_pre;
                ++pre_active;
            }
            if (active_post) triggered_outcomes.push_back(outcome_post);
        }
        if (!gate || triggered_outcomes.empty()) continue;  // contract not triggered

        if (treated && spec.attrition_rate > 0.0) {
            // De-trigger the least active seats; survivors come from the
            // upper tail, which is exactly the bias the seat-level guardrail
            // has to catch. floor() never empties a contract.
            const std::size_t drop = static_cast<std::size_t>(
                std::floor(spec.attrition_rate * static_cast<double>(triggered_outcomes.size())));
            if (drop > 0) {
                std::sort(triggered_outcomes.begin(), triggered_outcomes.end());
                triggered_outcomes.erase(triggered_outcomes.begin(),
                                         triggered_outcomes.begin() +
                                             static_cast<std::ptrdiff_t>(drop));
            }
        }

        UnitRecord r;
        std::string index = std::to_string(i);
        r.unit_id = "c" + std::string(static_cast<std::size_t>(id_width) - index.size(), '0') +
                    index;
        r.variant = treated ? kSimTreatment : kSimControl;
        r.n = static_cast<double>(triggered_outcomes.size());
        for (double v : triggered_outcomes) r.y += v;
        r.x_pre = x_sum;
        r.m_pre = static_cast<double>(pre_active);
        r.n_pre = static_cast<double>(pre_active);
        r.covariates = {w};
        records.push_back(std::move(r));
    }

    GroundTruth truth;
    truth.true_ratio_lift = spec.treatment_lift;
    truth.seed = spec.seed;
    truth.rng_algorithm = kRngAlgorithm;
    if (spec.treatment_contract_trigger_drop > 0.0) {
        truth.ssrm_injected = SsrmInjection::contract_level;
    } else if (spec.attrition_rate > 0.0) {
        truth.ssrm_injected = SsrmInjection::seat_level;
    }
    if (spec.attrition_rate > 0.0) {
        const double z_a = normal_quantile(spec.attrition_rate);
        const double phi = std::exp(-0.5 * z_a * z_a) / kSqrt2Pi;
        truth.selection_lift_approx = sd_seat * phi / (1.0 - spec.attrition_rate);
    }
    truth.is_null = spec.treatment_lift == 0.0 && truth.ssrm_injected == SsrmInjection::none;

    return {ExperimentDataset(simulated_design(spec.allocation), std::move(records)),
            std::move(truth)};
}

const char* analysis_procedure_name(AnalysisProcedure procedure) {
    switch (procedure) {
        case AnalysisProcedure::unadjusted: return "unadjusted";
        case AnalysisProcedure::naive_ratio: return "naive_ratio";
        case AnalysisProcedure::cuped: return "cuped";
        case AnalysisProcedure::aipw_zero: return "aipw_zero";
        case AnalysisProcedure::aipw_arm_mean: return "aipw_arm_mean";
        case AnalysisProcedure::aipw_linear: return "aipw_linear";
        case AnalysisProcedure::aipw_knn: return "aipw_knn";
    }
    return "unknown";
}

TestResult naive_ratio_test(const ExperimentDataset& ds, double alpha) {
    // Point estimate as usual, but the variance treats the per-unit ratios
    // y_i/n_i as independent observations. Kept out of production paths.
    auto arm = [&](const char* variant) {
        const auto y = ds.column(Field::y, variant);
        const auto n = ds.column(Field::n, variant);
        double sum_y = 0.0, sum_n = 0.0;
        std::vector<double> per_unit;
        per_unit.reserve(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            sum_y += y[i];
            sum_n += n[i];
            if (n[i] == 0.0) throw std::invalid_argument("naive_ratio_test: unit with n = 0");
            per_unit.push_back(y[i] / n[i]);
        }
        if (sum_n == 0.0) throw std::invalid_argument("naive_ratio_test: zero denominator");
        return std::make_pair(sum_y / sum_n,
                              sample_var(per_unit) / static_cast<double>(per_unit.size()));
    };
    const auto [zt, vt] = arm(kSimTreatment);
    const auto [zc, vc] = arm(kSimControl);

    TestResult r;
    r.method = TestMethod::delta_z;
    r.alpha = alpha;
    r.estimate = zt - zc;
    r.std_err = std::sqrt(vt + vc);
    if (r.std_err == 0.0) {
        r.degenerate = true;
        r.statistic = 0.0;
        r.p_value = (r.estimate == 0.0) ? 1.0 : 0.0;
        r.ci_low = r.ci_high = r.estimate;
        return r;
    }
    r.statistic = r.estimate / r.std_err;
    r.p_value = normal_two_sided_p(r.statistic);
    const double z = normal_quantile(1.0 - alpha / 2.0);
    r.ci_low = r.estimate - z * r.std_err;
    r.ci_high = r.estimate + z * r.std_err;
    return r;
}

namespace {

TestResult run_procedure(const ExperimentDataset& ds, AnalysisProcedure procedure, double alpha,
                         int aipw_folds, std::uint64_t seed) {
    switch (procedure) {
        case AnalysisProcedure::unadjusted:
            return unadjusted_estimate(ds, alpha);
        case AnalysisProcedure::naive_ratio:
            return naive_ratio_test(ds, alpha);
        case AnalysisProcedure::cuped:
            return cuped_estimate(ds, fit_theta(ds), alpha);
        case AnalysisProcedure::aipw_zero:
        case AnalysisProcedure::aipw_arm_mean:
        case AnalysisProcedure::aipw_linear:
        case AnalysisProcedure::aipw_knn: {
            CrossFitConfig cfg;
            cfg.k_folds = aipw_folds;
            cfg.seed = seed;
            switch (procedure) {
                case AnalysisProcedure::aipw_zero:
                    cfg.regressor.kind = RegressorSpec::Kind::zero;
                    break;
                case AnalysisProcedure::aipw_arm_mean:
                    cfg.regressor.kind = RegressorSpec::Kind::arm_mean;
                    break;
                case AnalysisProcedure::aipw_linear:
                    cfg.regressor.kind = RegressorSpec::Kind::linear_least_squares;
                    break;
                default:
                    cfg.regressor.kind = RegressorSpec::Kind::k_nearest_neighbors;
                    break;
            }
            return aipw_estimate(ds, cross_fit(ds, cfg), alpha);
        }
    }
    throw std::invalid_argument("run_procedure: unknown procedure");
}

}  // namespace

MonteCarloSummary replicate(const DgpSpec& spec, AnalysisProcedure procedure, std::size_t reps,
                            double alpha, int aipw_folds) {
    if (reps < 2) throw std::invalid_argument("replicate: reps must be >= 2");
    std::vector<double> estimates;
    estimates.reserve(reps);
    MonteCarloSummary summary;
    summary.reps = reps;
    double truth_lift = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
        DgpSpec rep_spec = spec;
        rep_spec.seed = Rng::substream(spec.seed, r).next_u64();
        const auto [ds, truth] = generate(rep_spec);
        truth_lift = truth.true_ratio_lift;
        const TestResult result = run_procedure(ds, procedure, alpha, aipw_folds, rep_spec.seed);
        estimates.push_back(result.estimate);
        summary.mean_model_variance += result.std_err * result.std_err;
        summary.mean_p_value += result.p_value;
        if (result.ci_low <= truth.true_ratio_lift && truth.true_ratio_lift <= result.ci_high) {
            summary.ci_coverage += 1.0;
        }
        if (result.significant()) {
            summary.significant_rate += 1.0;
            if (result.estimate > 0.0) summary.positive_significant_rate += 1.0;
        }
    }
    (void)truth_lift;
    const double n = static_cast<double>(reps);
    summary.mean_estimate = sample_mean(estimates);
    summary.empirical_variance = sample_var(estimates);
    summary.mean_model_variance /= n;
    summary.mean_p_value /= n;
    summary.ci_coverage /= n;
    summary.significant_rate /= n;
    summary.positive_significant_rate /= n;
    return summary;
}

std::vector<double> replicate_p_values(const DgpSpec& spec, AnalysisProcedure procedure,
                                       std::size_t reps, double alpha, int aipw_folds) {
    std::vector<double> p_values;
    p_values.reserve(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        DgpSpec rep_spec = spec;
        rep_spec.seed = Rng::substream(spec.seed, r).next_u64();
        const auto [ds, truth] = generate(rep_spec);
        p_values.push_back(run_procedure(ds, procedure, alpha, aipw_folds, rep_spec.seed).p_value);
    }
    return p_values;
}

SsrmRates replicate_ssrm(const DgpSpec& spec, std::size_t reps, double alpha_contract,
                         double alpha_seat) {
    SsrmRates rates;
    rates.reps = reps;
    std::size_t contract_alerts = 0;
    std::size_t seat_alerts = 0;
    std::size_t seat_runs = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        DgpSpec rep_spec = spec;
        rep_spec.seed = Rng::substream(spec.seed, r).next_u64();
        const auto [ds, truth] = generate(rep_spec);
        const SsrmReport report = ssrm_flow(ds, alpha_contract, alpha_seat);
        if (report.alerts.contains(SsrmAlertKind::CONTRACT_SSRM)) {
            ++contract_alerts;
        } else {
            ++seat_runs;
            if (report.alerts.contains(SsrmAlertKind::SEAT_SSRM)) ++seat_alerts;
        }
    }
    rates.contract_alert_rate = static_cast<double>(contract_alerts) / static_cast<double>(reps);
    rates.seat_alert_rate =
        (seat_runs > 0) ? static_cast<double>(seat_alerts) / static_cast<double>(seat_runs) : 0.0;
    return rates;
}

CoverageComparison compare_delta_vs_naive(const DgpSpec& spec, std::size_t reps, double alpha) {
    CoverageComparison cmp;
    cmp.reps = reps;
    for (std::size_t r = 0; r < reps; ++r) {
        DgpSpec rep_spec = spec;
        rep_spec.seed = Rng::substream(spec.seed, r).next_u64();
        const auto [ds, truth] = generate(rep_spec);
        const TestResult delta = unadjusted_estimate(ds, alpha);
        const TestResult naive = naive_ratio_test(ds, alpha);
        if (delta.ci_low <= truth.true_ratio_lift && truth.true_ratio_lift <= delta.ci_high) {
            cmp.delta_coverage += 1.0;
        }
        if (naive.ci_low <= truth.true_ratio_lift && truth.true_ratio_lift <= naive.ci_high) {
            cmp.naive_coverage += 1.0;
        }
    }
    cmp.delta_coverage /= static_cast<double>(reps);
    cmp.naive_coverage /= static_cast<double>(reps);
    return cmp;
}

}  // namespace clab
