#include "clab/cuped.hpp"

#include "clab/dist.hpp"

#include <cmath>
#include <stdexcept>

namespace clab {

namespace {

constexpr double kRelativeZeroVar = 1e-14;

struct ArmNames {
    std::string treatment;
    std::string control;
};

ArmNames two_arm_names(const ExperimentDataset& ds, const char* caller) {
    const auto& variants = ds.design().variants;
    if (variants.size() != 2) {
        throw std::invalid_argument(std::string(caller) +
                                    ": needs a two-variant dataset (use pair_subset)");
    }
    const VariantSpec* ctrl = ds.design().control();
    if (ctrl == nullptr) {
        throw std::invalid_argument(std::string(caller) + ": design has no control variant");
    }
    for (const auto& v : variants) {
        if (!v.is_control) return {v.name, ctrl->name};
    }
    throw std::invalid_argument(std::string(caller) + ": design has no treatment variant");
}

}  // namespace

CupedFit fit_theta(const ExperimentDataset& ds, const MetricFields& fields) {
    const ArmNames arms = two_arm_names(ds, "fit_theta");
    for (const auto& name : {arms.treatment, arms.control}) {
        if (ds.variant_unit_counts().at(name) < 2) {
            throw std::invalid_argument("fit_theta: variant '" + name +
                                        "' needs at least 2 units");
        }
    }

    CupedFit fit;
    fit.fields = fields;
    const auto num = ds.column(fields.num);
    const auto den = ds.column(fields.den);
    const auto pre_num = ds.column(fields.pre_num);
    const auto pre_den = ds.column(fields.pre_den);

    fit.mu_y = sample_mean(num);
    fit.mu_n = sample_mean(den);
    fit.mu_x = sample_mean(pre_num);
    fit.mu_m = sample_mean(pre_den);
    if (fit.mu_n == 0.0) throw std::invalid_argument("fit_theta: pooled denominator sums to zero");
    if (fit.mu_m == 0.0) {
        throw std::invalid_argument("fit_theta: pooled pre-period denominator sums to zero");
    }

    const std::size_t L = ds.size();
    fit.linearized_post.resize(L);
    fit.linearized_pre.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        fit.linearized_post[i] =
            num[i] / fit.mu_n - fit.mu_y * den[i] / (fit.mu_n * fit.mu_n);
        fit.linearized_pre[i] =
            pre_num[i] / fit.mu_m - fit.mu_x * pre_den[i] / (fit.mu_m * fit.mu_m);
    }

    const double var_pre = sample_var(fit.linearized_pre);
    double pre_scale = 0.0;
    for (double v : fit.linearized_pre) pre_scale = std::max(pre_scale, v * v);
    if (var_pre <= kRelativeZeroVar * pre_scale) {
        fit.theta = 0.0;
        fit.degenerate_pre = true;
        fit.var_reduction_pct = 0.0;
        return fit;
    }
    const double cov = sample_cov(fit.linearized_post, fit.linearized_pre);
    const double var_post = sample_var(fit.linearized_post);
    fit.theta = cov / var_pre;
    fit.var_reduction_pct =
        (var_post > 0.0) ? 100.0 * (cov * cov) / (var_pre * var_post) : 0.0;
    return fit;
}

namespace {

struct ArmSummary {
    double ratio_post;
    double ratio_pre;
    double variance;  // delta-method variance of (post ratio - theta * pre ratio)
};

ArmSummary summarize_arm(const ExperimentDataset& ds, const std::string& variant,
                         const MetricFields& fields, double theta) {
    const auto num = ds.column(fields.num, variant);
    const auto den = ds.column(fields.den, variant);
    const auto pre_num = ds.column(fields.pre_num, variant);
    const auto pre_den = ds.column(fields.pre_den, variant);
    if (num.size() < 2) {
        throw std::invalid_argument("cuped_estimate: variant '" + variant +
                                    "' needs at least 2 units");
    }
    double sum_den = 0.0, sum_pre_den = 0.0;
    for (double v : den) sum_den += v;
    for (double v : pre_den) sum_pre_den += v;
    if (sum_den == 0.0) {
        throw std::invalid_argument("cuped_estimate: variant '" + variant +
                                    "' denominator sums to zero");
    }
    if (sum_pre_den == 0.0) {
        throw std::invalid_argument("cuped_estimate: variant '" + variant +
                                    "' pre-period denominator sums to zero");
    }

    const double mn = sample_mean(num);
    const double md = sample_mean(den);
    const double mpn = sample_mean(pre_num);
    const double mpd = sample_mean(pre_den);

    const auto cov = mean_cov_matrix({num, den, pre_num, pre_den});
    const double g[4] = {1.0 / md, -mn / (md * md), -theta / mpd,
                         theta * mpn / (mpd * mpd)};
    ArmSummary s;
    s.ratio_post = mn / md;
    s.ratio_pre = mpn / mpd;
    s.variance = quadratic_form(std::span<const double>(g, 4), cov);
    return s;
}

}  // namespace

TestResult cuped_estimate(const ExperimentDataset& ds, const CupedFit& fit, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("cuped_estimate: alpha must be in (0, 1)");
    }
    const ArmNames arms = two_arm_names(ds, "cuped_estimate");
    const ArmSummary treated = summarize_arm(ds, arms.treatment, fit.fields, fit.theta);
    const ArmSummary control = summarize_arm(ds, arms.control, fit.fields, fit.theta);

    TestResult r;
    r.method = TestMethod::delta_z;
    r.alpha = alpha;
    r.estimate = (treated.ratio_post - control.ratio_post) -
                 fit.theta * (treated.ratio_pre - control.ratio_pre);
    double var = treated.variance + control.variance;
    if (var < 0.0) {
        var = 0.0;
        r.degenerate = true;
    }
    r.std_err = std::sqrt(var);
    if (r.std_err == 0.0) {
        r.degenerate = true;
        r.statistic = (r.estimate == 0.0)
                          ? 0.0
                          : std::copysign(std::numeric_limits<double>::infinity(), r.estimate);
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

TestResult unadjusted_estimate(const ExperimentDataset& ds, double alpha,
                               const MetricFields& fields) {
    const ArmNames arms = two_arm_names(ds, "unadjusted_estimate");
    const RatioEstimate treated =
        ratio_estimate(ds.column(fields.num, arms.treatment), ds.column(fields.den, arms.treatment));
    const RatioEstimate control =
        ratio_estimate(ds.column(fields.num, arms.control), ds.column(fields.den, arms.control));
    return two_sample_ratio_test(treated, control, alpha);
}

}  // namespace clab
