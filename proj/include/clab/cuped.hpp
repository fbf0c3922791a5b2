#pragma once

// Ratio-metric CUPED: adjust the difference-of-ratios estimator by theta
// times the pre-period difference-of-ratios.
//
// theta is the least-squares coefficient between the per-unit linearized
// ratio contributions
//
//   l_post_i = y_i / mu_N - mu_Y * n_i / mu_N^2
//   l_pre_i  = x_i / mu_M - mu_X * m_i / mu_M^2
//
// with the mu's estimated by pooled (both-arm) sample means and theta =
// cov(l_post, l_pre) / var(l_pre) fitted pooled. The adjusted estimator's
// variance honors the within-arm covariance between the post and pre ratios
// via a per-arm 4-variate delta method on (Ybar, Nbar, Xbar, Mbar).
//
// Passing Field::one as a denominator degrades gracefully to count-metric
// CUPED, which the sample-ratio fallback analyses use.

#include <string>
#include <vector>

#include "clab/dataset.hpp"
#include "clab/stats.hpp"

namespace clab {

struct MetricFields {
    Field num = Field::y;
    Field den = Field::n;
    Field pre_num = Field::x_pre;
    Field pre_den = Field::m_pre;
};

struct CupedFit {
    double theta = 0.0;
    double mu_y = 0.0, mu_n = 0.0, mu_x = 0.0, mu_m = 0.0;  // pooled means
    std::vector<double> linearized_post;
    std::vector<double> linearized_pre;
    double var_reduction_pct = 0.0;  // 100 * corr(l_post, l_pre)^2, <= 100
    bool degenerate_pre = false;     // var(l_pre) ~ 0 forced theta = 0
    MetricFields fields;
};

// Fit theta on a two-variant dataset (pooled across arms). Requires >= 2
// units per variant and nonzero pooled denominator sums. A zero-variance
// pre-period linearization is not an error: theta = 0 with the degenerate
// flag set.
CupedFit fit_theta(const ExperimentDataset& ds, const MetricFields& fields = {});

// CUPED point estimate and delta-method variance for treatment - control on
// a two-variant dataset, using a fit from the same (capped) dataset.
TestResult cuped_estimate(const ExperimentDataset& ds, const CupedFit& fit, double alpha);

// Unadjusted difference of ratios for the same field selection (the theta=0
// special case; also used for the pre-period A/A pass).
TestResult unadjusted_estimate(const ExperimentDataset& ds, double alpha,
                               const MetricFields& fields = {});

}  // namespace clab
