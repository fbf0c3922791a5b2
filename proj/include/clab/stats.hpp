#pragma once

// Estimator-agnostic statistical kernels for cluster-randomized ratio
// metrics: ratio-of-sums estimates with delta-method variance, two-sample
// z and Welch t tests, and the chi-square goodness-of-fit test used by the
// sample-ratio guardrail.
//
// The variance of Z = mean(y)/mean(n) comes from the first-order expansion
//
//   Var(Z) = Var(Ybar)/Nbar^2 + Ybar^2 Var(Nbar)/Nbar^4
//            - 2 Ybar Cov(Ybar, Nbar)/Nbar^3,
//
// evaluated as the quadratic form g' S g with gradient g = (1/Nbar,
// -Ybar/Nbar^2); the same helper generalizes to the 4-dimensional gradients
// the adjusted estimators need. Randomization units are i.i.d., so S is the
// sample covariance of the per-unit vector divided by the unit count.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace clab {

double sample_mean(std::span<const double> x);
// Unbiased (L-1 denominator) sample variance and covariance; L >= 2.
double sample_var(std::span<const double> x);
double sample_cov(std::span<const double> x, std::span<const double> y);

// k x k row-major sample covariance matrix of the *means* of the columns:
// sample covariance of the per-unit vectors divided by the row count.
std::vector<double> mean_cov_matrix(const std::vector<std::span<const double>>& columns);

// Quadratic form g' C g with C row-major k x k.
double quadratic_form(std::span<const double> gradient, std::span<const double> cov_row_major);

struct RatioEstimate {
    double value = 0.0;      // sum(y)/sum(n) = Ybar/Nbar
    double var = 0.0;        // delta-method variance, clamped at 0
    std::size_t n_units = 0;
    double mean_num = 0.0;
    double mean_den = 0.0;
    // (Var(Ybar), Cov(Ybar,Nbar); Cov, Var(Nbar)), row-major.
    double cov_matrix[4] = {0.0, 0.0, 0.0, 0.0};
    bool degenerate = false;  // negative variance clamped to 0
};

enum class TestMethod { delta_z, welch_t, chi_square };
const char* test_method_name(TestMethod m);

struct TestResult {
    double estimate = 0.0;
    double std_err = 0.0;
    double statistic = 0.0;
    double p_value = 1.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double alpha = 0.05;
    TestMethod method = TestMethod::delta_z;
    bool degenerate = false;  // zero-variance or clamped inputs
    bool significant() const { return p_value < alpha; }
};

// Ratio of sums with delta-method variance. Requires len >= 2, sum(n) != 0.
RatioEstimate ratio_estimate(std::span<const double> y, std::span<const double> n);

// Difference of two ratio estimates, normal approximation.
TestResult two_sample_ratio_test(const RatioEstimate& treated, const RatioEstimate& control,
                                 double alpha);

// Welch t test with Welch-Satterthwaite degrees of freedom; each sample
// needs >= 2 values. Zero variance in both samples degenerates to p = 1
// (equal means) or p = 0 (unequal means) with the degenerate flag set.
TestResult welch_t_test(std::span<const double> a, std::span<const double> b, double alpha);

// Chi-square goodness of fit of observed per-variant counts against design
// fractions (renormalized over the variants present); df = variants - 1.
TestResult chi_square_ratio_test(const std::map<std::string, double>& observed,
                                 const std::map<std::string, double>& expected_fractions,
                                 double alpha);

}  // namespace clab
