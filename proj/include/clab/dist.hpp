#pragma once

// Probability distribution kernels: normal, chi-square, and Student t tail
// areas, plus the normal/t quantiles that confidence intervals need.
// Implemented from the classic high-accuracy pieces (erfc, regularized
// incomplete gamma, regularized incomplete beta, Wichura's AS241 normal
// quantile); absolute error well under 1e-10 everywhere we use them.

#include <cstddef>
#include <vector>

namespace clab {

double normal_cdf(double x);
double normal_sf(double x);
// Two-sided tail area for a standard-normal statistic.
double normal_two_sided_p(double z);
// Inverse standard normal CDF (AS241 / PPND16), p in (0, 1).
double normal_quantile(double p);

// Regularized incomplete gamma P(a, x) and Q(a, x) = 1 - P(a, x).
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

// Upper tail of the chi-square distribution, df > 0.
double chi_square_sf(double x, double df);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Upper tail P(T > t) and two-sided p for Student t with df > 0 (fractional
// df allowed, as Welch-Satterthwaite produces).
double student_t_sf(double t, double df);
double student_t_two_sided_p(double t, double df);
// Inverse CDF of Student t, p in (0, 1).
double student_t_quantile(double p, double df);

// Kolmogorov-Smirnov one-sample test against Uniform(0,1): statistic and
// asymptotic p-value (with the Stephens small-sample correction).
double ks_statistic_uniform(std::vector<double> values);
double ks_pvalue(double statistic, std::size_t n);

}  // namespace clab
