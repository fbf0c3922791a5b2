#include "clab/stats.hpp"

#include "clab/dist.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace clab {

namespace {
// Variances this far below the squared scale of the data are treated as
// exact zeros (floating-point residue of constant inputs).
constexpr double kRelativeZeroVar = 1e-14;

bool effectively_zero_var(double var, double mean_square) {
    return var <= kRelativeZeroVar * mean_square;
}
}  // namespace

double sample_mean(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("sample_mean: empty input");
    double sum = 0.0;
    for (double v : x) sum += v;
    return sum / static_cast<double>(x.size());
}

double sample_var(std::span<const double> x) {
    if (x.size() < 2) throw std::invalid_argument("sample_var: need at least 2 values");
    const double m = sample_mean(x);
    double ss = 0.0;
    for (double v : x) {
        const double d = v - m;
        ss += d * d;
    }
    return ss / static_cast<double>(x.size() - 1);
}

double sample_cov(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("sample_cov: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("sample_cov: need at least 2 values");
    const double mx = sample_mean(x);
    const double my = sample_mean(y);
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) ss += (x[i] - mx) * (y[i] - my);
    return ss / static_cast<double>(x.size() - 1);
}

std::vector<double> mean_cov_matrix(const std::vector<std::span<const double>>& columns) {
    const std::size_t k = columns.size();
    if (k == 0) throw std::invalid_argument("mean_cov_matrix: no columns");
    const std::size_t rows = columns[0].size();
    for (const auto& c : columns) {
        if (c.size() != rows) throw std::invalid_argument("mean_cov_matrix: ragged columns");
    }
    if (rows < 2) throw std::invalid_argument("mean_cov_matrix: need at least 2 rows");
    std::vector<double> means(k);
    for (std::size_t j = 0; j < k; ++j) means[j] = sample_mean(columns[j]);
    std::vector<double> cov(k * k, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < k; ++i) {
            const double di = columns[i][r] - means[i];
            for (std::size_t j = i; j < k; ++j) {
                cov[i * k + j] += di * (columns[j][r] - means[j]);
            }
        }
    }
    const double denom = static_cast<double>(rows - 1) * static_cast<double>(rows);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i; j < k; ++j) {
            cov[i * k + j] /= denom;
            cov[j * k + i] = cov[i * k + j];
        }
    }
    return cov;
}

double quadratic_form(std::span<const double> gradient, std::span<const double> cov_row_major) {
    const std::size_t k = gradient.size();
    if (cov_row_major.size() != k * k) {
        throw std::invalid_argument("quadratic_form: dimension mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) row += cov_row_major[i * k + j] * gradient[j];
        total += gradient[i] * row;
    }
    return total;
}

const char* test_method_name(TestMethod m) {
    switch (m) {
        case TestMethod::delta_z: return "delta_z";
        case TestMethod::welch_t: return "welch_t";
        case TestMethod::chi_square: return "chi_square";
    }
    return "unknown";
}

RatioEstimate ratio_estimate(std::span<const double> y, std::span<const double> n) {
    if (y.size() != n.size()) throw std::invalid_argument("ratio_estimate: length mismatch");
    if (y.size() < 2) throw std::invalid_argument("ratio_estimate: need at least 2 units");
    const std::size_t L = y.size();
    double sum_y = 0.0, sum_n = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
        sum_y += y[i];
        sum_n += n[i];
    }
    if (sum_n == 0.0) throw std::invalid_argument("ratio_estimate: denominator sums to zero");

    RatioEstimate est;
    est.n_units = L;
    est.mean_num = sum_y / static_cast<double>(L);
    est.mean_den = sum_n / static_cast<double>(L);
    est.value = sum_y / sum_n;

    const auto cov = mean_cov_matrix({y, n});
    est.cov_matrix[0] = cov[0];
    est.cov_matrix[1] = cov[1];
    est.cov_matrix[2] = cov[2];
    est.cov_matrix[3] = cov[3];

    const double g[2] = {1.0 / est.mean_den, -est.mean_num / (est.mean_den * est.mean_den)};
    double var = quadratic_form(std::span<const double>(g, 2), cov);
    if (var < 0.0) {
        if (var < -1e-12) throw std::runtime_error("ratio_estimate: variance badly negative");
        var = 0.0;
        est.degenerate = true;
    }
    est.var = var;
    return est;
}

TestResult two_sample_ratio_test(const RatioEstimate& treated, const RatioEstimate& control,
                                 double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("two_sample_ratio_test: alpha must be in (0, 1)");
    }
    TestResult r;
    r.method = TestMethod::delta_z;
    r.alpha = alpha;
    r.estimate = treated.value - control.value;
    const double var = treated.var + control.var;
    r.std_err = std::sqrt(var);
    if (r.std_err == 0.0) {
        r.degenerate = true;
        if (r.estimate == 0.0) {
            r.statistic = 0.0;
            r.p_value = 1.0;
        } else {
            r.statistic = std::copysign(std::numeric_limits<double>::infinity(), r.estimate);
            r.p_value = 0.0;
        }
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

TestResult welch_t_test(std::span<const double> a, std::span<const double> b, double alpha) {
    if (a.size() < 2 || b.size() < 2) {
        throw std::invalid_argument("welch_t_test: each sample needs at least 2 values");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("welch_t_test: alpha must be in (0, 1)");
    }
    const double la = static_cast<double>(a.size());
    const double lb = static_cast<double>(b.size());
    const double ma = sample_mean(a);
    const double mb = sample_mean(b);
    const double va = sample_var(a);
    const double vb = sample_var(b);

    TestResult r;
    r.method = TestMethod::welch_t;
    r.alpha = alpha;
    r.estimate = ma - mb;

    const double sa2 = va / la;
    const double sb2 = vb / lb;
    const double se2 = sa2 + sb2;
    double msq = 0.0;
    for (double v : a) msq = std::max(msq, v * v);
    for (double v : b) msq = std::max(msq, v * v);
    if (se2 <= 0.0 || effectively_zero_var(se2, msq)) {
        r.degenerate = true;
        r.std_err = 0.0;
        if (r.estimate == 0.0) {
            r.statistic = 0.0;
            r.p_value = 1.0;
        } else {
            r.statistic = std::copysign(std::numeric_limits<double>::infinity(), r.estimate);
            r.p_value = 0.0;
        }
        r.ci_low = r.ci_high = r.estimate;
        return r;
    }
    r.std_err = std::sqrt(se2);
    r.statistic = r.estimate / r.std_err;
    const double df =
        se2 * se2 / (sa2 * sa2 / (la - 1.0) + sb2 * sb2 / (lb - 1.0));
    r.p_value = student_t_two_sided_p(r.statistic, df);
    const double t_crit = student_t_quantile(1.0 - alpha / 2.0, df);
    r.ci_low = r.estimate - t_crit * r.std_err;
    r.ci_high = r.estimate + t_crit * r.std_err;
    return r;
}

TestResult chi_square_ratio_test(const std::map<std::string, double>& observed,
                                 const std::map<std::string, double>& expected_fractions,
                                 double alpha) {
    if (observed.size() < 2) {
        throw std::invalid_argument("chi_square_ratio_test: need at least 2 variants");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("chi_square_ratio_test: alpha must be in (0, 1)");
    }
    double total = 0.0;
    double fraction_total = 0.0;
    for (const auto& [variant, count] : observed) {
        if (count < 0.0) throw std::invalid_argument("chi_square_ratio_test: negative count");
        total += count;
        auto it = expected_fractions.find(variant);
        if (it == expected_fractions.end() || it->second <= 0.0) {
            throw std::invalid_argument("chi_square_ratio_test: zero expected count for variant '" +
                                        variant + "'");
        }
        fraction_total += it->second;
    }
    if (total <= 0.0) throw std::invalid_argument("chi_square_ratio_test: no observations");

    double statistic = 0.0;
    for (const auto& [variant, count] : observed) {
        const double expected = total * expected_fractions.at(variant) / fraction_total;
        const double d = count - expected;
        statistic += d * d / expected;
    }

    TestResult r;
    r.method = TestMethod::chi_square;
    r.alpha = alpha;
    r.estimate = statistic;
    r.statistic = statistic;
    const double df = static_cast<double>(observed.size()) - 1.0;
    r.std_err = std::sqrt(2.0 * df);  // null sd of the statistic, for display only
    r.p_value = chi_square_sf(statistic, df);
    // Goodness-of-fit has no signed interval; pin the CI to the statistic.
    r.ci_low = statistic;
    r.ci_high = statistic;
    return r;
}

}  // namespace clab
