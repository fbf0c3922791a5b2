#pragma once

// Cross-fitted, debiased nonlinear variance reduction for ratio metrics.
//
// The dataset is split into K folds (canonical sort by unit_id, seeded
// shuffle, round-robin fold labels stratified by arm). For each fold and
// arm, regressors for the numerator and denominator are trained on that
// arm's units *outside* the fold and predict for every unit inside it, so
// no unit is ever predicted by a model that saw it. The treatment effect is
//
//   sum(A_i)/sum(B_i) - sum(C_i)/sum(D_i)
//
// with A_i = mu1_y(X_i) + (T_i/p)(y_i - mu1_y(X_i)), B_i the same for the
// denominator, C_i/D_i the control-side analogues with weight
// (1-T_i)/(1-p), and p = n_t/n. With the zero regressor this reduces
// algebraically to the plain difference of ratios. Variance comes from the
// i.i.d.-unit delta method on the means of (A, B, C, D).
//
// Features are the unit covariates with the pre-period metrics x_pre and
// m_pre always appended.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "clab/dataset.hpp"
#include "clab/stats.hpp"

namespace clab {

struct RegressorSpec {
    enum class Kind { zero, arm_mean, linear_least_squares, k_nearest_neighbors };
    Kind kind = Kind::linear_least_squares;
    std::map<std::string, double> hyperparameters;  // k_nearest_neighbors: {"k": 10}

    int knn_k() const;  // validated k for the kNN kind (default 10)
    void validate() const;
    static RegressorSpec from_json(const nlohmann::json& doc);
    nlohmann::ordered_json to_json() const;
};

const char* regressor_kind_name(RegressorSpec::Kind kind);

struct CrossFitConfig {
    int k_folds = 5;
    std::uint64_t seed = 0;
    RegressorSpec regressor;

    void validate() const;
    static CrossFitConfig from_json(const nlohmann::json& doc);
    nlohmann::ordered_json to_json() const;
};

// Fitted prediction function over a fixed-width feature space.
class Regressor {
public:
    virtual ~Regressor() = default;
    virtual double predict(std::span<const double> features) const = 0;
};

// Train one regressor. rows(X) >= 1 and consistent widths required; the
// linear kind returns the minimum-norm least-squares solution when the
// design is rank-deficient.
std::unique_ptr<Regressor> fit_regressor(const RegressorSpec& spec,
                                         const std::vector<std::vector<double>>& features,
                                         const std::vector<double>& targets);

struct CrossFitPredictions {
    // Indexed by dataset record order.
    std::vector<double> mu1_y, mu1_n, mu0_y, mu0_n;
    std::vector<int> fold;  // fold label per record
    std::vector<std::string> warnings;
};

// Out-of-fold predictions for all four (arm, target) surfaces. Fold
// assignment is a deterministic function of (seed, sorted unit ids); a
// regressor fit failure on one training partition falls back to the arm
// mean with a logged warning.
CrossFitPredictions cross_fit(const ExperimentDataset& ds, const CrossFitConfig& cfg);

struct AipwTerms {
    std::vector<double> a, b, c, d;
    double p_hat = 0.0;  // n_t / n, exactly
};

AipwTerms build_aipw_terms(const ExperimentDataset& ds, const CrossFitPredictions& preds);

// Debiased estimate with delta-method variance; requires 0 < n_t < n and
// positive denominator term sums.
TestResult aipw_estimate(const ExperimentDataset& ds, const CrossFitPredictions& preds,
                         double alpha);

}  // namespace clab
