#include "clab/advanced_vr.hpp"

#include "clab/dist.hpp"
#include "clab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace clab {

void CrossFitConfig::validate() const {
    if (k_folds < 2) throw std::invalid_argument("cross-fit config: k_folds must be >= 2");
    regressor.validate();
}

CrossFitConfig CrossFitConfig::from_json(const nlohmann::json& doc) {
    CrossFitConfig cfg;
    cfg.k_folds = doc.value("k_folds", 5);
    cfg.seed = doc.value("seed", static_cast<std::uint64_t>(0));
    if (doc.contains("regressor")) cfg.regressor = RegressorSpec::from_json(doc["regressor"]);
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json CrossFitConfig::to_json() const {
    nlohmann::ordered_json doc;
    doc["k_folds"] = k_folds;
    doc["seed"] = seed;
    doc["regressor"] = regressor.to_json();
    return doc;
}

namespace {

std::vector<std::vector<double>> build_features(const ExperimentDataset& ds) {
    std::vector<std::vector<double>> features(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const UnitRecord& r = ds.records()[i];
        features[i] = r.covariates;
        features[i].push_back(r.x_pre);
        features[i].push_back(r.m_pre);
    }
    return features;
}

struct ArmIndex {
    std::vector<std::size_t> treated;
    std::vector<std::size_t> control;
    std::string treatment_name;
    std::string control_name;
};

ArmIndex split_arms(const ExperimentDataset& ds, const char* caller) {
    if (ds.design().variants.size() != 2) {
        throw std::invalid_argument(std::string(caller) +
                                    ": needs a two-variant dataset (use pair_subset)");
    }
    const VariantSpec* ctrl = ds.design().control();
    if (ctrl == nullptr) {
        throw std::invalid_argument(std::string(caller) + ": design has no control variant");
    }
    ArmIndex arms;
    arms.control_name = ctrl->name;
    for (const auto& v : ds.design().variants) {
        if (!v.is_control) arms.treatment_name = v.name;
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.records()[i].variant == ctrl->name) {
            arms.control.push_back(i);
        } else {
            arms.treated.push_back(i);
        }
    }
    return arms;
}

}  // namespace

CrossFitPredictions cross_fit(const ExperimentDataset& ds, const CrossFitConfig& cfg) {
    cfg.validate();
    ArmIndex arms = split_arms(ds, "cross_fit");
    const std::size_t k_folds = static_cast<std::size_t>(cfg.k_folds);
    if (arms.treated.size() < k_folds || arms.control.size() < k_folds) {
        throw std::invalid_argument(
            "cross_fit: k_folds exceeds the number of units in the smaller arm");
    }

    // Canonical order: sort each arm's record indices by unit_id, then give
    // them a seeded shuffle and round-robin fold labels. The control arm's
    // labels start where the treated remainder left off so global fold sizes
    // differ by at most one.
    auto by_unit_id = [&](std::size_t a, std::size_t b) {
        return ds.records()[a].unit_id < ds.records()[b].unit_id;
    };
    std::sort(arms.treated.begin(), arms.treated.end(), by_unit_id);
    std::sort(arms.control.begin(), arms.control.end(), by_unit_id);
    Rng treated_rng = Rng::substream(cfg.seed, 0);
    Rng control_rng = Rng::substream(cfg.seed, 1);
    treated_rng.shuffle(arms.treated);
    control_rng.shuffle(arms.control);

    std::vector<int> fold(ds.size(), -1);
    for (std::size_t i = 0; i < arms.treated.size(); ++i) {
        fold[arms.treated[i]] = static_cast<int>(i % k_folds);
    }
    const std::size_t control_offset = arms.treated.size() % k_folds;
    for (std::size_t i = 0; i < arms.control.size(); ++i) {
        fold[arms.control[i]] = static_cast<int>((control_offset + i) % k_folds);
    }

    const auto features = build_features(ds);
    const auto train_targets = [&](const std::vector<std::size_t>& rows, Field f) {
        std::vector<double> out;
        out.reserve(rows.size());
        for (std::size_t i : rows) out.push_back(field_value(ds.records()[i], f));
        return out;
    };

    CrossFitPredictions preds;
    preds.mu1_y.assign(ds.size(), 0.0);
    preds.mu1_n.assign(ds.size(), 0.0);
    preds.mu0_y.assign(ds.size(), 0.0);
    preds.mu0_n.assign(ds.size(), 0.0);
    preds.fold = fold;

    for (std::size_t k = 0; k < k_folds; ++k) {
        std::vector<std::size_t> fold_rows;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (fold[i] == static_cast<int>(k)) fold_rows.push_back(i);
        }
        for (int arm = 0; arm < 2; ++arm) {
            const auto& arm_rows = (arm == 1) ? arms.treated : arms.control;
            std::vector<std::size_t> train_rows;
            for (std::size_t i : arm_rows) {
                if (fold[i] != static_cast<int>(k)) train_rows.push_back(i);
            }
            if (train_rows.empty()) {
                throw std::runtime_error("cross_fit: empty training partition for fold " +
                                         std::to_string(k) + ", arm " + std::to_string(arm));
            }
            std::vector<std::vector<double>> train_features;
            train_features.reserve(train_rows.size());
            for (std::size_t i : train_rows) train_features.push_back(features[i]);

            for (Field target : {Field::y, Field::n}) {
                const auto targets = train_targets(train_rows, target);
                std::unique_ptr<Regressor> model;
                try {
                    model = fit_regressor(cfg.regressor, train_features, targets);
                } catch (const std::exception& e) {
                    preds.warnings.push_back(
                        "fold " + std::to_string(k) + " arm " + std::to_string(arm) + " target " +
                        field_name(target) + ": regressor fit failed (" + e.what() +
                        "); falling back to arm_mean");
                    RegressorSpec fallback;
                    fallback.kind = RegressorSpec::Kind::arm_mean;
                    model = fit_regressor(fallback, train_features, targets);
                }
                for (std::size_t i : fold_rows) {
                    const double value = model->predict(features[i]);
                    if (arm == 1) {
                        (target == Field::y ? preds.mu1_y : preds.mu1_n)[i] = value;
                    } else {
                        (target == Field::y ? preds.mu0_y : preds.mu0_n)[i] = value;
                    }
                }
            }
        }
    }
    return preds;
}

AipwTerms build_aipw_terms(const ExperimentDataset& ds, const CrossFitPredictions& preds) {
    const ArmIndex arms = split_arms(ds, "build_aipw_terms");
    const std::size_t n = ds.size();
    if (preds.mu1_y.size() != n || preds.mu1_n.size() != n || preds.mu0_y.size() != n ||
        preds.mu0_n.size() != n) {
        throw std::invalid_argument("build_aipw_terms: predictions are not aligned with units");
    }
    const std::size_t n_t = arms.treated.size();
    if (n_t == 0 || n_t == n) {
        throw std::invalid_argument("build_aipw_terms: both arms must be non-empty");
    }

    AipwTerms terms;
    terms.p_hat = static_cast<double>(n_t) / static_cast<double>(n);
    terms.a.resize(n);
    terms.b.resize(n);
    terms.c.resize(n);
    terms.d.resize(n);
    const double inv_p = 1.0 / terms.p_hat;
    const double inv_q = 1.0 / (1.0 - terms.p_hat);
    for (std::size_t i = 0; i < n; ++i) {
        const UnitRecord& r = ds.records()[i];
        const double treated = (r.variant == arms.control_name) ? 0.0 : 1.0;
        terms.a[i] = preds.mu1_y[i] + treated * inv_p * (r.y - preds.mu1_y[i]);
        terms.b[i] = preds.mu1_n[i] + treated * inv_p * (r.n - preds.mu1_n[i]);
        terms.c[i] = preds.mu0_y[i] + (1.0 - treated) * inv_q * (r.y - preds.mu0_y[i]);
        terms.d[i] = preds.mu0_n[i] + (1.0 - treated) * inv_q * (r.n - preds.mu0_n[i]);
    }
    return terms;
}

TestResult aipw_estimate(const ExperimentDataset& ds, const CrossFitPredictions& preds,
                         double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("aipw_estimate: alpha must be in (0, 1)");
    }
    const AipwTerms terms = build_aipw_terms(ds, preds);
    const double sum_a = std::accumulate(terms.a.begin(), terms.a.end(), 0.0);
    const double sum_b = std::accumulate(terms.b.begin(), terms.b.end(), 0.0);
    const double sum_c = std::accumulate(terms.c.begin(), terms.c.end(), 0.0);
    const double sum_d = std::accumulate(terms.d.begin(), terms.d.end(), 0.0);
    if (sum_b <= 0.0 || sum_d <= 0.0) {
        throw std::runtime_error("aipw_estimate: denominator term sums must be positive");
    }

    TestResult r;
    r.method = TestMethod::delta_z;
    r.alpha = alpha;
    r.estimate = sum_a / sum_b - sum_c / sum_d;

    const double n = static_cast<double>(ds.size());
    const double ma = sum_a / n;
    const double mb = sum_b / n;
    const double mc = sum_c / n;
    const double md = sum_d / n;
    const auto cov = mean_cov_matrix({terms.a, terms.b, terms.c, terms.d});
    const double g[4] = {1.0 / mb, -ma / (mb * mb), -1.0 / md, mc / (md * md)};
    double var = quadratic_form(std::span<const double>(g, 4), cov);
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

}  // namespace clab
