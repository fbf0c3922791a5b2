#include "clab/advanced_vr.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace clab {

const char* regressor_kind_name(RegressorSpec::Kind kind) {
    switch (kind) {
        case RegressorSpec::Kind::zero: return "zero";
        case RegressorSpec::Kind::arm_mean: return "arm_mean";
        case RegressorSpec::Kind::linear_least_squares: return "linear_least_squares";
        case RegressorSpec::Kind::k_nearest_neighbors: return "k_nearest_neighbors";
    }
    return "unknown";
}

int RegressorSpec::knn_k() const {
    auto it = hyperparameters.find("k");
    if (it == hyperparameters.end()) return 10;
    const double v = it->second;
    if (!(v >= 1.0) || v != std::floor(v)) {
        throw std::invalid_argument("regressor spec: 'k' must be a positive integer");
    }
    return static_cast<int>(v);
}

void RegressorSpec::validate() const {
    if (kind == Kind::k_nearest_neighbors) {
        (void)knn_k();
        for (const auto& [name, value] : hyperparameters) {
            if (name != "k") {
                throw std::invalid_argument("regressor spec: unknown hyperparameter '" + name +
                                            "' for k_nearest_neighbors");
            }
        }
        return;
    }
    if (!hyperparameters.empty()) {
        throw std::invalid_argument(std::string("regressor spec: kind '") +
                                    regressor_kind_name(kind) + "' takes no hyperparameters");
    }
}

RegressorSpec RegressorSpec::from_json(const nlohmann::json& doc) {
    RegressorSpec spec;
    const std::string kind = doc.value("kind", std::string{"linear_least_squares"});
    if (kind == "zero") {
        spec.kind = Kind::zero;
    } else if (kind == "arm_mean") {
        spec.kind = Kind::arm_mean;
    } else if (kind == "linear_least_squares") {
        spec.kind = Kind::linear_least_squares;
    } else if (kind == "k_nearest_neighbors") {
        spec.kind = Kind::k_nearest_neighbors;
    } else {
        throw std::invalid_argument("regressor spec: unknown kind '" + kind + "'");
    }
    if (doc.contains("hyperparameters")) {
        for (const auto& [name, value] : doc["hyperparameters"].items()) {
            spec.hyperparameters[name] = value.get<double>();
        }
    }
    spec.validate();
    return spec;
}

nlohmann::ordered_json RegressorSpec::to_json() const {
    nlohmann::ordered_json doc;
    doc["kind"] = regressor_kind_name(kind);
    doc["hyperparameters"] = nlohmann::ordered_json::object();
    for (const auto& [name, value] : hyperparameters) doc["hyperparameters"][name] = value;
    return doc;
}

namespace {

class ConstantRegressor final : public Regressor {
public:
    explicit ConstantRegressor(double value) : value_(value) {}
    double predict(std::span<const double>) const override { return value_; }

private:
    double value_;
};

class LinearRegressor final : public Regressor {
public:
    LinearRegressor(Eigen::VectorXd coef, double intercept)
        : coef_(std::move(coef)), intercept_(intercept) {}

    double predict(std::span<const double> features) const override {
        if (static_cast<Eigen::Index>(features.size()) != coef_.size()) {
            throw std::invalid_argument("linear regressor: feature width mismatch");
        }
        double out = intercept_;
        for (Eigen::Index j = 0; j < coef_.size(); ++j) out += coef_[j] * features[j];
        return out;
    }

private:
    Eigen::VectorXd coef_;
    double intercept_;
};

class KnnRegressor final : public Regressor {
public:
    KnnRegressor(const std::vector<std::vector<double>>& features,
                 const std::vector<double>& targets, int k)
        : targets_(targets), k_(std::min<std::size_t>(static_cast<std::size_t>(k),
                                                      targets.size())) {
        const std::size_t width = features.front().size();
        mean_.assign(width, 0.0);
        scale_.assign(width, 1.0);
        for (const auto& row : features) {
            for (std::size_t j = 0; j < width; ++j) mean_[j] += row[j];
        }
        for (double& m : mean_) m /= static_cast<double>(features.size());
        std::vector<double> ss(width, 0.0);
        for (const auto& row : features) {
            for (std::size_t j = 0; j < width; ++j) {
                const double d = row[j] - mean_[j];
                ss[j] += d * d;
            }
        }
        for (std::size_t j = 0; j < width; ++j) {
            const double sd = std::sqrt(ss[j] / static_cast<double>(features.size()));
            scale_[j] = (sd > 0.0) ? sd : 1.0;  // constant features carry no distance
        }
        standardized_.resize(features.size());
        for (std::size_t i = 0; i < features.size(); ++i) {
            standardized_[i].resize(width);
            for (std::size_t j = 0; j < width; ++j) {
                standardized_[i][j] = (features[i][j] - mean_[j]) / scale_[j];
            }
        }
    }

    double predict(std::span<const double> features) const override {
        const std::size_t width = mean_.size();
        if (features.size() != width) {
            throw std::invalid_argument("knn regressor: feature width mismatch");
        }
        std::vector<double> query(width);
        for (std::size_t j = 0; j < width; ++j) query[j] = (features[j] - mean_[j]) / scale_[j];

        std::vector<std::pair<double, std::size_t>> dist(standardized_.size());
        for (std::size_t i = 0; i < standardized_.size(); ++i) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < width; ++j) {
                const double d = standardized_[i][j] - query[j];
                d2 += d * d;
            }
            dist[i] = {d2, i};
        }
        // Ties break on row index so predictions are deterministic.
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_),
                          dist.end());
        double sum = 0.0;
        for (std::size_t i = 0; i < k_; ++i) sum += targets_[dist[i].second];
        return sum / static_cast<double>(k_);
    }

private:
    std::vector<std::vector<double>> standardized_;
    std::vector<double> targets_;
    std::vector<double> mean_, scale_;
    std::size_t k_;
};

}  // namespace

std::unique_ptr<Regressor> fit_regressor(const RegressorSpec& spec,
                                         const std::vector<std::vector<double>>& features,
                                         const std::vector<double>& targets) {
    spec.validate();
    if (spec.kind == RegressorSpec::Kind::zero) {
        return std::make_unique<ConstantRegressor>(0.0);
    }
    if (targets.empty() || features.size() != targets.size()) {
        throw std::invalid_argument("fit_regressor: empty or misaligned training set");
    }
    const std::size_t width = features.front().size();
    for (const auto& row : features) {
        if (row.size() != width) {
            throw std::invalid_argument("fit_regressor: inconsistent feature width");
        }
    }
    switch (spec.kind) {
        case RegressorSpec::Kind::zero:
            break;  // handled above
        case RegressorSpec::Kind::arm_mean: {
            const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) /
                                static_cast<double>(targets.size());
            return std::make_unique<ConstantRegressor>(mean);
        }
        case RegressorSpec::Kind::linear_least_squares: {
            const Eigen::Index rows = static_cast<Eigen::Index>(features.size());
            const Eigen::Index cols = static_cast<Eigen::Index>(width) + 1;  // intercept
            Eigen::MatrixXd design(rows, cols);
            Eigen::VectorXd response(rows);
            for (Eigen::Index i = 0; i < rows; ++i) {
                design(i, 0) = 1.0;
                for (Eigen::Index j = 1; j < cols; ++j) {
                    design(i, j) = features[static_cast<std::size_t>(i)]
                                           [static_cast<std::size_t>(j - 1)];
                }
                response(i) = targets[static_cast<std::size_t>(i)];
            }
            // Complete orthogonal decomposition gives the minimum-norm
            // solution for rank-deficient designs.
            Eigen::VectorXd solution =
                design.completeOrthogonalDecomposition().solve(response);
            if (!solution.allFinite()) {
                throw std::runtime_error("fit_regressor: least-squares solution is not finite");
            }
            return std::make_unique<LinearRegressor>(solution.tail(cols - 1), solution(0));
        }
        case RegressorSpec::Kind::k_nearest_neighbors: {
            if (width == 0) {
                throw std::invalid_argument("fit_regressor: kNN needs at least one feature");
            }
            return std::make_unique<KnnRegressor>(features, targets, spec.knn_k());
        }
    }
    throw std::invalid_argument("fit_regressor: unknown regressor kind");
}

}  // namespace clab
