#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "xapp/dataset.hpp"
#include "xapp/model.hpp"

namespace xapp::explain {

// Reference rows (already normalized) used to marginalize absent features.
struct Background {
    Eigen::MatrixXd rows;  // n x k

    std::size_t size() const { return static_cast<std::size_t>(rows.rows()); }
};

// Seeded sample of normalized dataset rows.
Background sample_background(const Dataset& ds, const model::Normalizer& n,
                             std::size_t n_rows, std::uint64_t seed);

enum class Estimator { Exact, Permutation };

// Attribution of the predicted-class logit across input features.
// Efficiency: sum(phi) + baseline == prediction (exactly in exact mode,
// and per-walk telescoping makes it exact in permutation mode too).
struct ShapleyReport {
    Eigen::VectorXd phi;
    Eigen::VectorXd standard_error;  // zeros in exact mode
    double baseline = 0.0;
    double prediction = 0.0;
    int explained_class = 0;  // 0-based logit index
    Estimator estimator = Estimator::Exact;
    std::uint32_t n_permutations = 0;
    std::uint64_t seed = 0;
};

// Coalition enumeration is 2^k; keep exact mode to small feature counts.
inline constexpr std::size_t kExactFeatureLimit = 12;

// Exact interventional Shapley values by full coalition enumeration.
// Throws TooManyFeatures beyond kExactFeatureLimit.
ShapleyReport shapley_exact(const model::MLPModel& m, const Eigen::VectorXd& x,
                            const Background& background);

// Permutation-sampling estimator with antithetic pairing: every sampled
// permutation is also walked in reverse, and each pair average is one
// independent draw for the standard error.
ShapleyReport shapley_permutation(const model::MLPModel& m, const Eigen::VectorXd& x,
                                  const Background& background,
                                  std::uint32_t n_permutations, std::uint64_t seed);

struct RankingConfig {
    std::uint32_t n_permutations = 200;
    std::size_t max_samples = 128;  // seeded subsample of the dataset
    std::uint64_t seed = 17;
    unsigned threads = 1;
};

struct FeatureImportance {
    std::string name;
    std::size_t feature_index = 0;
    double mean_abs_phi = 0.0;
};

struct RankingResult {
    std::vector<FeatureImportance> ranking;  // descending mean |phi|
    std::size_t n_samples = 0;
    std::uint32_t n_permutations = 0;
};

// Dataset-level mean |phi| per feature, descending.
RankingResult importance_ranking(const model::MLPModel& m, const model::Normalizer& n,
                                 const Dataset& ds, const Background& background,
                                 const RankingConfig& cfg);

std::string to_json(const ShapleyReport& r);
std::string to_csv(const RankingResult& r);  // feature_name, mean_abs_phi, rank

}  // namespace xapp::explain
