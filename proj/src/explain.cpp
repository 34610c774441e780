#include "xapp/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "xapp/errors.hpp"
#include "xapp/rng.hpp"
#include "xapp/util.hpp"

namespace xapp::explain {

using nlohmann::json;

Background sample_background(const Dataset& ds, const model::Normalizer& n,
                             std::size_t n_rows, std::uint64_t seed) {
    if (ds.empty()) {
        throw EmptyDataset("sample_background: empty dataset");
    }
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng::Generator g(rng::derive_seed(seed, 0xBAC));
    g.shuffle(idx);
    const std::size_t take = std::min(n_rows, ds.size());
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(take), kNumFeatures);
    for (std::size_t r = 0; r < take; ++r) {
        for (std::size_t c = 0; c < kNumFeatures; ++c) {
            raw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                ds.rows[idx[r]].features[c];
        }
    }
    return Background{model::apply_normalizer(n, raw)};
}

namespace {

int explained_index(const model::MLPModel& m, const Eigen::VectorXd& x) {
    const Eigen::VectorXd z = model::forward(m, x);
    Eigen::Index best = 0;
    z.maxCoeff(&best);
    return static_cast<int>(best);
}

// Mean explained-class output over the background matrix with the feature
// set encoded by `hybrid` already substituted.
double coalition_value(const model::MLPModel& m, const Eigen::MatrixXd& hybrid, int cls) {
    return model::forward_batch(m, hybrid).col(cls).mean();
}

void check_dims(const model::MLPModel& m, const Eigen::VectorXd& x,
                const Background& background) {
    if (x.size() != m.input_dim()) {
        throw DimensionMismatch("shapley: input length mismatch");
    }
    if (background.size() == 0 || background.rows.cols() != m.input_dim()) {
        throw DimensionMismatch("shapley: background shape mismatch");
    }
}

}  // namespace

ShapleyReport shapley_exact(const model::MLPModel& m, const Eigen::VectorXd& x,
                            const Background& background) {
    check_dims(m, x, background);
    const std::size_t k = static_cast<std::size_t>(x.size());
    if (k > kExactFeatureLimit) {
        throw TooManyFeatures("shapley_exact: " + std::to_string(k) + " features exceeds " +
                              std::to_string(kExactFeatureLimit));
    }
    const int cls = explained_index(m, x);
    const std::size_t n_masks = std::size_t{1} << k;

    // v(S) for every coalition mask.
    std::vector<double> value(n_masks);
    Eigen::MatrixXd hybrid;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
        hybrid = background.rows;
        for (std::size_t i = 0; i < k; ++i) {
            if (mask & (std::size_t{1} << i)) {
                hybrid.col(static_cast<Eigen::Index>(i)).setConstant(x(static_cast<Eigen::Index>(i)));
            }
        }
        value[mask] = coalition_value(m, hybrid, cls);
    }

    // w(s) = s! (k-1-s)! / k!
    std::vector<double> weight(k);
    {
        std::vector<double> fact(k + 1, 1.0);
        for (std::size_t i = 1; i <= k; ++i) {
            fact[i] = fact[i - 1] * static_cast<double>(i);
        }
        for (std::size_t s = 0; s < k; ++s) {
            weight[s] = fact[s] * fact[k - 1 - s] / fact[k];
        }
    }

    ShapleyReport report;
    report.phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    report.standard_error = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        double phi = 0.0;
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) {
                continue;
            }
            const std::size_t s = static_cast<std::size_t>(std::popcount(mask));
            phi += weight[s] * (value[mask | bit] - value[mask]);
        }
        report.phi(static_cast<Eigen::Index>(i)) = phi;
    }
    report.baseline = value[0];
    report.prediction = value[n_masks - 1];
    report.explained_class = cls;
    report.estimator = Estimator::Exact;
    return report;
}

ShapleyReport shapley_permutation(const model::MLPModel& m, const Eigen::VectorXd& x,
                                  const Background& background,
                                  std::uint32_t n_permutations, std::uint64_t seed) {
    check_dims(m, x, background);
    if (n_permutations < 1) {
        throw InvalidConfig("shapley_permutation: n_permutations must be >= 1");
    }
    const std::size_t k = static_cast<std::size_t>(x.size());
    const int cls = explained_index(m, x);
    const double baseline = coalition_value(m, background.rows, cls);

    rng::Generator g(rng::derive_seed(seed, 0x5A9));
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);

    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    Eigen::VectorXd pair_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    Eigen::VectorXd phi_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));

    Eigen::MatrixXd hybrid(background.rows.rows(), background.rows.cols());
    auto walk = [&](const std::vector<std::size_t>& order, Eigen::VectorXd& marginals) {
        hybrid = background.rows;
        double prev = baseline;
        for (std::size_t step = 0; step < k; ++step) {
            const std::size_t f = order[step];
            hybrid.col(static_cast<Eigen::Index>(f)).setConstant(x(static_cast<Eigen::Index>(f)));
            const double cur = coalition_value(m, hybrid, cls);
            marginals(static_cast<Eigen::Index>(f)) = cur - prev;
            prev = cur;
        }
    };

    Eigen::VectorXd fwd(static_cast<Eigen::Index>(k)), rev(static_cast<Eigen::Index>(k));
    std::vector<std::size_t> reversed(k);
    for (std::uint32_t t = 0; t < n_permutations; ++t) {
        g.shuffle(perm);
        walk(perm, fwd);
        for (std::size_t i = 0; i < k; ++i) {
            reversed[i] = perm[k - 1 - i];
        }
        walk(reversed, rev);
        pair_mean = 0.5 * (fwd + rev);
        phi_sum += pair_mean;
        sum_sq += pair_mean.cwiseProduct(pair_mean);
    }

    ShapleyReport report;
    const double n = static_cast<double>(n_permutations);
    report.phi = phi_sum / n;
    report.standard_error = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    if (n_permutations > 1) {
        for (Eigen::Index i = 0; i < report.phi.size(); ++i) {
            const double var =
                (sum_sq(i) - n * report.phi(i) * report.phi(i)) / (n - 1.0);
            report.standard_error(i) = std::sqrt(std::max(0.0, var) / n);
        }
    }
    report.baseline = baseline;
    report.prediction = model::forward(m, x)(cls);
    report.explained_class = cls;
    report.estimator = Estimator::Permutation;
    report.n_permutations = n_permutations;
    report.seed = seed;
    return report;
}

RankingResult importance_ranking(const model::MLPModel& m, const model::Normalizer& n,
                                 const Dataset& ds, const Background& background,
                                 const RankingConfig& cfg) {
    if (ds.empty()) {
        throw EmptyDataset("importance_ranking: empty dataset");
    }
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (ds.size() > cfg.max_samples) {
        rng::Generator g(rng::derive_seed(cfg.seed, 0x5E1));
        g.shuffle(idx);
        idx.resize(cfg.max_samples);
    }

    std::vector<Eigen::VectorXd> phis(idx.size());
    parallel_for(idx.size(), cfg.threads, [&](std::size_t i) {
        const FeatureVector& row = ds.rows[idx[i]];
        Eigen::VectorXd raw(kNumFeatures);
        for (std::size_t c = 0; c < kNumFeatures; ++c) {
            raw(static_cast<Eigen::Index>(c)) = row.features[c];
        }
        const Eigen::VectorXd x = model::apply_normalizer(n, raw);
        const std::uint64_t sample_seed =
            rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(row.sample_id));
        phis[i] = shapley_permutation(m, x, background, cfg.n_permutations, sample_seed).phi;
    });

    Eigen::VectorXd mean_abs = Eigen::VectorXd::Zero(kNumFeatures);
    for (const Eigen::VectorXd& phi : phis) {
        mean_abs += phi.cwiseAbs();
    }
    mean_abs /= static_cast<double>(phis.size());

    RankingResult result;
    result.n_samples = idx.size();
    result.n_permutations = cfg.n_permutations;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        result.ranking.push_back(FeatureImportance{
            kFeatureNames[f], f, mean_abs(static_cast<Eigen::Index>(f))});
    }
    std::stable_sort(result.ranking.begin(), result.ranking.end(),
                     [](const FeatureImportance& a, const FeatureImportance& b) {
                         return a.mean_abs_phi > b.mean_abs_phi;
                     });
    return result;
}

std::string to_json(const ShapleyReport& r) {
    json phi = json::array(), se = json::array();
    for (Eigen::Index i = 0; i < r.phi.size(); ++i) {
        phi.push_back(r.phi(i));
        se.push_back(r.standard_error(i));
    }
    json doc{{"phi", std::move(phi)},
             {"standard_error", std::move(se)},
             {"baseline", r.baseline},
             {"prediction", r.prediction},
             {"explained_class", r.explained_class},
             {"estimator", r.estimator == Estimator::Exact ? "exact" : "permutation"},
             {"n_permutations", r.n_permutations},
             {"seed", r.seed}};
    return doc.dump();
}

std::string to_csv(const RankingResult& r) {
    std::string out = "feature_name,mean_abs_phi,rank\n";
    for (std::size_t i = 0; i < r.ranking.size(); ++i) {
        out += r.ranking[i].name;
        out += ',';
        out += format_g9(r.ranking[i].mean_abs_phi);
        out += ',';
        out += std::to_string(i + 1);
        out += '\n';
    }
    return out;
}

}  // namespace xapp::explain
