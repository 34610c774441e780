#include "xapp/verify.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "xapp/errors.hpp"
#include "xapp/rng.hpp"
#include "xapp/util.hpp"

namespace xapp::verify {

using nlohmann::json;

const char* to_string(Method method) {
    return method == Method::Crown ? "crown" : "ibp";
}

namespace {

void check_input(const model::MLPModel& m, const Eigen::VectorXd& x,
                 const PerturbationSpec& spec) {
    m.check_consistent();
    if (x.size() != m.input_dim()) {
        throw DimensionMismatch("bounds: expected input of length " +
                                std::to_string(m.input_dim()));
    }
    if (!(spec.epsilon >= 0.0)) {
        throw InvalidConfig("bounds: epsilon must be >= 0");
    }
}

// ReLU relaxation lines per neuron given pre-activation bounds.
struct ReluRelaxation {
    Eigen::VectorXd upper_slope;
    Eigen::VectorXd upper_intercept;
    Eigen::VectorXd lower_slope;  // intercept of the lower line is zero
};

ReluRelaxation relax_relu(const Eigen::VectorXd& l, const Eigen::VectorXd& u) {
    const Eigen::Index n = l.size();
    ReluRelaxation r;
    r.upper_slope = Eigen::VectorXd::Zero(n);
    r.upper_intercept = Eigen::VectorXd::Zero(n);
    r.lower_slope = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (l(i) >= 0.0) {  // stable active
            r.upper_slope(i) = 1.0;
            r.lower_slope(i) = 1.0;
        } else if (u(i) <= 0.0) {  // stable inactive: all slopes stay zero
        } else {                   // unstable
            const double s = u(i) / (u(i) - l(i));
            r.upper_slope(i) = s;
            r.upper_intercept(i) = -u(i) * l(i) / (u(i) - l(i));
            r.lower_slope(i) = u(i) >= -l(i) ? 1.0 : 0.0;
        }
    }
    return r;
}

// Backward propagation of linear coefficients from the pre-activation of
// affine layer `target` (0-based) down to the input, then concretization
// over the epsilon ball. Uses the relaxations of all earlier layers.
void backward_bound(const model::MLPModel& m, const Eigen::VectorXd& x, double eps,
                    std::size_t target, const std::vector<ReluRelaxation>& relax,
                    Eigen::VectorXd& lower, Eigen::VectorXd& upper,
                    LinearBounds* linear_out) {
    const Eigen::Index n_out = m.weights[target].rows();
    Eigen::MatrixXd a_up = Eigen::MatrixXd::Identity(n_out, n_out);
    Eigen::MatrixXd a_low = a_up;
    Eigen::VectorXd c_up = Eigen::VectorXd::Zero(n_out);
    Eigen::VectorXd c_low = Eigen::VectorXd::Zero(n_out);

    for (std::size_t j = target + 1; j-- > 0;) {
        c_up += a_up * m.biases[j];
        c_low += a_low * m.biases[j];
        a_up = (a_up * m.weights[j]).eval();
        a_low = (a_low * m.weights[j]).eval();
        if (j == 0) {
            break;
        }
        const ReluRelaxation& r = relax[j - 1];
        // Positive coefficients take the bound being sought; negative ones
        // take the opposite relaxation.
        Eigen::MatrixXd up_pos = a_up.cwiseMax(0.0);
        Eigen::MatrixXd up_neg = a_up.cwiseMin(0.0);
        c_up += up_pos * r.upper_intercept;
        a_up = up_pos * r.upper_slope.asDiagonal() + up_neg * r.lower_slope.asDiagonal();

        Eigen::MatrixXd low_pos = a_low.cwiseMax(0.0);
        Eigen::MatrixXd low_neg = a_low.cwiseMin(0.0);
        c_low += low_neg * r.upper_intercept;
        a_low = low_pos * r.lower_slope.asDiagonal() + low_neg * r.upper_slope.asDiagonal();
    }

    lower = a_low * x + c_low - eps * a_low.cwiseAbs().rowwise().sum();
    upper = a_up * x + c_up + eps * a_up.cwiseAbs().rowwise().sum();
    if (linear_out) {
        linear_out->lower_coeff = std::move(a_low);
        linear_out->upper_coeff = std::move(a_up);
        linear_out->lower_const = std::move(c_low);
        linear_out->upper_const = std::move(c_up);
    }
}

}  // namespace

IbpResult ibp_bounds(const model::MLPModel& m, const Eigen::VectorXd& x,
                     const PerturbationSpec& spec) {
    check_input(m, x, spec);
    IbpResult out;
    Eigen::VectorXd lo = x.array() - spec.epsilon;
    Eigen::VectorXd hi = x.array() + spec.epsilon;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        const Eigen::VectorXd center = 0.5 * (lo + hi);
        const Eigen::VectorXd radius = 0.5 * (hi - lo);
        const Eigen::VectorXd z_center = m.weights[l] * center + m.biases[l];
        const Eigen::VectorXd z_radius = m.weights[l].cwiseAbs() * radius;
        lo = z_center - z_radius;
        hi = z_center + z_radius;
        out.pre_activation.lower.push_back(lo);
        out.pre_activation.upper.push_back(hi);
        if (l + 1 < m.num_layers()) {
            lo = lo.cwiseMax(0.0);
            hi = hi.cwiseMax(0.0);
        }
    }
    out.band.lower = lo;
    out.band.upper = hi;
    return out;
}

CrownResult crown_bounds(const model::MLPModel& m, const Eigen::VectorXd& x,
                         const PerturbationSpec& spec) {
    check_input(m, x, spec);
    const double eps = spec.epsilon;
    CrownResult out;
    std::vector<ReluRelaxation> relax;
    for (std::size_t k = 0; k < m.num_layers(); ++k) {
        Eigen::VectorXd lo, hi;
        backward_bound(m, x, eps, k, relax, lo, hi,
                       k + 1 == m.num_layers() ? &out.linear : nullptr);
        out.pre_activation.lower.push_back(lo);
        out.pre_activation.upper.push_back(hi);
        if (k + 1 < m.num_layers()) {
            relax.push_back(relax_relu(lo, hi));
        } else {
            out.band.lower = lo;
            out.band.upper = hi;
        }
    }
    // Keep the tightest sound bound per logit; the interval baseline can
    // only improve the band, never the linear functions.
    const IbpResult ibp = ibp_bounds(m, x, spec);
    out.band.lower = out.band.lower.cwiseMax(ibp.band.lower);
    out.band.upper = out.band.upper.cwiseMin(ibp.band.upper);
    return out;
}

std::pair<double, double> wilson_interval(std::size_t successes, std::size_t total) {
    if (total == 0) {
        throw InvalidConfig("wilson_interval: total must be positive");
    }
    const double z = 1.959963984540054;  // Phi^-1(0.975)
    const double n = static_cast<double>(total);
    const double p = static_cast<double>(successes) / n;
    const double z2n = z * z / n;
    const double denom = 1.0 + z2n;
    const double center = (p + z2n / 2.0) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / denom;
    return {center - half, center + half};
}

SeparationResult separation_metric(const model::MLPModel& m, const model::Normalizer& n,
                                   const Dataset& test, const PerturbationSpec& spec,
                                   Method method, unsigned threads) {
    if (test.empty()) {
        throw EmptyDataset("separation_metric: empty test dataset");
    }
    if (m.output_dim() != 2) {
        throw DimensionMismatch("separation_metric: needs a 2-logit classifier");
    }
    SeparationResult result;
    result.epsilon = spec.epsilon;
    result.method = method;
    result.n_test = test.size();
    result.per_sample.resize(test.size());

    parallel_for(test.size(), threads, [&](std::size_t i) {
        const FeatureVector& row = test.rows[i];
        Eigen::VectorXd raw(kNumFeatures);
        for (std::size_t c = 0; c < kNumFeatures; ++c) {
            raw(static_cast<Eigen::Index>(c)) = row.features[c];
        }
        const Eigen::VectorXd x = model::apply_normalizer(n, raw);
        SampleBounds sb;
        sb.sample_id = row.sample_id;
        sb.label = row.label;
        sb.logits = model::forward(m, x);
        if (method == Method::Crown) {
            const CrownResult cr = crown_bounds(m, x, spec);
            sb.lower = cr.band.lower;
            sb.upper = cr.band.upper;
        } else {
            const IbpResult ir = ibp_bounds(m, x, spec);
            sb.lower = ir.band.lower;
            sb.upper = ir.band.upper;
        }
        Eigen::Index pred = 0;
        sb.logits.maxCoeff(&pred);
        sb.correct = static_cast<int>(pred) + 1 == row.label;
        const Eigen::Index other = 1 - pred;
        sb.separated = sb.correct && sb.lower(pred) > sb.upper(other);
        result.per_sample[i] = std::move(sb);
    });

    for (const SampleBounds& sb : result.per_sample) {
        result.n_correct += sb.correct;
        result.n_separated += sb.separated;
    }
    if (result.n_correct == 0) {
        throw NoCorrectPredictions("separation_metric: no correctly predicted samples");
    }
    result.fraction =
        static_cast<double>(result.n_separated) / static_cast<double>(result.n_correct);
    auto [lo, hi] = wilson_interval(result.n_separated, result.n_correct);
    result.ci_low = lo;
    result.ci_high = hi;
    return result;
}

std::size_t soundness_audit(const model::MLPModel& m, const Eigen::VectorXd& x,
                            const PerturbationSpec& spec, const BoundBand& band,
                            std::size_t n_samples, std::uint64_t seed) {
    check_input(m, x, spec);
    if (n_samples < 1) {
        throw InvalidConfig("soundness_audit: n_samples must be >= 1");
    }
    constexpr double kSlack = 1e-9;
    constexpr std::size_t kChunk = 4096;
    std::size_t violations = 0;
    std::size_t done = 0;
    std::size_t chunk_index = 0;
    while (done < n_samples) {
        const std::size_t len = std::min(kChunk, n_samples - done);
        rng::Generator g(rng::derive_seed(seed, chunk_index++));
        Eigen::MatrixXd points(static_cast<Eigen::Index>(len), x.size());
        for (Eigen::Index r = 0; r < points.rows(); ++r) {
            for (Eigen::Index c = 0; c < points.cols(); ++c) {
                points(r, c) = x(c) + g.uniform(-spec.epsilon, spec.epsilon);
            }
        }
        const Eigen::MatrixXd z = model::forward_batch(m, points);
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            for (Eigen::Index c = 0; c < z.cols(); ++c) {
                const double slack = kSlack * std::max(1.0, std::abs(z(r, c)));
                if (z(r, c) < band.lower(c) - slack || z(r, c) > band.upper(c) + slack) {
                    ++violations;
                }
            }
        }
        done += len;
    }
    return violations;
}

std::string to_json(const SeparationResult& r) {
    json per_sample = json::array();
    for (const SampleBounds& sb : r.per_sample) {
        json logits = json::array(), lower = json::array(), upper = json::array();
        for (Eigen::Index i = 0; i < sb.logits.size(); ++i) {
            logits.push_back(sb.logits(i));
            lower.push_back(sb.lower(i));
            upper.push_back(sb.upper(i));
        }
        per_sample.push_back(json{{"sample_id", sb.sample_id},
                                  {"label", sb.label},
                                  {"logits", std::move(logits)},
                                  {"lower", std::move(lower)},
                                  {"upper", std::move(upper)},
                                  {"correct", sb.correct},
                                  {"separated", sb.separated}});
    }
    json doc{{"epsilon", r.epsilon},
             {"n_test", r.n_test},
             {"n_correct", r.n_correct},
             {"n_separated", r.n_separated},
             {"fraction", r.fraction},
             {"ci_low", r.ci_low},
             {"ci_high", r.ci_high},
             {"method", to_string(r.method)},
             {"per_sample", std::move(per_sample)}};
    return doc.dump();
}

std::string to_plot_csv(const SeparationResult& r) {
    std::string out =
        "index,class0_lower,class0_upper,class1_lower,class1_upper,"
        "class0_logit,class1_logit,label\n";
    for (std::size_t i = 0; i < r.per_sample.size(); ++i) {
        const SampleBounds& sb = r.per_sample[i];
        out += std::to_string(i);
        for (double v : {sb.lower(0), sb.upper(0), sb.lower(1), sb.upper(1),
                         sb.logits(0), sb.logits(1)}) {
            out += ',';
            out += format_g9(v);
        }
        out += ',';
        out += std::to_string(sb.label);
        out += '\n';
    }
    return out;
}

}  // namespace xapp::verify
