#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "xapp/dataset.hpp"
#include "xapp/model.hpp"

namespace xapp::verify {

// L-infinity perturbation radius in the normalized feature space.
struct PerturbationSpec {
    double epsilon = 0.05;
};

// Certified [lower, upper] interval per output logit. lower <= upper
// always; at epsilon = 0 both equal the exact logit.
struct BoundBand {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

// Pre-activation intervals for each affine layer, in forward order.
struct LayerIntervals {
    std::vector<Eigen::VectorXd> lower;
    std::vector<Eigen::VectorXd> upper;
};

// Per logit i, linear functions of the input valid on the whole ball:
//   lower_coeff.row(i) . x + lower_const(i)  <=  f_i(x)
//   f_i(x)  <=  upper_coeff.row(i) . x + upper_const(i)
struct LinearBounds {
    Eigen::MatrixXd lower_coeff;
    Eigen::MatrixXd upper_coeff;
    Eigen::VectorXd lower_const;
    Eigen::VectorXd upper_const;
};

struct IbpResult {
    BoundBand band;
    LayerIntervals pre_activation;
};

struct CrownResult {
    BoundBand band;
    LinearBounds linear;
    LayerIntervals pre_activation;
};

// Interval arithmetic through every layer: affine layers via the
// W+ * l + W- * u decomposition, ReLU as interval clamp. Sound for any
// perturbation within the ball.
IbpResult ibp_bounds(const model::MLPModel& m, const Eigen::VectorXd& x,
                     const PerturbationSpec& spec);

// Backward linear relaxation bounds. Each unstable ReLU (l < 0 < u) gets
// the chord upper line z * u/(u-l) - u*l/(u-l) and the adaptive lower line
// alpha * z with alpha = 1 if u >= |l| else 0; stable units pass through
// as identity or zero. Pre-activation intervals for intermediate layers
// are themselves computed by backward bounding. The published band is
// intersected with the interval baseline, so it is never looser than IBP.
CrownResult crown_bounds(const model::MLPModel& m, const Eigen::VectorXd& x,
                         const PerturbationSpec& spec);

enum class Method { Ibp, Crown };
const char* to_string(Method method);

struct SampleBounds {
    std::int64_t sample_id = 0;
    int label = 0;
    Eigen::VectorXd logits;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    bool correct = false;
    bool separated = false;
};

struct SeparationResult {
    double epsilon = 0.0;
    std::size_t n_test = 0;
    std::size_t n_correct = 0;
    std::size_t n_separated = 0;
    double fraction = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    Method method = Method::Crown;
    std::vector<SampleBounds> per_sample;
};

// Fraction of correctly predicted test samples whose predicted-class lower
// bound clears the other class's upper bound, with a Wilson 95% CI.
SeparationResult separation_metric(const model::MLPModel& m, const model::Normalizer& n,
                                   const Dataset& test, const PerturbationSpec& spec,
                                   Method method = Method::Crown, unsigned threads = 1);

// Wilson 95% score interval for successes/total.
std::pair<double, double> wilson_interval(std::size_t successes, std::size_t total);

// Samples uniform points in the ball, runs the exact forward pass and
// counts outputs escaping the band (beyond a 1e-9 float slack). Zero for
// any sound band.
std::size_t soundness_audit(const model::MLPModel& m, const Eigen::VectorXd& x,
                            const PerturbationSpec& spec, const BoundBand& band,
                            std::size_t n_samples, std::uint64_t seed);

std::string to_json(const SeparationResult& r);

// Per-sample plot data: index, class-0 lower/upper, class-1 lower/upper,
// exact logits, true label.
std::string to_plot_csv(const SeparationResult& r);

}  // namespace xapp::verify
