#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "xapp/dataset.hpp"

namespace xapp::model {

// Dense MLP: ReLU on hidden layers, raw logits on the output layer.
// weights[l] is (out x in); the dimension chain must be consistent.
struct MLPModel {
    std::vector<int> layer_dims;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    std::size_t num_layers() const { return weights.size(); }

    void check_consistent() const;  // throws DimensionMismatch
};

// The application classifier architecture.
inline const std::vector<int> kClassifierDims = {25, 64, 64, 64, 2};

// He-style initialization, scaled by sqrt(2 / fan_in); biases zero.
MLPModel make_mlp(const std::vector<int>& dims, std::uint64_t seed);

Eigen::VectorXd forward(const MLPModel& m, const Eigen::VectorXd& x);
// Rows are samples.
Eigen::MatrixXd forward_batch(const MLPModel& m, const Eigen::MatrixXd& X);

// Softmax class probabilities, rows summing to one.
Eigen::MatrixXd predict_proba(const MLPModel& m, const Eigen::MatrixXd& X);

struct TrainConfig {
    std::uint32_t epochs = 100;
    std::uint32_t batch_size = 64;
    double learning_rate = 0.05;
    std::uint64_t seed = 7;
    double train_fraction = 0.7;

    void validate() const;
};

TrainConfig train_config_from_json(const std::string& text);
std::string to_json(const TrainConfig& cfg);

// Min-max scaler fitted on the training split; constant columns map to 0
// and application clamps into [0, 1].
struct Normalizer {
    Eigen::VectorXd min;
    Eigen::VectorXd max;
};

Normalizer fit_normalizer(const Dataset& train);
Eigen::VectorXd apply_normalizer(const Normalizer& n, const Eigen::VectorXd& x);
Eigen::MatrixXd apply_normalizer(const Normalizer& n, const Eigen::MatrixXd& X);

// Dataset rows as a (n x 25) matrix plus 0-based class indices.
Eigen::MatrixXd to_matrix(const Dataset& ds);
std::vector<int> to_class_indices(const Dataset& ds);

struct EpochMetrics {
    std::uint32_t epoch = 0;
    double loss = 0.0;
    double val_accuracy = 0.0;
};
using MetricsHistory = std::vector<EpochMetrics>;

std::string metrics_to_jsonl(const MetricsHistory& history);

struct Split {
    Dataset train, val, test;
};

// Seeded shuffle split: train_fraction for training, the remainder halved
// between validation and test.
Split three_way_split(const Dataset& ds, std::uint64_t seed, double train_fraction);

struct TrainResult {
    MLPModel model;
    Normalizer normalizer;
    MetricsHistory history;
    Split split;
};

// Mini-batch gradient descent on softmax cross-entropy. Deterministic for
// a given (dataset, cfg): fixed init and shuffle streams.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

// Mean cross-entropy of the batch (rows of X, 0-based labels).
double batch_loss(const MLPModel& m, const Eigen::MatrixXd& X, const std::vector<int>& y);

// Loss plus analytic parameter gradients via backpropagation.
double loss_and_gradients(const MLPModel& m, const Eigen::MatrixXd& X,
                          const std::vector<int>& y,
                          std::vector<Eigen::MatrixXd>& grad_w,
                          std::vector<Eigen::VectorXd>& grad_b);

// Fraction of argmax-correct predictions.
double evaluate(const MLPModel& m, const Normalizer& n, const Dataset& ds);
// Predicted class labels (1 or 2) per row.
std::vector<int> predict(const MLPModel& m, const Normalizer& n, const Dataset& ds);

struct ModelMetadata {
    std::uint64_t seed = 0;
    TrainConfig train_config;
    std::string dataset_hash;
};

// Model document JSON; load(save(m)) reproduces forward outputs bit-exactly.
std::string save_model(const MLPModel& m, const Normalizer& n, const ModelMetadata& meta);

struct LoadedModel {
    MLPModel model;
    Normalizer normalizer;
    ModelMetadata metadata;
};

// generic=false enforces the fixed classifier architecture.
LoadedModel load_model(const std::string& document, bool generic = false);

}  // namespace xapp::model
