#include "xapp/model.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "xapp/errors.hpp"
#include "xapp/rng.hpp"
#include "xapp/util.hpp"

namespace xapp::model {

using nlohmann::json;

void MLPModel::check_consistent() const {
    if (layer_dims.size() < 2 || weights.size() != layer_dims.size() - 1 ||
        biases.size() != weights.size()) {
        throw DimensionMismatch("model: layer count mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l] ||
            biases[l].size() != layer_dims[l + 1]) {
            throw DimensionMismatch("model: shape mismatch at layer " + std::to_string(l));
        }
        if (!weights[l].allFinite() || !biases[l].allFinite()) {
            throw DimensionMismatch("model: non-finite parameters at layer " +
                                    std::to_string(l));
        }
    }
}

MLPModel make_mlp(const std::vector<int>& dims, std::uint64_t seed) {
    if (dims.size() < 2) {
        throw DimensionMismatch("model: need at least input and output dims");
    }
    MLPModel m;
    m.layer_dims = dims;
    rng::Generator g(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Eigen::MatrixXd w(dims[l + 1], dims[l]);
        const double scale = std::sqrt(2.0 / static_cast<double>(dims[l]));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                w(r, c) = scale * g.normal();
            }
        }
        m.weights.push_back(std::move(w));
        m.biases.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
    }
    return m;
}

Eigen::VectorXd forward(const MLPModel& m, const Eigen::VectorXd& x) {
    if (x.size() != m.input_dim()) {
        throw DimensionMismatch("forward: expected input of length " +
                                std::to_string(m.input_dim()) + ", got " +
                                std::to_string(x.size()));
    }
    Eigen::VectorXd a = x;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        a = (m.weights[l] * a + m.biases[l]).eval();
        if (l + 1 < m.num_layers()) {
            a = a.cwiseMax(0.0);
        }
    }
    return a;
}

Eigen::MatrixXd forward_batch(const MLPModel& m, const Eigen::MatrixXd& X) {
    if (X.cols() != m.input_dim()) {
        throw DimensionMismatch("forward_batch: expected " +
                                std::to_string(m.input_dim()) + " columns, got " +
                                std::to_string(X.cols()));
    }
    Eigen::MatrixXd a = X;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        a = ((a * m.weights[l].transpose()).rowwise() + m.biases[l].transpose()).eval();
        if (l + 1 < m.num_layers()) {
            a = a.cwiseMax(0.0);
        }
    }
    return a;
}

Eigen::MatrixXd predict_proba(const MLPModel& m, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd z = forward_batch(m, X);
    Eigen::VectorXd row_max = z.rowwise().maxCoeff();
    Eigen::MatrixXd e = (z.colwise() - row_max).array().exp();
    Eigen::VectorXd sums = e.rowwise().sum();
    return e.array().colwise() / sums.array();
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidConfig("train: epochs must be >= 1");
    if (batch_size < 1) throw InvalidConfig("train: batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw InvalidConfig("train: learning_rate must be >= 0");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw InvalidConfig("train: train_fraction must be in (0,1)");
    }
}

TrainConfig train_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("train config: ") + e.what());
    }
    TrainConfig c;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.seed = j.value("seed", c.seed);
        c.train_fraction = j.value("train_fraction", c.train_fraction);
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string to_json(const TrainConfig& c) {
    json j{{"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"seed", c.seed},
           {"train_fraction", c.train_fraction}};
    return j.dump();
}

Normalizer fit_normalizer(const Dataset& train) {
    if (train.empty()) {
        throw EmptyDataset("fit_normalizer: empty dataset");
    }
    Normalizer n;
    n.min = Eigen::VectorXd::Constant(kNumFeatures, std::numeric_limits<double>::infinity());
    n.max = Eigen::VectorXd::Constant(kNumFeatures, -std::numeric_limits<double>::infinity());
    for (const FeatureVector& row : train.rows) {
        for (std::size_t i = 0; i < kNumFeatures; ++i) {
            n.min(static_cast<Eigen::Index>(i)) =
                std::min(n.min(static_cast<Eigen::Index>(i)), row.features[i]);
            n.max(static_cast<Eigen::Index>(i)) =
                std::max(n.max(static_cast<Eigen::Index>(i)), row.features[i]);
        }
    }
    return n;
}

Eigen::VectorXd apply_normalizer(const Normalizer& n, const Eigen::VectorXd& x) {
    if (x.size() != n.min.size()) {
        throw DimensionMismatch("apply_normalizer: feature count mismatch");
    }
    Eigen::VectorXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double range = n.max(i) - n.min(i);
        double v = range > 0.0 ? (x(i) - n.min(i)) / range : 0.0;
        out(i) = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

Eigen::MatrixXd apply_normalizer(const Normalizer& n, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd out(X.rows(), X.cols());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        out.row(r) = apply_normalizer(n, Eigen::VectorXd(X.row(r))).transpose();
    }
    return out;
}

Eigen::MatrixXd to_matrix(const Dataset& ds) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(ds.size()), kNumFeatures);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < kNumFeatures; ++c) {
            X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                ds.rows[r].features[c];
        }
    }
    return X;
}

std::vector<int> to_class_indices(const Dataset& ds) {
    std::vector<int> y(ds.size());
    for (std::size_t r = 0; r < ds.size(); ++r) {
        y[r] = ds.rows[r].label - 1;
    }
    return y;
}

std::string metrics_to_jsonl(const MetricsHistory& history) {
    std::string out;
    for (const EpochMetrics& e : history) {
        json j{{"epoch", e.epoch}, {"loss", e.loss}, {"val_accuracy", e.val_accuracy}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

Split three_way_split(const Dataset& ds, std::uint64_t seed, double train_fraction) {
    if (ds.empty()) {
        throw EmptyDataset("split: empty dataset");
    }
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng::Generator g(rng::derive_seed(seed, 0x5717));
    g.shuffle(idx);
    const std::size_t n = ds.size();
    const std::size_t n_train =
        std::min<std::size_t>(n - 1, static_cast<std::size_t>(
                                         std::llround(train_fraction * static_cast<double>(n))));
    const std::size_t n_rest = n - n_train;
    const std::size_t n_val = n_rest / 2;
    Split s;
    for (std::size_t k = 0; k < n; ++k) {
        const FeatureVector& row = ds.rows[idx[k]];
        if (k < n_train) {
            s.train.rows.push_back(row);
        } else if (k < n_train + n_val) {
            s.val.rows.push_back(row);
        } else {
            s.test.rows.push_back(row);
        }
    }
    return s;
}

namespace {

struct ForwardCache {
    std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
    std::vector<Eigen::MatrixXd> post;  // post-activations (post[0] = input)
};

ForwardCache forward_cached(const MLPModel& m, const Eigen::MatrixXd& X) {
    ForwardCache c;
    c.post.push_back(X);
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        Eigen::MatrixXd z =
            (c.post.back() * m.weights[l].transpose()).rowwise() + m.biases[l].transpose();
        c.pre.push_back(z);
        if (l + 1 < m.num_layers()) {
            c.post.push_back(z.cwiseMax(0.0));
        } else {
            c.post.push_back(z);
        }
    }
    return c;
}

double softmax_loss(const Eigen::MatrixXd& logits, const std::vector<int>& y,
                    Eigen::MatrixXd* dlogits) {
    const Eigen::Index n = logits.rows();
    Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    Eigen::MatrixXd shifted = logits.colwise() - row_max;
    Eigen::MatrixXd e = shifted.array().exp();
    Eigen::VectorXd sums = e.rowwise().sum();
    double loss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
        loss += std::log(sums(r)) - shifted(r, y[static_cast<std::size_t>(r)]);
    }
    loss /= static_cast<double>(n);
    if (dlogits) {
        *dlogits = e.array().colwise() / sums.array();
        for (Eigen::Index r = 0; r < n; ++r) {
            (*dlogits)(r, y[static_cast<std::size_t>(r)]) -= 1.0;
        }
        *dlogits /= static_cast<double>(n);
    }
    return loss;
}

}  // namespace

double batch_loss(const MLPModel& m, const Eigen::MatrixXd& X, const std::vector<int>& y) {
    return softmax_loss(forward_batch(m, X), y, nullptr);
}

double loss_and_gradients(const MLPModel& m, const Eigen::MatrixXd& X,
                          const std::vector<int>& y,
                          std::vector<Eigen::MatrixXd>& grad_w,
                          std::vector<Eigen::VectorXd>& grad_b) {
    ForwardCache cache = forward_cached(m, X);
    Eigen::MatrixXd delta;
    const double loss = softmax_loss(cache.pre.back(), y, &delta);

    grad_w.assign(m.num_layers(), Eigen::MatrixXd());
    grad_b.assign(m.num_layers(), Eigen::VectorXd());
    for (std::size_t l = m.num_layers(); l-- > 0;) {
        grad_w[l] = delta.transpose() * cache.post[l];
        grad_b[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            delta = (delta * m.weights[l]).eval();
            delta = delta.cwiseProduct(
                (cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return loss;
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (ds.empty()) {
        throw EmptyDataset("train: empty dataset");
    }

    TrainResult r;
    r.split = three_way_split(ds, cfg.seed, cfg.train_fraction);

    bool has1 = false, has2 = false;
    for (const FeatureVector& row : r.split.train.rows) {
        has1 |= row.label == 1;
        has2 |= row.label == 2;
    }
    if (!has1 || !has2) {
        throw SingleClassDataset("train: training split contains a single class");
    }

    r.normalizer = fit_normalizer(r.split.train);
    r.model = make_mlp(kClassifierDims, rng::derive_seed(cfg.seed, 0xA11));

    const Eigen::MatrixXd x_train = apply_normalizer(r.normalizer, to_matrix(r.split.train));
    const std::vector<int> y_train = to_class_indices(r.split.train);
    const bool has_val = !r.split.val.empty();

    rng::Generator shuffle_rng(rng::derive_seed(cfg.seed, 0x548));
    std::vector<std::size_t> order(r.split.train.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<Eigen::MatrixXd> gw;
    std::vector<Eigen::VectorXd> gb;
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min<std::size_t>(cfg.batch_size, order.size() - start);
            Eigen::MatrixXd xb(static_cast<Eigen::Index>(len), x_train.cols());
            std::vector<int> yb(len);
            for (std::size_t k = 0; k < len; ++k) {
                xb.row(static_cast<Eigen::Index>(k)) =
                    x_train.row(static_cast<Eigen::Index>(order[start + k]));
                yb[k] = y_train[order[start + k]];
            }
            const double loss = loss_and_gradients(r.model, xb, yb, gw, gb);
            if (!std::isfinite(loss)) {
                throw NonFiniteLoss("train: loss diverged at epoch " + std::to_string(epoch));
            }
            for (std::size_t l = 0; l < r.model.num_layers(); ++l) {
                r.model.weights[l] -= cfg.learning_rate * gw[l];
                r.model.biases[l] -= cfg.learning_rate * gb[l];
            }
            epoch_loss += loss;
            ++n_batches;
        }
        EpochMetrics em;
        em.epoch = epoch;
        em.loss = epoch_loss / static_cast<double>(n_batches);
        em.val_accuracy = evaluate(r.model, r.normalizer,
                                   has_val ? r.split.val : r.split.train);
        r.history.push_back(em);
    }
    return r;
}

std::vector<int> predict(const MLPModel& m, const Normalizer& n, const Dataset& ds) {
    if (ds.empty()) {
        throw EmptyDataset("predict: empty dataset");
    }
    const Eigen::MatrixXd z = forward_batch(m, apply_normalizer(n, to_matrix(ds)));
    std::vector<int> out(ds.size());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        Eigen::Index best = 0;
        z.row(r).maxCoeff(&best);
        out[static_cast<std::size_t>(r)] = static_cast<int>(best) + 1;
    }
    return out;
}

double evaluate(const MLPModel& m, const Normalizer& n, const Dataset& ds) {
    const std::vector<int> preds = predict(m, n, ds);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        correct += preds[r] == ds.rows[r].label;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v(i));
    }
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
    }
    return v;
}

}  // namespace

std::string save_model(const MLPModel& m, const Normalizer& n, const ModelMetadata& meta) {
    m.check_consistent();
    json weights = json::array();
    json biases = json::array();
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        weights.push_back(matrix_to_json(m.weights[l]));
        biases.push_back(vector_to_json(m.biases[l]));
    }
    json doc{{"schema_version", 1},
             {"layer_dims", m.layer_dims},
             {"weights", std::move(weights)},
             {"biases", std::move(biases)},
             {"normalizer", {{"min", vector_to_json(n.min)}, {"max", vector_to_json(n.max)}}},
             {"metadata",
              {{"seed", meta.seed},
               {"train_config", json::parse(to_json(meta.train_config))},
               {"dataset_hash", meta.dataset_hash}}}};
    return doc.dump();
}

LoadedModel load_model(const std::string& document, bool generic) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("model document: ") + e.what());
    }
    LoadedModel out;
    try {
        if (doc.at("schema_version").get<int>() != 1) {
            throw MalformedDocument("model document: unsupported schema_version");
        }
        out.model.layer_dims = doc.at("layer_dims").get<std::vector<int>>();
        const json& weights = doc.at("weights");
        const json& biases = doc.at("biases");
        if (weights.size() != biases.size() ||
            weights.size() + 1 != out.model.layer_dims.size()) {
            throw MalformedDocument("model document: layer count mismatch");
        }
        for (std::size_t l = 0; l < weights.size(); ++l) {
            const json& wj = weights.at(l);
            const int rows = out.model.layer_dims[l + 1];
            const int cols = out.model.layer_dims[l];
            if (static_cast<int>(wj.size()) != rows) {
                throw MalformedDocument("model document: weight rows mismatch");
            }
            Eigen::MatrixXd w(rows, cols);
            for (int r = 0; r < rows; ++r) {
                const json& rowj = wj.at(static_cast<std::size_t>(r));
                if (static_cast<int>(rowj.size()) != cols) {
                    throw MalformedDocument("model document: weight cols mismatch");
                }
                for (int c = 0; c < cols; ++c) {
                    w(r, c) = rowj.at(static_cast<std::size_t>(c)).get<double>();
                }
            }
            out.model.weights.push_back(std::move(w));
            Eigen::VectorXd b = vector_from_json(biases.at(l));
            if (b.size() != rows) {
                throw MalformedDocument("model document: bias size mismatch");
            }
            out.model.biases.push_back(std::move(b));
        }
        const json& nj = doc.at("normalizer");
        out.normalizer.min = vector_from_json(nj.at("min"));
        out.normalizer.max = vector_from_json(nj.at("max"));
        const json& meta = doc.at("metadata");
        out.metadata.seed = meta.at("seed").get<std::uint64_t>();
        out.metadata.dataset_hash = meta.at("dataset_hash").get<std::string>();
        const json& tc = meta.at("train_config");
        out.metadata.train_config = train_config_from_json(tc.dump());
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("model document: ") + e.what());
    }
    if (!generic && out.model.layer_dims != kClassifierDims) {
        throw DimensionMismatch("model document: architecture is not the classifier MLP");
    }
    out.model.check_consistent();
    if (out.normalizer.min.size() != out.model.input_dim() ||
        out.normalizer.max.size() != out.model.input_dim()) {
        throw MalformedDocument("model document: normalizer size mismatch");
    }
    return out;
}

}  // namespace xapp::model
