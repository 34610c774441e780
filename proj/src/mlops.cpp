#include "xapp/mlops.hpp"

#include <cmath>
#include <cstring>
#include <nlohmann/json.hpp>

#include "xapp/errors.hpp"
#include "xapp/rng.hpp"
#include "xapp/util.hpp"

namespace xapp::mlops {

using nlohmann::json;

void TrustCriteria::validate() const {
    if (!(min_accuracy >= 0.0 && min_accuracy <= 1.0)) {
        throw InvalidConfig("criteria: min_accuracy must be in [0,1]");
    }
    if (!(min_separation_fraction >= 0.0 && min_separation_fraction <= 1.0)) {
        throw InvalidConfig("criteria: min_separation_fraction must be in [0,1]");
    }
    if (!(epsilon.epsilon >= 0.0)) {
        throw InvalidConfig("criteria: epsilon must be >= 0");
    }
}

TrustCriteria criteria_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("criteria: ") + e.what());
    }
    TrustCriteria c;
    try {
        c.min_accuracy = j.value("min_accuracy", c.min_accuracy);
        c.min_separation_fraction =
            j.value("min_separation_fraction", c.min_separation_fraction);
        c.epsilon.epsilon = j.value("epsilon", c.epsilon.epsilon);
        c.require_explanation_report =
            j.value("require_explanation_report", c.require_explanation_report);
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("criteria: ") + e.what());
    }
    c.validate();
    return c;
}

std::string to_json(const TrustCriteria& c) {
    json j{{"min_accuracy", c.min_accuracy},
           {"min_separation_fraction", c.min_separation_fraction},
           {"epsilon", c.epsilon.epsilon},
           {"require_explanation_report", c.require_explanation_report}};
    return j.dump();
}

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Publish: return "Publish";
        case Verdict::Reject: return "Reject";
        case Verdict::AwaitOperator: return "AwaitOperator";
    }
    return "?";
}

namespace {

const char* to_string(CriterionStatus s) {
    switch (s) {
        case CriterionStatus::Pass: return "pass";
        case CriterionStatus::Fail: return "fail";
        case CriterionStatus::Missing: return "missing";
    }
    return "?";
}

}  // namespace

std::string to_json(const GateDecision& d) {
    json reasons = json::array();
    for (const CriterionOutcome& r : d.reasons) {
        json item{{"criterion", r.criterion},
                  {"required", r.required},
                  {"status", to_string(r.status)}};
        if (r.measured) {
            item["measured"] = *r.measured;
        }
        reasons.push_back(std::move(item));
    }
    json doc{{"verdict", to_string(d.verdict)}, {"reasons", std::move(reasons)}};
    if (d.operator_override) {
        doc["operator_override"] = {{"approve", d.operator_override->approve},
                                    {"operator_id", d.operator_override->operator_id}};
    }
    return doc.dump();
}

GateDecision evaluate_gate(const TrustCriteria& criteria, std::optional<double> accuracy,
                           std::optional<double> separation_fraction,
                           bool explanation_present) {
    criteria.validate();
    GateDecision d;

    CriterionOutcome acc;
    acc.criterion = "min_accuracy";
    acc.required = criteria.min_accuracy;
    acc.measured = accuracy;
    if (!accuracy) {
        acc.status = CriterionStatus::Missing;
    } else {
        acc.status = *accuracy >= criteria.min_accuracy ? CriterionStatus::Pass
                                                        : CriterionStatus::Fail;
    }
    d.reasons.push_back(acc);

    CriterionOutcome sep;
    sep.criterion = "min_separation_fraction";
    sep.required = criteria.min_separation_fraction;
    sep.measured = separation_fraction;
    if (!separation_fraction) {
        // A zero threshold asks for nothing, so absence is vacuously fine.
        sep.status = criteria.min_separation_fraction == 0.0 ? CriterionStatus::Pass
                                                             : CriterionStatus::Missing;
    } else {
        sep.status = *separation_fraction >= criteria.min_separation_fraction
                         ? CriterionStatus::Pass
                         : CriterionStatus::Fail;
    }
    d.reasons.push_back(sep);

    CriterionOutcome rep;
    rep.criterion = "explanation_report";
    rep.required = criteria.require_explanation_report ? 1.0 : 0.0;
    rep.measured = explanation_present ? 1.0 : 0.0;
    rep.status = !criteria.require_explanation_report
                     ? CriterionStatus::Pass
                     : (explanation_present ? CriterionStatus::Pass : CriterionStatus::Missing);
    d.reasons.push_back(rep);

    bool any_fail = false, any_missing = false;
    for (const CriterionOutcome& r : d.reasons) {
        any_fail |= r.status == CriterionStatus::Fail;
        any_missing |= r.status == CriterionStatus::Missing;
    }
    d.verdict = any_fail ? Verdict::Reject
                         : (any_missing ? Verdict::AwaitOperator : Verdict::Publish);
    return d;
}

namespace {

std::filesystem::path package_index_path(const store::ArtifactStore& st) {
    return st.root() / "packages" / "index.json";
}

json load_package_index(const store::ArtifactStore& st) {
    const auto path = package_index_path(st);
    if (!std::filesystem::exists(path)) {
        return json{{"packages", json::array()}};
    }
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("package index: ") + e.what());
    }
}

json package_to_json_obj(const XAppPackage& p) {
    return json{{"version", p.version},
                {"model_uri", p.model_uri},
                {"verification_report_uri", p.verification_report_uri},
                {"explanation_report_uri", p.explanation_report_uri},
                {"background_uri", p.background_uri},
                {"manifest_id", p.manifest_id}};
}

XAppPackage package_from_json_obj(const json& j) {
    XAppPackage p;
    p.version = j.at("version").get<std::uint64_t>();
    p.model_uri = j.at("model_uri").get<std::string>();
    p.verification_report_uri = j.value("verification_report_uri", "");
    p.explanation_report_uri = j.value("explanation_report_uri", "");
    p.background_uri = j.value("background_uri", "");
    p.manifest_id = j.value("manifest_id", "");
    return p;
}

}  // namespace

std::string to_json(const XAppPackage& p) {
    return package_to_json_obj(p).dump();
}

XAppPackage publish_xapp(store::ArtifactStore& st, const GateDecision& decision,
                         const PublishArtifacts& artifacts) {
    if (decision.verdict != Verdict::Publish) {
        throw NotApproved("gate verdict is " + std::string(to_string(decision.verdict)) +
                          "; only Publish may be packaged");
    }
    if (!st.contains(artifacts.model_uri)) {
        throw UnknownArtifact("model artifact missing: " + artifacts.model_uri);
    }
    json index = load_package_index(st);
    std::uint64_t version = 0;
    for (const json& p : index.at("packages")) {
        version = std::max(version, p.at("version").get<std::uint64_t>());
    }
    XAppPackage pkg;
    pkg.version = version + 1;
    pkg.model_uri = artifacts.model_uri;
    pkg.verification_report_uri = artifacts.verification_report_uri;
    pkg.explanation_report_uri = artifacts.explanation_report_uri;
    pkg.background_uri = artifacts.background_uri;
    pkg.manifest_id = artifacts.manifest_id;
    index["packages"].push_back(package_to_json_obj(pkg));
    write_file_atomic(package_index_path(st), index.dump(2));
    return pkg;
}

std::vector<XAppPackage> list_packages(const store::ArtifactStore& st) {
    json index = load_package_index(st);
    std::vector<XAppPackage> out;
    for (const json& p : index.at("packages")) {
        out.push_back(package_from_json_obj(p));
    }
    return out;
}

XAppPackage get_package(const store::ArtifactStore& st, std::optional<std::uint64_t> version) {
    const auto packages = list_packages(st);
    if (packages.empty()) {
        throw UnpublishedXApp("no published xApp packages");
    }
    if (!version) {
        return packages.back();
    }
    for (const XAppPackage& p : packages) {
        if (p.version == *version) {
            return p;
        }
    }
    throw UnpublishedXApp("no xApp package with version " + std::to_string(*version));
}

std::string stage_log_to_jsonl(const std::vector<StageLogEntry>& log) {
    std::string out;
    for (const StageLogEntry& e : log) {
        json j{{"ts", e.ts}, {"stage", e.stage}, {"status", e.status},
               {"artifact_uri", e.artifact_uri}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string to_json(const RunResult& r) {
    json artifacts = json::object();
    for (const auto& [name, uri] : r.artifacts) {
        artifacts[name] = uri;
    }
    json doc{{"run_id", r.run_id},
             {"decision", json::parse(to_json(r.decision))},
             {"artifacts", std::move(artifacts)}};
    if (r.package) {
        doc["package"] = json::parse(to_json(*r.package));
    }
    if (r.test_accuracy) {
        doc["test_accuracy"] = *r.test_accuracy;
    }
    if (r.separation_fraction) {
        doc["separation_fraction"] = *r.separation_fraction;
    }
    return doc.dump();
}

namespace {

// Stage order = unique topological order of the manifest chain.
std::vector<plane::Vertex> stage_order(const plane::PipelineManifest& manifest) {
    std::map<plane::Vertex, plane::Vertex> succ;
    std::set<plane::Vertex> has_pred;
    for (const auto& [from, to] : manifest.edges) {
        succ[from] = to;
        has_pred.insert(to);
    }
    std::vector<plane::Vertex> order;
    for (plane::Vertex v : manifest.vertices) {
        if (has_pred.count(v)) {
            continue;
        }
        plane::Vertex cur = v;
        order.push_back(cur);
        while (succ.count(cur)) {
            cur = succ.at(cur);
            order.push_back(cur);
        }
    }
    return order;
}

struct StageContext {
    Dataset dataset;
    std::string dataset_csv;
    std::string dataset_hash;
    std::optional<model::TrainResult> trained;
    std::string model_uri;
    std::optional<double> test_accuracy;
    std::optional<double> separation_fraction;
    std::string verification_uri;
    std::string explanation_uri;
    std::string background_uri;
};

}  // namespace

RunResult run_mlops(store::ArtifactStore& st, const plane::PipelineManifest& manifest,
                    const DataSource& source, const RunOptions& options,
                    const OperatorChannel& channel) {
    manifest.validate();
    options.criteria.validate();
    options.train.validate();

    RunResult result;
    StageContext ctx;

    // Resolve the source up front; the run id must cover the exact bytes.
    if (std::holds_alternative<std::filesystem::path>(source)) {
        ctx.dataset_csv = read_file(std::get<std::filesystem::path>(source));
        ctx.dataset = from_csv(ctx.dataset_csv);
    } else if (std::holds_alternative<sim::SimConfig>(source)) {
        ctx.dataset = sim::run_simulation(std::get<sim::SimConfig>(source));
        ctx.dataset_csv = to_csv(ctx.dataset);
    } else {
        ctx.dataset = std::get<Dataset>(source);
        ctx.dataset_csv = to_csv(ctx.dataset);
    }
    ctx.dataset_hash = store::sha256_hex(ctx.dataset_csv);

    result.run_id = store::sha256_hex(ctx.dataset_hash + "|" + model::to_json(options.train) +
                                      "|" + to_json(options.criteria) + "|" + manifest.id)
                        .substr(0, 16);
    store::MetricsLog metrics(st.root(), result.run_id);

    std::uint64_t stage_ts = 0;
    auto log_stage = [&](const std::string& stage, const std::string& status,
                         const std::string& uri) {
        result.stage_log.push_back(StageLogEntry{stage_ts++, stage, status, uri});
    };

    const std::vector<plane::Vertex> order = stage_order(manifest);
    for (plane::Vertex stage : order) {
        const std::string stage_name = plane::to_string(stage);
        try {
            switch (stage) {
                case plane::Vertex::DataIngestion: {
                    const std::string uri = st.put(ctx.dataset_csv);
                    result.artifacts["dataset"] = uri;
                    log_stage(stage_name, "ok", uri);
                    break;
                }
                case plane::Vertex::DataValidation: {
                    if (ctx.dataset.empty()) {
                        throw EmptyDataset("validation: dataset has no rows");
                    }
                    std::size_t class1 = 0;
                    for (const FeatureVector& row : ctx.dataset.rows) {
                        for (double f : row.features) {
                            if (!std::isfinite(f)) {
                                throw MalformedDocument("validation: non-finite feature");
                            }
                        }
                        class1 += row.label == 1;
                    }
                    json summary{{"rows", ctx.dataset.size()},
                                 {"class1", class1},
                                 {"class2", ctx.dataset.size() - class1},
                                 {"dataset_hash", ctx.dataset_hash}};
                    const std::string uri = st.put(summary.dump());
                    result.artifacts["validation_summary"] = uri;
                    log_stage(stage_name, "ok", uri);
                    break;
                }
                case plane::Vertex::ModelTrain: {
                    ctx.trained = model::train(ctx.dataset, options.train);
                    for (const model::EpochMetrics& e : ctx.trained->history) {
                        metrics.log("train_loss", e.loss);
                        metrics.log("val_accuracy", e.val_accuracy);
                    }
                    ctx.test_accuracy = model::evaluate(ctx.trained->model,
                                                        ctx.trained->normalizer,
                                                        ctx.trained->split.test);
                    metrics.log("test_accuracy", *ctx.test_accuracy);
                    model::ModelMetadata meta{options.train.seed, options.train,
                                              ctx.dataset_hash};
                    ctx.model_uri = st.put(
                        model::save_model(ctx.trained->model, ctx.trained->normalizer, meta));
                    result.artifacts["model"] = ctx.model_uri;
                    log_stage(stage_name, "ok", ctx.model_uri);
                    break;
                }
                case plane::Vertex::ModelAnalysis: {
                    if (!ctx.trained) {
                        throw Error("analysis: no trained model in this run");
                    }
                    const verify::SeparationResult sep = verify::separation_metric(
                        ctx.trained->model, ctx.trained->normalizer, ctx.trained->split.test,
                        options.criteria.epsilon, options.method, options.threads);
                    ctx.separation_fraction = sep.fraction;
                    metrics.log("separation_fraction", sep.fraction);
                    metrics.log("separation_ci_low", sep.ci_low);
                    metrics.log("separation_ci_high", sep.ci_high);
                    ctx.verification_uri = st.put(verify::to_json(sep));
                    result.artifacts["verification_report"] = ctx.verification_uri;

                    const explain::Background background = explain::sample_background(
                        ctx.trained->split.train, ctx.trained->normalizer, 100,
                        options.ranking.seed);
                    {
                        json bg = json::array();
                        for (Eigen::Index r = 0; r < background.rows.rows(); ++r) {
                            json row = json::array();
                            for (Eigen::Index c = 0; c < background.rows.cols(); ++c) {
                                row.push_back(background.rows(r, c));
                            }
                            bg.push_back(std::move(row));
                        }
                        ctx.background_uri = st.put(json{{"rows", std::move(bg)}}.dump());
                        result.artifacts["background"] = ctx.background_uri;
                    }
                    const explain::RankingResult ranking = explain::importance_ranking(
                        ctx.trained->model, ctx.trained->normalizer, ctx.trained->split.test,
                        background, options.ranking);
                    if (!ranking.ranking.empty()) {
                        metrics.log("top_feature_mean_abs_phi",
                                    ranking.ranking.front().mean_abs_phi);
                    }
                    ctx.explanation_uri = st.put(explain::to_csv(ranking));
                    result.artifacts["explanation_report"] = ctx.explanation_uri;
                    log_stage(stage_name, "ok", ctx.verification_uri);
                    break;
                }
                case plane::Vertex::ModelExecution: {
                    result.decision = evaluate_gate(options.criteria, ctx.test_accuracy,
                                                    ctx.separation_fraction,
                                                    !ctx.explanation_uri.empty());
                    if (result.decision.verdict == Verdict::AwaitOperator && channel) {
                        if (auto override_ = channel(result.decision)) {
                            result.decision.operator_override = override_;
                            result.decision.verdict =
                                override_->approve ? Verdict::Publish : Verdict::Reject;
                        }
                    }
                    const std::string uri = st.put(to_json(result.decision));
                    result.artifacts["gate_decision"] = uri;
                    if (result.decision.verdict == Verdict::Publish) {
                        PublishArtifacts pa{ctx.model_uri, ctx.verification_uri,
                                            ctx.explanation_uri, ctx.background_uri,
                                            manifest.id};
                        result.package = publish_xapp(st, result.decision, pa);
                    }
                    log_stage(stage_name, "ok", uri);
                    break;
                }
                case plane::Vertex::Monitoring: {
                    if (ctx.test_accuracy) {
                        metrics.log("monitoring_accuracy", *ctx.test_accuracy);
                    }
                    metrics.log("published",
                                result.package ? 1.0 : 0.0);
                    log_stage(stage_name, "ok", "");
                    break;
                }
            }
        } catch (const Error& e) {
            log_stage(stage_name, std::string("error: ") + e.what(), "");
            const std::string log_uri = st.put(stage_log_to_jsonl(result.stage_log));
            result.artifacts["stage_log"] = log_uri;
            throw Error(stage_name + ": " + e.what());
        }
    }

    result.test_accuracy = ctx.test_accuracy;
    result.separation_fraction = ctx.separation_fraction;
    result.artifacts["stage_log"] = st.put(stage_log_to_jsonl(result.stage_log));
    return result;
}

ModelProbeSource::ModelProbeSource(model::MLPModel m, model::Normalizer n, Dataset window,
                                   std::size_t rows_per_step)
    : model_(std::move(m)),
      normalizer_(std::move(n)),
      window_(std::move(window)),
      rows_per_step_(std::max<std::size_t>(1, rows_per_step)) {
    double flops = 0.0;
    for (const Eigen::MatrixXd& w : model_.weights) {
        flops += 2.0 * static_cast<double>(w.rows()) * static_cast<double>(w.cols());
    }
    latency_ms_ = 0.2 + flops / 1e6;
}

plane::ProbeRecord ModelProbeSource::sample(std::uint64_t step) {
    plane::ProbeRecord r;
    r.latency_ms = latency_ms_;
    r.throughput_ips = 1000.0 / latency_ms_;
    if (!window_.empty()) {
        Dataset slice;
        const std::size_t start = (step * rows_per_step_) % window_.size();
        for (std::size_t i = 0; i < rows_per_step_ && i < window_.size(); ++i) {
            slice.rows.push_back(window_.rows[(start + i) % window_.size()]);
        }
        r.accuracy = model::evaluate(model_, normalizer_, slice);
    }
    rng::Generator g(rng::derive_seed(0x9B0BE, step));
    r.cpu_usage = 0.2 + 0.3 * g.uniform01();
    r.mem_usage = 0.3 + 0.2 * g.uniform01();
    return r;
}

std::string to_json(const InferenceResult& r) {
    json logits = json::array();
    for (Eigen::Index i = 0; i < r.logits.size(); ++i) {
        logits.push_back(r.logits(i));
    }
    json doc{{"predicted_class", r.predicted_class}, {"logits", std::move(logits)}};
    if (r.explanation) {
        doc["explanation"] = json::parse(explain::to_json(*r.explanation));
    }
    return doc.dump();
}

InferenceResult online_infer(const store::ArtifactStore& st, const XAppPackage& package,
                             const Eigen::VectorXd& raw_x, bool explain_flag,
                             std::uint32_t n_permutations) {
    const model::LoadedModel loaded = model::load_model(st.get(package.model_uri));
    if (raw_x.size() != loaded.model.input_dim()) {
        throw DimensionMismatch("online_infer: expected " +
                                std::to_string(loaded.model.input_dim()) + " features");
    }
    const Eigen::VectorXd x = model::apply_normalizer(loaded.normalizer, raw_x);
    InferenceResult result;
    result.logits = model::forward(loaded.model, x);
    Eigen::Index best = 0;
    result.logits.maxCoeff(&best);
    result.predicted_class = static_cast<int>(best) + 1;

    if (explain_flag) {
        if (package.background_uri.empty()) {
            throw UnknownArtifact("package has no background artifact for explanation");
        }
        const json bg = json::parse(st.get(package.background_uri));
        const json& rows = bg.at("rows");
        explain::Background background;
        background.rows = Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()),
                                          loaded.model.input_dim());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (Eigen::Index c = 0; c < background.rows.cols(); ++c) {
                background.rows(static_cast<Eigen::Index>(r), c) =
                    rows.at(r).at(static_cast<std::size_t>(c)).get<double>();
            }
        }
        // Seed from the raw sample bytes so identical queries explain
        // identically.
        std::string bytes(reinterpret_cast<const char*>(raw_x.data()),
                          static_cast<std::size_t>(raw_x.size()) * sizeof(double));
        const std::string digest = store::sha256_hex(bytes);
        std::uint64_t seed = 0;
        for (int i = 0; i < 16; ++i) {
            const char c = digest[static_cast<std::size_t>(i)];
            seed = seed * 16 + static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
        }
        result.explanation =
            explain::shapley_permutation(loaded.model, x, background, n_permutations, seed);
    }
    return result;
}

}  // namespace xapp::mlops
