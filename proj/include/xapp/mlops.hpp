#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "xapp/dataset.hpp"
#include "xapp/explain.hpp"
#include "xapp/model.hpp"
#include "xapp/plane.hpp"
#include "xapp/sim.hpp"
#include "xapp/store.hpp"
#include "xapp/verify.hpp"

namespace xapp::mlops {

// Performance specifications the trust gate enforces before publication.
struct TrustCriteria {
    double min_accuracy = 0.95;
    double min_separation_fraction = 0.30;
    verify::PerturbationSpec epsilon{0.05};
    bool require_explanation_report = true;

    void validate() const;
};

TrustCriteria criteria_from_json(const std::string& text);
std::string to_json(const TrustCriteria& c);

enum class Verdict { Publish, Reject, AwaitOperator };
const char* to_string(Verdict v);

enum class CriterionStatus { Pass, Fail, Missing };

struct CriterionOutcome {
    std::string criterion;
    double required = 0.0;
    std::optional<double> measured;
    CriterionStatus status = CriterionStatus::Missing;
};

struct OperatorOverride {
    bool approve = false;
    std::string operator_id;
};

// Publish requires every criterion to pass, or an explicit operator
// approval recorded in operator_override.
struct GateDecision {
    Verdict verdict = Verdict::Reject;
    std::vector<CriterionOutcome> reasons;
    std::optional<OperatorOverride> operator_override;
};

std::string to_json(const GateDecision& d);

// Threshold criteria that fail measure as Reject; evidence that is merely
// absent leaves the decision with the operator.
GateDecision evaluate_gate(const TrustCriteria& criteria, std::optional<double> accuracy,
                           std::optional<double> separation_fraction,
                           bool explanation_present);

struct XAppPackage {
    std::string model_uri;
    std::string verification_report_uri;
    std::string explanation_report_uri;
    std::string background_uri;  // normalized reference rows for online explanation
    std::string manifest_id;
    std::uint64_t version = 0;
};

std::string to_json(const XAppPackage& p);

struct PublishArtifacts {
    std::string model_uri;
    std::string verification_report_uri;
    std::string explanation_report_uri;
    std::string background_uri;
    std::string manifest_id;
};

// Registers the package with the next version; throws NotApproved unless
// the decision verdict is Publish.
XAppPackage publish_xapp(store::ArtifactStore& st, const GateDecision& decision,
                         const PublishArtifacts& artifacts);

// Latest (or specific) published package; throws UnpublishedXApp.
XAppPackage get_package(const store::ArtifactStore& st,
                        std::optional<std::uint64_t> version = std::nullopt);
std::vector<XAppPackage> list_packages(const store::ArtifactStore& st);

// Asked when the gate lands on AwaitOperator; a null channel leaves the
// verdict as-is.
using OperatorChannel = std::function<std::optional<OperatorOverride>(const GateDecision&)>;

struct StageLogEntry {
    std::uint64_t ts = 0;
    std::string stage;
    std::string status;  // "ok" or "error: ..."
    std::string artifact_uri;
};

std::string stage_log_to_jsonl(const std::vector<StageLogEntry>& log);

// Either a dataset CSV on disk, a simulation to run, or rows in memory.
using DataSource = std::variant<std::filesystem::path, sim::SimConfig, Dataset>;

struct RunOptions {
    model::TrainConfig train;
    TrustCriteria criteria;
    explain::RankingConfig ranking;
    verify::Method method = verify::Method::Crown;
    unsigned threads = 1;
};

struct RunResult {
    std::string run_id;
    GateDecision decision;
    std::map<std::string, std::string> artifacts;  // name -> uri
    std::vector<StageLogEntry> stage_log;
    std::optional<XAppPackage> package;
    std::optional<double> test_accuracy;
    std::optional<double> separation_fraction;
};

std::string to_json(const RunResult& r);

// Executes the manifest's stages in DAG order against the store: ingest,
// validate, train, trustworthy analysis, gate + publish, monitoring.
// Artifacts are content-addressed; the run id is derived from the inputs
// so identical inputs replay to identical decisions.
RunResult run_mlops(store::ArtifactStore& st, const plane::PipelineManifest& manifest,
                    const DataSource& source, const RunOptions& options,
                    const OperatorChannel& channel = nullptr);

// Probe source backed by the published classifier: each probe step runs
// inference over the next dataset slice, so the accuracy field is the
// model's measured accuracy on that window. Latency follows a
// deterministic per-parameter cost model.
class ModelProbeSource : public plane::ProbeSource {
public:
    ModelProbeSource(model::MLPModel m, model::Normalizer n, Dataset window,
                     std::size_t rows_per_step);

    plane::ProbeRecord sample(std::uint64_t step) override;

private:
    model::MLPModel model_;
    model::Normalizer normalizer_;
    Dataset window_;
    std::size_t rows_per_step_;
    double latency_ms_;
};

struct InferenceResult {
    int predicted_class = 0;  // 1 or 2
    Eigen::VectorXd logits;
    std::optional<explain::ShapleyReport> explanation;
};

std::string to_json(const InferenceResult& r);

// Applies the packaged normalizer and model to a raw feature vector; when
// explain is set, attaches a permutation-Shapley report seeded from the
// sample hash so repeated queries agree.
InferenceResult online_infer(const store::ArtifactStore& st, const XAppPackage& package,
                             const Eigen::VectorXd& raw_x, bool explain,
                             std::uint32_t n_permutations = 200);

}  // namespace xapp::mlops
