#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace xapp::plane {

enum class Vertex : int {
    DataIngestion = 0,
    DataValidation,
    ModelTrain,
    ModelAnalysis,
    ModelExecution,
    Monitoring,
};

Vertex vertex_from_string(const std::string& name);
const char* to_string(Vertex v);

// Minimum execution requirements of a pipeline (gpu flop/s, gpu bytes,
// bytes, cores). Kept as doubles so deficits divide cleanly.
struct Resources {
    double gpu_flops = 0.0;
    double gpu_mem = 0.0;
    double mem = 0.0;
    double cpu_cores = 0.0;

    std::array<double, 4> as_array() const { return {gpu_flops, gpu_mem, mem, cpu_cores}; }
    static const std::array<const char*, 4>& names();
};

using Preconditions = Resources;

// Pipeline DAG: each vertex feeds at most one downstream vertex.
struct PipelineManifest {
    std::string id;
    std::vector<Vertex> vertices;
    std::vector<std::pair<Vertex, Vertex>> edges;
    Preconditions preconditions;
    std::vector<std::string> kpm_metrics;

    void validate() const;  // throws InvalidManifest
};

PipelineManifest manifest_from_json(const std::string& text);
std::string to_json(const PipelineManifest& m);

// True iff the subset forms one contiguous directed path in the manifest.
bool validate_pipeline_task(const PipelineManifest& m, const std::vector<Vertex>& subset);

// Capacity plus a ledger of active reservations; availability is always
// capacity minus the ledger sum, so conservation holds by construction.
struct ResourcePool {
    Resources capacity;
    std::map<std::string, Resources> reservations;  // by deployment id
    std::set<std::string> released_ids;             // for idempotent release

    Resources available() const;
};

ResourcePool pool_from_json(const std::string& text);
std::string to_json(const ResourcePool& pool);

// Closed comparison: exact-fit requirements are met.
bool are_preconditions_met(const Preconditions& pre, const ResourcePool& pool);

enum class RiskVerdict { Abort, ProceedWithWarning };

struct RiskAssessment {
    Resources deficits;  // fraction missing per resource, 0 when required = 0
    double max_deficit = 0.0;
    RiskVerdict verdict = RiskVerdict::ProceedWithWarning;
};

// deficit_r = max(0, (required - available) / required); Abort iff the
// worst deficit exceeds the threshold.
RiskAssessment cog_evaluate_risk(const Preconditions& pre, const ResourcePool& pool,
                                 double threshold);

// Throws InsufficientResources if the pool cannot hold the reservation.
void provision(ResourcePool& pool, const Preconditions& pre, const std::string& deployment_id);
// Idempotent for ids released before; UnknownDeployment for never-seen ids.
void release(ResourcePool& pool, const std::string& deployment_id);

enum class DeploymentState {
    Requested,
    NotFound,
    PreconditionsChecked,
    RiskEvaluated,
    KPMSubscribed,
    Provisioned,
    Deployed,
    ProbesActive,
    Running,
    Released,
};

const char* to_string(DeploymentState s);

struct Event {
    std::uint64_t ts = 0;
    std::string deployment_id;
    std::string from;
    std::string to;
    std::string detail;
};

std::string events_to_jsonl(const std::vector<Event>& events);

struct KPMSubscription {
    std::vector<std::string> metrics;
    double period = 1.0;  // seconds between probe samples
};

struct ProbeRecord {
    double ts = 0.0;
    double latency_ms = 0.0;
    double throughput_ips = 0.0;  // inferences per second
    double accuracy = 0.0;
    double cpu_usage = 0.0;
    double mem_usage = 0.0;
};

// Supplies probe samples for an active deployment; step counts from 0
// within a collection window.
class ProbeSource {
public:
    virtual ~ProbeSource() = default;
    virtual ProbeRecord sample(std::uint64_t step) = 0;
};

// Deterministic pseudo-metrics derived from a seed; stands in when no
// model-backed source is attached.
class SyntheticProbeSource : public ProbeSource {
public:
    explicit SyntheticProbeSource(std::uint64_t seed) : seed_(seed) {}
    ProbeRecord sample(std::uint64_t step) override;

private:
    std::uint64_t seed_;
};

struct Deployment {
    std::string id;
    std::string pipeline_id;
    DeploymentState state = DeploymentState::Requested;
    std::optional<RiskAssessment> risk;
    KPMSubscription subscription;
};

// Owns registry, pool and deployments; commands are serialized, and the
// event log is the serialization witness.
class Orchestrator {
public:
    using Clock = std::function<std::uint64_t()>;

    // Default clock is a logical sequence counter, which keeps event logs
    // replayable. Timestamps are forced strictly monotone either way.
    explicit Orchestrator(ResourcePool pool, Clock clock = nullptr);

    std::string register_pipeline(const PipelineManifest& manifest);
    PipelineManifest get_pipeline(const std::string& id) const;
    bool validate_task(const std::string& pipeline_id, const std::vector<Vertex>& subset) const;

    struct DeploymentOutcome {
        std::string deployment_id;
        DeploymentState state = DeploymentState::Requested;
        std::optional<RiskAssessment> risk;
    };

    // The full deployment sequence: registry lookup, precondition check,
    // risk evaluation on the unmet branch, otherwise KPM subscription,
    // provisioning, deployment, probe activation and run.
    DeploymentOutcome run_deployment(const std::string& pipeline_id,
                                     double risk_threshold = kDefaultRiskThreshold);

    // Samples floor(window / period) probe records; requires the
    // deployment to be in ProbesActive or Running.
    std::vector<ProbeRecord> collect_probe_metrics(const std::string& deployment_id,
                                                   double window,
                                                   ProbeSource* source = nullptr);

    // Releases resources and parks the deployment in Released.
    void release_deployment(const std::string& deployment_id);

    Deployment deployment(const std::string& deployment_id) const;
    std::vector<std::string> deployment_ids() const;
    ResourcePool pool_snapshot() const;
    std::vector<Event> event_log() const;

    static constexpr double kDefaultRiskThreshold = 0.25;
    static constexpr double kDefaultProbePeriod = 1.0;

private:
    void append_event(const std::string& deployment_id, const std::string& from,
                      const std::string& to, const std::string& detail);

    mutable std::mutex mu_;
    std::map<std::string, PipelineManifest> registry_;
    ResourcePool pool_;
    std::map<std::string, Deployment> deployments_;
    std::vector<Event> events_;
    Clock clock_;
    std::uint64_t seq_ = 0;
    std::uint64_t last_ts_ = 0;
    std::uint64_t next_deployment_ = 1;
};

}  // namespace xapp::plane
