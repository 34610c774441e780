#include "xapp/plane.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "xapp/errors.hpp"
#include "xapp/rng.hpp"

namespace xapp::plane {

using nlohmann::json;

Vertex vertex_from_string(const std::string& name) {
    if (name == "DataIngestion") return Vertex::DataIngestion;
    if (name == "DataValidation") return Vertex::DataValidation;
    if (name == "ModelTrain") return Vertex::ModelTrain;
    if (name == "ModelAnalysis") return Vertex::ModelAnalysis;
    if (name == "ModelExecution") return Vertex::ModelExecution;
    if (name == "Monitoring") return Vertex::Monitoring;
    throw UnknownVertex("unknown pipeline vertex: " + name);
}

const char* to_string(Vertex v) {
    switch (v) {
        case Vertex::DataIngestion: return "DataIngestion";
        case Vertex::DataValidation: return "DataValidation";
        case Vertex::ModelTrain: return "ModelTrain";
        case Vertex::ModelAnalysis: return "ModelAnalysis";
        case Vertex::ModelExecution: return "ModelExecution";
        case Vertex::Monitoring: return "Monitoring";
    }
    return "?";
}

const std::array<const char*, 4>& Resources::names() {
    static const std::array<const char*, 4> n = {"gpu_flops", "gpu_mem", "mem", "cpu_cores"};
    return n;
}

void PipelineManifest::validate() const {
    if (id.empty()) {
        throw InvalidManifest("manifest: empty id");
    }
    std::set<Vertex> seen;
    for (Vertex v : vertices) {
        if (!seen.insert(v).second) {
            throw InvalidManifest("manifest: duplicate vertex " + std::string(to_string(v)));
        }
    }
    std::map<Vertex, int> out_degree;
    std::map<Vertex, std::vector<Vertex>> succ;
    for (const auto& [from, to] : edges) {
        if (!seen.count(from) || !seen.count(to)) {
            throw InvalidManifest("manifest: edge references undeclared vertex");
        }
        if (++out_degree[from] > 1) {
            throw InvalidManifest("manifest: vertex " + std::string(to_string(from)) +
                                  " feeds more than one vertex");
        }
        succ[from].push_back(to);
    }
    for (const auto& r : preconditions.as_array()) {
        if (!(r >= 0.0)) {
            throw InvalidManifest("manifest: negative precondition");
        }
    }
    // Cycle check by walking successor chains; out-degree <= 1 makes every
    // walk a simple chain unless it loops.
    for (Vertex start : vertices) {
        std::set<Vertex> visited;
        Vertex cur = start;
        while (succ.count(cur)) {
            cur = succ[cur][0];
            if (cur == start || !visited.insert(cur).second) {
                throw InvalidManifest("manifest: cycle through " +
                                      std::string(to_string(start)));
            }
        }
    }
}

PipelineManifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("manifest: ") + e.what());
    }
    PipelineManifest m;
    try {
        m.id = j.at("id").get<std::string>();
        for (const auto& v : j.at("vertices")) {
            m.vertices.push_back(vertex_from_string(v.get<std::string>()));
        }
        for (const auto& e : j.at("edges")) {
            m.edges.emplace_back(vertex_from_string(e.at(0).get<std::string>()),
                                 vertex_from_string(e.at(1).get<std::string>()));
        }
        const json& p = j.at("preconditions");
        m.preconditions.gpu_flops = p.value("min_gpu_flops", 0.0);
        m.preconditions.gpu_mem = p.value("min_gpu_mem", 0.0);
        m.preconditions.mem = p.value("min_mem", 0.0);
        m.preconditions.cpu_cores = p.value("min_cpu_cores", 0.0);
        if (j.contains("kpm_metrics")) {
            m.kpm_metrics = j.at("kpm_metrics").get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

std::string to_json(const PipelineManifest& m) {
    json vertices = json::array();
    for (Vertex v : m.vertices) {
        vertices.push_back(to_string(v));
    }
    json edges = json::array();
    for (const auto& [from, to] : m.edges) {
        edges.push_back(json::array({to_string(from), to_string(to)}));
    }
    json doc{{"id", m.id},
             {"vertices", std::move(vertices)},
             {"edges", std::move(edges)},
             {"preconditions",
              {{"min_gpu_flops", m.preconditions.gpu_flops},
               {"min_gpu_mem", m.preconditions.gpu_mem},
               {"min_mem", m.preconditions.mem},
               {"min_cpu_cores", m.preconditions.cpu_cores}}},
             {"kpm_metrics", m.kpm_metrics}};
    return doc.dump(2);
}

bool validate_pipeline_task(const PipelineManifest& m, const std::vector<Vertex>& subset) {
    std::set<Vertex> declared(m.vertices.begin(), m.vertices.end());
    std::set<Vertex> wanted;
    for (Vertex v : subset) {
        if (!declared.count(v)) {
            throw UnknownVertex("task vertex " + std::string(to_string(v)) +
                                " not in pipeline " + m.id);
        }
        wanted.insert(v);
    }
    if (wanted.size() <= 1) {
        return wanted.size() == subset.size();  // duplicates are not a path
    }
    std::map<Vertex, Vertex> succ;
    for (const auto& [from, to] : m.edges) {
        succ[from] = to;  // out-degree <= 1 per manifest invariant
    }
    // Heads are subset vertices with no subset predecessor along an edge.
    std::set<Vertex> has_pred;
    for (Vertex v : wanted) {
        auto it = succ.find(v);
        if (it != succ.end() && wanted.count(it->second)) {
            has_pred.insert(it->second);
        }
    }
    std::vector<Vertex> heads;
    for (Vertex v : wanted) {
        if (!has_pred.count(v)) {
            heads.push_back(v);
        }
    }
    if (heads.size() != 1) {
        return false;
    }
    // Walk the chain from the head; it must cover the subset exactly.
    std::size_t covered = 1;
    Vertex cur = heads.front();
    while (covered < wanted.size()) {
        auto it = succ.find(cur);
        if (it == succ.end() || !wanted.count(it->second)) {
            return false;
        }
        cur = it->second;
        ++covered;
    }
    return true;
}

Resources ResourcePool::available() const {
    Resources avail = capacity;
    for (const auto& [id, r] : reservations) {
        avail.gpu_flops -= r.gpu_flops;
        avail.gpu_mem -= r.gpu_mem;
        avail.mem -= r.mem;
        avail.cpu_cores -= r.cpu_cores;
    }
    return avail;
}

ResourcePool pool_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("pool: ") + e.what());
    }
    ResourcePool pool;
    try {
        pool.capacity.gpu_flops = j.value("gpu_flops", 0.0);
        pool.capacity.gpu_mem = j.value("gpu_mem", 0.0);
        pool.capacity.mem = j.value("mem", 0.0);
        pool.capacity.cpu_cores = j.value("cpu_cores", 0.0);
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("pool: ") + e.what());
    }
    return pool;
}

std::string to_json(const ResourcePool& pool) {
    json reservations = json::object();
    for (const auto& [id, r] : pool.reservations) {
        reservations[id] = {{"gpu_flops", r.gpu_flops},
                            {"gpu_mem", r.gpu_mem},
                            {"mem", r.mem},
                            {"cpu_cores", r.cpu_cores}};
    }
    const Resources avail = pool.available();
    json doc{{"gpu_flops", pool.capacity.gpu_flops},
             {"gpu_mem", pool.capacity.gpu_mem},
             {"mem", pool.capacity.mem},
             {"cpu_cores", pool.capacity.cpu_cores},
             {"available",
              {{"gpu_flops", avail.gpu_flops},
               {"gpu_mem", avail.gpu_mem},
               {"mem", avail.mem},
               {"cpu_cores", avail.cpu_cores}}},
             {"reservations", std::move(reservations)}};
    return doc.dump(2);
}

bool are_preconditions_met(const Preconditions& pre, const ResourcePool& pool) {
    const auto need = pre.as_array();
    const auto have = pool.available().as_array();
    for (std::size_t i = 0; i < need.size(); ++i) {
        if (need[i] > have[i]) {
            return false;
        }
    }
    return true;
}

RiskAssessment cog_evaluate_risk(const Preconditions& pre, const ResourcePool& pool,
                                 double threshold) {
    RiskAssessment a;
    const auto need = pre.as_array();
    const auto have = pool.available().as_array();
    std::array<double, 4> deficits{};
    for (std::size_t i = 0; i < need.size(); ++i) {
        deficits[i] = need[i] > 0.0 ? std::max(0.0, (need[i] - have[i]) / need[i]) : 0.0;
        a.max_deficit = std::max(a.max_deficit, deficits[i]);
    }
    a.deficits.gpu_flops = deficits[0];
    a.deficits.gpu_mem = deficits[1];
    a.deficits.mem = deficits[2];
    a.deficits.cpu_cores = deficits[3];
    a.verdict = a.max_deficit > threshold ? RiskVerdict::Abort : RiskVerdict::ProceedWithWarning;
    return a;
}

void provision(ResourcePool& pool, const Preconditions& pre, const std::string& deployment_id) {
    if (pool.reservations.count(deployment_id)) {
        throw InsufficientResources("deployment " + deployment_id + " already provisioned");
    }
    if (!are_preconditions_met(pre, pool)) {
        throw InsufficientResources("pool cannot satisfy preconditions for " + deployment_id);
    }
    pool.reservations[deployment_id] = pre;
    pool.released_ids.erase(deployment_id);
}

void release(ResourcePool& pool, const std::string& deployment_id) {
    auto it = pool.reservations.find(deployment_id);
    if (it != pool.reservations.end()) {
        pool.reservations.erase(it);
        pool.released_ids.insert(deployment_id);
        return;
    }
    if (pool.released_ids.count(deployment_id)) {
        return;  // release is idempotent
    }
    throw UnknownDeployment("no reservation for " + deployment_id);
}

const char* to_string(DeploymentState s) {
    switch (s) {
        case DeploymentState::Requested: return "Requested";
        case DeploymentState::NotFound: return "NotFound";
        case DeploymentState::PreconditionsChecked: return "PreconditionsChecked";
        case DeploymentState::RiskEvaluated: return "RiskEvaluated";
        case DeploymentState::KPMSubscribed: return "KPMSubscribed";
        case DeploymentState::Provisioned: return "Provisioned";
        case DeploymentState::Deployed: return "Deployed";
        case DeploymentState::ProbesActive: return "ProbesActive";
        case DeploymentState::Running: return "Running";
        case DeploymentState::Released: return "Released";
    }
    return "?";
}

std::string events_to_jsonl(const std::vector<Event>& events) {
    std::string out;
    for (const Event& e : events) {
        json j{{"ts", e.ts}, {"deployment_id", e.deployment_id}, {"from", e.from},
               {"to", e.to}, {"detail", e.detail}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

ProbeRecord SyntheticProbeSource::sample(std::uint64_t step) {
    rng::Generator g(rng::derive_seed(seed_, step));
    ProbeRecord r;
    r.latency_ms = 0.5 + 2.0 * g.uniform01();
    r.throughput_ips = 1000.0 / r.latency_ms;
    r.accuracy = 0.9 + 0.1 * g.uniform01();
    r.cpu_usage = 0.1 + 0.6 * g.uniform01();
    r.mem_usage = 0.2 + 0.4 * g.uniform01();
    return r;
}

Orchestrator::Orchestrator(ResourcePool pool, Clock clock)
    : pool_(std::move(pool)), clock_(std::move(clock)) {}

void Orchestrator::append_event(const std::string& deployment_id, const std::string& from,
                                const std::string& to, const std::string& detail) {
    std::uint64_t ts = clock_ ? clock_() : seq_;
    if (!events_.empty() && ts <= last_ts_) {
        ts = last_ts_ + 1;
    }
    last_ts_ = ts;
    ++seq_;
    events_.push_back(Event{ts, deployment_id, from, to, detail});
}

std::string Orchestrator::register_pipeline(const PipelineManifest& manifest) {
    manifest.validate();
    std::lock_guard<std::mutex> lock(mu_);
    registry_[manifest.id] = manifest;  // idempotent upsert
    return manifest.id;
}

PipelineManifest Orchestrator::get_pipeline(const std::string& id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = registry_.find(id);
    if (it == registry_.end()) {
        throw UnknownPipeline("no pipeline registered with id " + id);
    }
    return it->second;
}

bool Orchestrator::validate_task(const std::string& pipeline_id,
                                 const std::vector<Vertex>& subset) const {
    return validate_pipeline_task(get_pipeline(pipeline_id), subset);
}

Orchestrator::DeploymentOutcome Orchestrator::run_deployment(const std::string& pipeline_id,
                                                             double risk_threshold) {
    std::lock_guard<std::mutex> lock(mu_);
    Deployment dep;
    dep.id = "dep-" + std::to_string(next_deployment_++);
    dep.pipeline_id = pipeline_id;
    dep.state = DeploymentState::Requested;
    append_event(dep.id, "", "Requested", "deployPipeline(" + pipeline_id + ")");

    auto it = registry_.find(pipeline_id);
    if (it == registry_.end()) {
        dep.state = DeploymentState::NotFound;
        append_event(dep.id, "Requested", "NotFound",
                     "conflict notification: unknown pipeline " + pipeline_id);
        deployments_[dep.id] = dep;
        return DeploymentOutcome{dep.id, dep.state, std::nullopt};
    }
    const PipelineManifest& manifest = it->second;

    if (!are_preconditions_met(manifest.preconditions, pool_)) {
        dep.risk = cog_evaluate_risk(manifest.preconditions, pool_, risk_threshold);
        dep.state = DeploymentState::RiskEvaluated;
        append_event(dep.id, "Requested", "RiskEvaluated",
                     std::string("preconditions unmet; verdict ") +
                         (dep.risk->verdict == RiskVerdict::Abort ? "Abort"
                                                                  : "ProceedWithWarning") +
                         ", max deficit " + std::to_string(dep.risk->max_deficit));
        deployments_[dep.id] = dep;
        return DeploymentOutcome{dep.id, dep.state, dep.risk};
    }

    dep.state = DeploymentState::PreconditionsChecked;
    append_event(dep.id, "Requested", "PreconditionsChecked", "arePreConditionsMet() = true");

    dep.subscription.metrics = manifest.kpm_metrics;
    dep.subscription.period = kDefaultProbePeriod;
    dep.state = DeploymentState::KPMSubscribed;
    std::string metric_list;
    for (const std::string& name : manifest.kpm_metrics) {
        if (!metric_list.empty()) {
            metric_list += ',';
        }
        metric_list += name;
    }
    append_event(dep.id, "PreconditionsChecked", "KPMSubscribed",
                 "subscribeKPM(" + metric_list + ")");

    provision(pool_, manifest.preconditions, dep.id);
    dep.state = DeploymentState::Provisioned;
    append_event(dep.id, "KPMSubscribed", "Provisioned", "provisionResources()");

    dep.state = DeploymentState::Deployed;
    append_event(dep.id, "Provisioned", "Deployed", "pipeline deployed");

    dep.state = DeploymentState::ProbesActive;
    append_event(dep.id, "Deployed", "ProbesActive", "AIM probes activated");

    dep.state = DeploymentState::Running;
    append_event(dep.id, "ProbesActive", "Running", "runPipeline()");

    deployments_[dep.id] = dep;
    return DeploymentOutcome{dep.id, dep.state, std::nullopt};
}

std::vector<ProbeRecord> Orchestrator::collect_probe_metrics(const std::string& deployment_id,
                                                             double window,
                                                             ProbeSource* source) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = deployments_.find(deployment_id);
    if (it == deployments_.end()) {
        throw UnknownDeployment("no deployment " + deployment_id);
    }
    const Deployment& dep = it->second;
    if (dep.state != DeploymentState::ProbesActive && dep.state != DeploymentState::Running) {
        throw NotRunning("deployment " + deployment_id + " is in state " +
                         to_string(dep.state) + "; probes are not active");
    }
    const double period = dep.subscription.period > 0.0 ? dep.subscription.period : 1.0;
    const auto n = static_cast<std::uint64_t>(std::floor(window / period));
    std::vector<ProbeRecord> records;
    SyntheticProbeSource fallback(rng::derive_seed(0xA1737, std::hash<std::string>{}(dep.id)));
    ProbeSource& src = source ? *source : fallback;
    for (std::uint64_t step = 0; step < n; ++step) {
        ProbeRecord r = src.sample(step);
        r.ts = static_cast<double>(step + 1) * period;
        records.push_back(r);
    }
    return records;
}

void Orchestrator::release_deployment(const std::string& deployment_id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = deployments_.find(deployment_id);
    if (it == deployments_.end()) {
        throw UnknownDeployment("no deployment " + deployment_id);
    }
    if (it->second.state == DeploymentState::Released) {
        return;
    }
    release(pool_, deployment_id);
    const std::string from = to_string(it->second.state);
    it->second.state = DeploymentState::Released;
    append_event(deployment_id, from, "Released", "resources released");
}

Deployment Orchestrator::deployment(const std::string& deployment_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = deployments_.find(deployment_id);
    if (it == deployments_.end()) {
        throw UnknownDeployment("no deployment " + deployment_id);
    }
    return it->second;
}

std::vector<std::string> Orchestrator::deployment_ids() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<std::string> ids;
    for (const auto& [id, dep] : deployments_) {
        ids.push_back(id);
    }
    return ids;
}

ResourcePool Orchestrator::pool_snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    return pool_;
}

std::vector<Event> Orchestrator::event_log() const {
    std::lock_guard<std::mutex> lock(mu_);
    return events_;
}

}  // namespace xapp::plane
