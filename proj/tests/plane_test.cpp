#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "xapp/errors.hpp"
#include "xapp/plane.hpp"

using namespace xapp;
using namespace xapp::plane;

namespace {

PipelineManifest chain_manifest(const std::string& id = "xapp-classifier") {
    PipelineManifest m;
    m.id = id;
    m.vertices = {Vertex::DataIngestion, Vertex::DataValidation, Vertex::ModelTrain,
                  Vertex::ModelAnalysis, Vertex::ModelExecution, Vertex::Monitoring};
    for (std::size_t i = 0; i + 1 < m.vertices.size(); ++i) {
        m.edges.emplace_back(m.vertices[i], m.vertices[i + 1]);
    }
    m.preconditions = Preconditions{1e12, 4e9, 8e9, 4};
    m.kpm_metrics = {"latency", "throughput", "accuracy", "resource_usage"};
    return m;
}

ResourcePool big_pool() {
    ResourcePool pool;
    pool.capacity = Resources{1e13, 3.2e10, 6.4e10, 32};
    return pool;
}

ResourcePool tiny_pool() {
    ResourcePool pool;
    pool.capacity = Resources{1e10, 1e9, 1e9, 2};
    return pool;
}

}  // namespace

TEST_CASE("manifest: register/get round-trip is exact") {
    Orchestrator orch(big_pool());
    const PipelineManifest m = chain_manifest();
    CHECK(orch.register_pipeline(m) == m.id);
    const PipelineManifest back = orch.get_pipeline(m.id);
    CHECK(to_json(back) == to_json(m));

    // Re-registration is an idempotent upsert.
    CHECK(orch.register_pipeline(m) == m.id);
    CHECK_THROWS_AS((void)orch.get_pipeline("absent"), UnknownPipeline);
}

TEST_CASE("manifest: out-degree above one is rejected") {
    PipelineManifest m = chain_manifest();
    m.edges.emplace_back(Vertex::DataIngestion, Vertex::ModelTrain);  // second out-edge
    CHECK_THROWS_AS(m.validate(), InvalidManifest);
}

TEST_CASE("manifest: cycles and undeclared vertices are rejected") {
    PipelineManifest m;
    m.id = "loop";
    m.vertices = {Vertex::DataIngestion, Vertex::DataValidation};
    m.edges = {{Vertex::DataIngestion, Vertex::DataValidation},
               {Vertex::DataValidation, Vertex::DataIngestion}};
    CHECK_THROWS_AS(m.validate(), InvalidManifest);

    PipelineManifest undeclared;
    undeclared.id = "undeclared";
    undeclared.vertices = {Vertex::DataIngestion};
    undeclared.edges = {{Vertex::DataIngestion, Vertex::Monitoring}};
    CHECK_THROWS_AS(undeclared.validate(), InvalidManifest);

    PipelineManifest dup;
    dup.id = "dup";
    dup.vertices = {Vertex::DataIngestion, Vertex::DataIngestion};
    CHECK_THROWS_AS(dup.validate(), InvalidManifest);
}

TEST_CASE("manifest: JSON documents round-trip") {
    const PipelineManifest m = chain_manifest();
    const PipelineManifest back = manifest_from_json(to_json(m));
    CHECK(to_json(back) == to_json(m));
    CHECK_THROWS_AS((void)manifest_from_json("{"), MalformedDocument);
    CHECK_THROWS_AS((void)manifest_from_json(R"({"id":"x","vertices":["Nope"],"edges":[],)"
                                             R"("preconditions":{}})"),
                    UnknownVertex);
}

TEST_CASE("pipeline task: contiguous directed paths validate") {
    const PipelineManifest m = chain_manifest();
    CHECK(validate_pipeline_task(m, {Vertex::DataIngestion, Vertex::DataValidation}));
    CHECK(validate_pipeline_task(m, {Vertex::ModelTrain}));
    CHECK(validate_pipeline_task(m, m.vertices));  // the full chain
    // Order inside the subset does not matter; connectivity does.
    CHECK(validate_pipeline_task(m, {Vertex::ModelAnalysis, Vertex::ModelTrain}));
    CHECK_FALSE(validate_pipeline_task(m, {Vertex::DataIngestion, Vertex::ModelTrain}));
    CHECK_FALSE(
        validate_pipeline_task(m, {Vertex::DataIngestion, Vertex::Monitoring}));
    CHECK_THROWS_AS((void)validate_pipeline_task(
                        PipelineManifest{.id = "p", .vertices = {Vertex::DataIngestion}},
                        {Vertex::Monitoring}),
                    UnknownVertex);
}

TEST_CASE("preconditions: closed comparison against availability") {
    ResourcePool pool = tiny_pool();
    CHECK(are_preconditions_met(Preconditions{}, pool));  // all zero
    CHECK(are_preconditions_met(pool.capacity, pool));    // exact fit
    Preconditions over = pool.capacity;
    over.mem += 1.0;  // one byte too many
    CHECK_FALSE(are_preconditions_met(over, pool));
}

TEST_CASE("cog risk: deficit arithmetic and verdicts") {
    ResourcePool pool;
    pool.capacity = Resources{0, 0, 5, 0};
    Preconditions need{0, 0, 10, 0};
    RiskAssessment a = cog_evaluate_risk(need, pool, 0.25);
    CHECK(a.deficits.mem == doctest::Approx(0.5));
    CHECK(a.max_deficit == doctest::Approx(0.5));
    CHECK(a.verdict == RiskVerdict::Abort);

    pool.capacity.mem = 9;
    a = cog_evaluate_risk(need, pool, 0.25);
    CHECK(a.deficits.mem == doctest::Approx(0.1));
    CHECK(a.verdict == RiskVerdict::ProceedWithWarning);

    a = cog_evaluate_risk(Preconditions{}, pool, 0.25);
    CHECK(a.max_deficit == 0.0);
    CHECK(a.verdict == RiskVerdict::ProceedWithWarning);
}

TEST_CASE("provision/release: inverse operations restore the pool") {
    ResourcePool pool = big_pool();
    const ResourcePool initial = pool;
    const Preconditions need{1e12, 4e9, 8e9, 4};
    provision(pool, need, "dep-a");
    CHECK(pool.available().cpu_cores == initial.capacity.cpu_cores - 4);
    release(pool, "dep-a");
    CHECK(pool.available().as_array() == initial.available().as_array());
    CHECK(pool.reservations.empty());

    // Double release is a no-op, unknown ids are errors.
    release(pool, "dep-a");
    CHECK_THROWS_AS(release(pool, "never-seen"), UnknownDeployment);
}

TEST_CASE("provision: capacity exhaustion raises InsufficientResources") {
    ResourcePool pool = tiny_pool();
    const Preconditions most{0, 0, 0.9e9, 0};
    provision(pool, most, "dep-1");
    CHECK_THROWS_AS(provision(pool, most, "dep-2"), InsufficientResources);
    // The failed provision must not leak a reservation.
    CHECK(pool.reservations.size() == 1);
}

TEST_CASE("deployment: success path emits the exact event order") {
    Orchestrator orch(big_pool());
    orch.register_pipeline(chain_manifest());
    const auto outcome = orch.run_deployment("xapp-classifier");
    CHECK(outcome.state == DeploymentState::Running);

    const auto events = orch.event_log();
    const std::vector<std::string> expected = {
        "Requested",  "PreconditionsChecked", "KPMSubscribed", "Provisioned",
        "Deployed",   "ProbesActive",         "Running"};
    REQUIRE(events.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(events[i].to == expected[i]);
        CHECK(events[i].deployment_id == outcome.deployment_id);
        if (i > 0) {
            CHECK(events[i].ts > events[i - 1].ts);
            CHECK(events[i].from == expected[i - 1]);
        }
    }
    // Resources are held while running.
    CHECK(orch.pool_snapshot().reservations.count(outcome.deployment_id) == 1);
}

TEST_CASE("deployment: unknown pipeline lands in NotFound with a conflict event") {
    Orchestrator orch(big_pool());
    const auto outcome = orch.run_deployment("ghost");
    CHECK(outcome.state == DeploymentState::NotFound);
    const auto events = orch.event_log();
    REQUIRE(events.size() == 2);
    CHECK(events[0].to == "Requested");
    CHECK(events[1].to == "NotFound");
    CHECK(events[1].detail.find("conflict") != std::string::npos);
    // No resources touched.
    CHECK(orch.pool_snapshot().reservations.empty());
}

TEST_CASE("deployment: unmet preconditions stop at RiskEvaluated") {
    Orchestrator orch(tiny_pool());
    orch.register_pipeline(chain_manifest());
    const auto outcome = orch.run_deployment("xapp-classifier", 0.25);
    CHECK(outcome.state == DeploymentState::RiskEvaluated);
    REQUIRE(outcome.risk.has_value());
    CHECK(outcome.risk->verdict == RiskVerdict::Abort);
    CHECK(outcome.risk->max_deficit > 0.25);

    const auto events = orch.event_log();
    REQUIRE(events.size() == 2);
    CHECK(events[0].to == "Requested");
    CHECK(events[1].to == "RiskEvaluated");
    CHECK(orch.pool_snapshot().reservations.empty());

    // A laxer threshold advises ProceedWithWarning but still halts.
    const auto warn = orch.run_deployment("xapp-classifier", 0.999);
    CHECK(warn.state == DeploymentState::RiskEvaluated);
    CHECK(warn.risk->verdict == RiskVerdict::ProceedWithWarning);
}

TEST_CASE("probes: sampling arithmetic and state guard") {
    Orchestrator orch(big_pool());
    orch.register_pipeline(chain_manifest());
    const auto running = orch.run_deployment("xapp-classifier");
    const auto records = orch.collect_probe_metrics(running.deployment_id, 10.0);
    CHECK(records.size() == 10);
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].latency_ms > 0.0);
        CHECK(records[i].throughput_ips > 0.0);
        if (i > 0) {
            CHECK(records[i].ts > records[i - 1].ts);
        }
    }
    // Identical windows replay identically.
    const auto again = orch.collect_probe_metrics(running.deployment_id, 10.0);
    REQUIRE(again.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(again[i].accuracy == records[i].accuracy);
    }

    Orchestrator blocked(tiny_pool());
    blocked.register_pipeline(chain_manifest());
    const auto halted = blocked.run_deployment("xapp-classifier");
    CHECK_THROWS_AS((void)blocked.collect_probe_metrics(halted.deployment_id, 5.0),
                    NotRunning);
    CHECK_THROWS_AS((void)blocked.collect_probe_metrics("ghost", 5.0), UnknownDeployment);
}

TEST_CASE("release_deployment restores the ledger and logs the transition") {
    Orchestrator orch(big_pool());
    orch.register_pipeline(chain_manifest());
    const auto outcome = orch.run_deployment("xapp-classifier");
    const auto before = orch.pool_snapshot().capacity.as_array();
    orch.release_deployment(outcome.deployment_id);
    CHECK(orch.deployment(outcome.deployment_id).state == DeploymentState::Released);
    CHECK(orch.pool_snapshot().available().as_array() == before);
    orch.release_deployment(outcome.deployment_id);  // idempotent
    const auto events = orch.event_log();
    CHECK(events.back().to == "Released");
}

TEST_CASE("resource conservation holds under randomized provision/release") {
    ResourcePool pool;
    pool.capacity = Resources{1000, 1000, 1000, 1000};
    rng::Generator g(314);
    std::vector<std::string> active;
    int issued = 0;
    for (int op = 0; op < 20000; ++op) {
        const bool do_provision = active.empty() || g.uniform01() < 0.55;
        if (do_provision) {
            Preconditions need;
            need.gpu_flops = static_cast<double>(g.uniform_int(200));
            need.gpu_mem = static_cast<double>(g.uniform_int(200));
            need.mem = static_cast<double>(g.uniform_int(200));
            need.cpu_cores = static_cast<double>(g.uniform_int(8));
            const std::string id = "dep-" + std::to_string(issued++);
            try {
                provision(pool, need, id);
                active.push_back(id);
            } catch (const InsufficientResources&) {
                // Expected when the pool is full.
            }
        } else {
            const std::size_t pick = g.uniform_int(active.size());
            release(pool, active[pick]);
            active.erase(active.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        // Conservation: available + sum(reservations) == capacity, and
        // availability never goes negative.
        Resources sum;
        for (const auto& [id, r] : pool.reservations) {
            sum.gpu_flops += r.gpu_flops;
            sum.gpu_mem += r.gpu_mem;
            sum.mem += r.mem;
            sum.cpu_cores += r.cpu_cores;
        }
        const auto avail = pool.available().as_array();
        const auto total = sum.as_array();
        const auto cap = pool.capacity.as_array();
        for (std::size_t i = 0; i < 4; ++i) {
            REQUIRE(avail[i] + total[i] == cap[i]);
            REQUIRE(avail[i] >= 0.0);
        }
        REQUIRE(pool.reservations.size() == active.size());
    }
}

TEST_CASE("pool JSON: capacity documents parse and serialize") {
    const std::string doc =
        R"({"gpu_flops": 1e12, "gpu_mem": 8e9, "mem": 1.6e10, "cpu_cores": 16})";
    ResourcePool pool = pool_from_json(doc);
    CHECK(pool.capacity.gpu_flops == doctest::Approx(1e12));
    CHECK(pool.capacity.cpu_cores == doctest::Approx(16));
    const std::string out = to_json(pool);
    CHECK(out.find("\"reservations\"") != std::string::npos);
    CHECK_THROWS_AS((void)pool_from_json("nope"), MalformedDocument);
}
