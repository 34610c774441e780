#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cxxabi.h>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "xapp/dataset.hpp"
#include "xapp/errors.hpp"
#include "xapp/explain.hpp"
#include "xapp/mlops.hpp"
#include "xapp/model.hpp"
#include "xapp/plane.hpp"
#include "xapp/sim.hpp"
#include "xapp/store.hpp"
#include "xapp/util.hpp"
#include "xapp/verify.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string error_type(const xapp::Error& e) {
    int status = 0;
    char* demangled = abi::__cxa_demangle(typeid(e).name(), nullptr, nullptr, &status);
    std::string name = status == 0 && demangled ? demangled : typeid(e).name();
    std::free(demangled);
    const auto pos = name.rfind("::");
    return pos == std::string::npos ? name : name.substr(pos + 2);
}

void emit(const json& doc) { std::cout << doc.dump(2) << std::endl; }

// --model accepts either an artifact URI or a plain file path.
std::string load_model_document(const xapp::store::ArtifactStore& st, const std::string& ref) {
    if (ref.rfind(std::string(xapp::store::kUriScheme), 0) == 0) {
        return st.get(ref);
    }
    return xapp::read_file(ref);
}

Eigen::VectorXd features_from_json(const std::string& text) {
    json j = json::parse(text);
    const json& arr = j.contains("features") ? j.at("features") : j;
    if (!arr.is_array() || arr.size() != xapp::kNumFeatures) {
        throw xapp::DimensionMismatch("input document must carry exactly " +
                                      std::to_string(xapp::kNumFeatures) + " features");
    }
    Eigen::VectorXd x(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        x(static_cast<Eigen::Index>(i)) = arr.at(i).get<double>();
    }
    return x;
}

// Plane registry and deployment records persisted under the store root so
// register/deploy/status compose across invocations.
struct PlaneState {
    fs::path dir;
    json registry = json::object();     // id -> manifest object
    json pool = json::object();         // capacity + reservations
    json deployments = json::array();   // {id, pipeline_id, state}

    static PlaneState load(const fs::path& root) {
        PlaneState s;
        s.dir = root / "plane";
        if (fs::exists(s.dir / "state.json")) {
            json doc = json::parse(xapp::read_file(s.dir / "state.json"));
            s.registry = doc.value("registry", json::object());
            s.pool = doc.value("pool", json::object());
            s.deployments = doc.value("deployments", json::array());
        }
        return s;
    }

    void save() const {
        json doc{{"registry", registry}, {"pool", pool}, {"deployments", deployments}};
        xapp::write_file_atomic(dir / "state.json", doc.dump(2));
    }

    std::size_t event_count() const {
        if (!fs::exists(dir / "events.jsonl")) {
            return 0;
        }
        const std::string text = xapp::read_file(dir / "events.jsonl");
        return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    }

    void append_events(const std::vector<xapp::plane::Event>& events) const {
        std::string text;
        if (fs::exists(dir / "events.jsonl")) {
            text = xapp::read_file(dir / "events.jsonl");
        }
        text += events_to_jsonl(events);
        xapp::write_file_atomic(dir / "events.jsonl", text);
    }
};

xapp::plane::ResourcePool pool_from_state(const PlaneState& state) {
    xapp::plane::ResourcePool pool;
    pool.capacity.gpu_flops = state.pool.value("gpu_flops", 0.0);
    pool.capacity.gpu_mem = state.pool.value("gpu_mem", 0.0);
    pool.capacity.mem = state.pool.value("mem", 0.0);
    pool.capacity.cpu_cores = state.pool.value("cpu_cores", 0.0);
    for (const auto& [id, r] : state.pool.value("reservations", json::object()).items()) {
        xapp::plane::Resources res;
        res.gpu_flops = r.value("gpu_flops", 0.0);
        res.gpu_mem = r.value("gpu_mem", 0.0);
        res.mem = r.value("mem", 0.0);
        res.cpu_cores = r.value("cpu_cores", 0.0);
        pool.reservations[id] = res;
    }
    for (const auto& id : state.pool.value("released", json::array())) {
        pool.released_ids.insert(id.get<std::string>());
    }
    return pool;
}

json pool_to_state(const xapp::plane::ResourcePool& pool) {
    json reservations = json::object();
    for (const auto& [id, r] : pool.reservations) {
        reservations[id] = {{"gpu_flops", r.gpu_flops}, {"gpu_mem", r.gpu_mem},
                            {"mem", r.mem}, {"cpu_cores", r.cpu_cores}};
    }
    json released = json::array();
    for (const std::string& id : pool.released_ids) {
        released.push_back(id);
    }
    return json{{"gpu_flops", pool.capacity.gpu_flops}, {"gpu_mem", pool.capacity.gpu_mem},
                {"mem", pool.capacity.mem}, {"cpu_cores", pool.capacity.cpu_cores},
                {"reservations", std::move(reservations)}, {"released", std::move(released)}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trustworthy xApp lifecycle harness"};
    app.require_subcommand(1);

    std::string artifact_dir = "./store";
    if (const char* env = std::getenv("ARTIFACT_DIR")) {
        artifact_dir = env;
    }
    app.add_option("--artifact-dir", artifact_dir, "Artifact store root");
    bool fixed_ts = false;
    app.add_flag("--fixed-ts", fixed_ts, "Logical timestamps for replayable outputs");
    unsigned threads = 4;
    app.add_option("--threads", threads, "Worker threads for per-sample computations");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Run the traffic scenario");
    std::string sim_config_path, sim_out;
    sim_cmd->add_option("--config", sim_config_path, "SimConfig JSON")->required();
    sim_cmd->add_option("--out", sim_out, "Output dataset CSV")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the application classifier");
    std::string train_data, train_config_path, train_out_dir = "runs";
    train_cmd->add_option("--data", train_data, "Dataset CSV")->required();
    train_cmd->add_option("--config", train_config_path, "TrainConfig JSON");
    train_cmd->add_option("--out-dir", train_out_dir, "Run output directory");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "Certified robustness bounds");
    std::string verify_model, verify_data, verify_out, verify_plot, verify_method = "crown";
    double verify_eps = 0.05;
    verify_cmd->add_option("--model", verify_model, "Model URI or file")->required();
    verify_cmd->add_option("--data", verify_data, "Test dataset CSV")->required();
    verify_cmd->add_option("--epsilon", verify_eps, "L-inf radius in normalized space");
    verify_cmd->add_option("--out", verify_out, "Full report JSON path");
    verify_cmd->add_option("--plot-data", verify_plot, "Per-sample bounds CSV path");
    verify_cmd->add_option("--method", verify_method, "crown or ibp")
        ->check(CLI::IsMember({"crown", "ibp"}));

    // explain
    auto* explain_cmd = app.add_subcommand("explain", "Feature importance ranking");
    std::string explain_model, explain_data, explain_out, explain_background;
    std::uint32_t explain_perms = 2000;
    std::size_t explain_samples = 128, explain_bg_rows = 100;
    std::uint64_t explain_seed = 17;
    explain_cmd->add_option("--model", explain_model, "Model URI or file")->required();
    explain_cmd->add_option("--data", explain_data, "Dataset CSV to explain")->required();
    explain_cmd->add_option("--permutations", explain_perms, "Permutations per sample");
    explain_cmd->add_option("--out", explain_out, "Ranking CSV path");
    explain_cmd->add_option("--samples", explain_samples, "Samples to explain");
    explain_cmd->add_option("--background-data", explain_background,
                            "Background CSV (defaults to --data)");
    explain_cmd->add_option("--background-rows", explain_bg_rows, "Background rows");
    explain_cmd->add_option("--seed", explain_seed, "Estimator seed");

    // plane
    auto* plane_cmd = app.add_subcommand("plane", "Deployment orchestration");
    plane_cmd->require_subcommand(1);
    auto* plane_register = plane_cmd->add_subcommand("register", "Register a pipeline manifest");
    std::string plane_manifest_path, plane_pool_path;
    plane_register->add_option("--manifest", plane_manifest_path, "Manifest JSON")->required();
    plane_register->add_option("--pool", plane_pool_path, "Resource pool JSON");
    auto* plane_deploy = plane_cmd->add_subcommand("deploy", "Deploy a registered pipeline");
    std::string plane_deploy_id;
    double plane_threshold = xapp::plane::Orchestrator::kDefaultRiskThreshold;
    plane_deploy->add_option("--id", plane_deploy_id, "Pipeline id")->required();
    plane_deploy->add_option("--pool", plane_pool_path, "Resource pool JSON (resets capacity)");
    plane_deploy->add_option("--threshold", plane_threshold, "COG abort threshold");
    auto* plane_status = plane_cmd->add_subcommand("status", "Show plane state");

    // pipeline
    auto* pipe_cmd = app.add_subcommand("pipeline", "MLOps pipeline runs");
    pipe_cmd->require_subcommand(1);
    auto* pipe_run = pipe_cmd->add_subcommand("run", "Execute a registered pipeline");
    std::string pipe_manifest_id, pipe_data, pipe_sim_config, pipe_train_config, pipe_criteria;
    bool pipe_auto_approve = false;
    pipe_run->add_option("--manifest", pipe_manifest_id, "Registered pipeline id")->required();
    pipe_run->add_option("--data", pipe_data, "Dataset CSV source");
    pipe_run->add_option("--sim-config", pipe_sim_config, "SimConfig JSON source");
    pipe_run->add_option("--train-config", pipe_train_config, "TrainConfig JSON");
    pipe_run->add_option("--criteria", pipe_criteria, "TrustCriteria JSON");
    pipe_run->add_flag("--auto-approve", pipe_auto_approve,
                       "Approve AwaitOperator outcomes without prompting");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "Online inference via a published xApp");
    std::string infer_xapp = "latest", infer_input;
    bool infer_explain = false;
    infer_cmd->add_option("--xapp", infer_xapp, "Package version or 'latest'");
    infer_cmd->add_option("--input", infer_input, "Raw feature vector JSON")->required();
    infer_cmd->add_flag("--explain", infer_explain, "Attach a Shapley report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        xapp::store::ArtifactStore st(artifact_dir);

        if (*sim_cmd) {
            const auto config = xapp::sim::sim_config_from_json(xapp::read_file(sim_config_path));
            const xapp::Dataset ds = xapp::sim::run_simulation(config);
            const std::string csv = xapp::to_csv(ds);
            xapp::write_file_atomic(sim_out, csv);
            emit(json{{"rows", ds.size()},
                      {"out", sim_out},
                      {"dataset_hash", xapp::store::sha256_hex(csv)}});
            return 0;
        }

        if (*train_cmd) {
            const std::string csv = xapp::read_file(train_data);
            const xapp::Dataset ds = xapp::from_csv(csv);
            xapp::model::TrainConfig cfg;
            if (!train_config_path.empty()) {
                cfg = xapp::model::train_config_from_json(xapp::read_file(train_config_path));
            }
            const auto result = xapp::model::train(ds, cfg);
            const xapp::model::ModelMetadata meta{cfg.seed, cfg,
                                                  xapp::store::sha256_hex(csv)};
            const std::string doc =
                xapp::model::save_model(result.model, result.normalizer, meta);
            const std::string uri = st.put(doc);
            const fs::path out_dir = fs::path(train_out_dir) / uri.substr(uri.size() - 12);
            xapp::write_file_atomic(out_dir / "model.json", doc);
            xapp::write_file_atomic(out_dir / "metrics.jsonl",
                                    xapp::model::metrics_to_jsonl(result.history));
            xapp::save_csv(result.split.train, out_dir / "train_split.csv");
            xapp::save_csv(result.split.val, out_dir / "val_split.csv");
            xapp::save_csv(result.split.test, out_dir / "test_split.csv");
            emit(json{{"model_uri", uri},
                      {"out_dir", out_dir.string()},
                      {"final_train_loss", result.history.back().loss},
                      {"val_accuracy", result.history.back().val_accuracy},
                      {"test_accuracy", xapp::model::evaluate(result.model, result.normalizer,
                                                              result.split.test)}});
            return 0;
        }

        if (*verify_cmd) {
            const auto loaded = xapp::model::load_model(load_model_document(st, verify_model));
            const xapp::Dataset ds = xapp::load_csv(verify_data);
            const xapp::verify::Method method = verify_method == "ibp"
                                                    ? xapp::verify::Method::Ibp
                                                    : xapp::verify::Method::Crown;
            const auto result = xapp::verify::separation_metric(
                loaded.model, loaded.normalizer, ds,
                xapp::verify::PerturbationSpec{verify_eps}, method, threads);
            if (!verify_out.empty()) {
                xapp::write_file_atomic(verify_out, xapp::verify::to_json(result));
            }
            if (!verify_plot.empty()) {
                xapp::write_file_atomic(verify_plot, xapp::verify::to_plot_csv(result));
            }
            emit(json{{"epsilon", result.epsilon},
                      {"n_test", result.n_test},
                      {"n_correct", result.n_correct},
                      {"n_separated", result.n_separated},
                      {"fraction", result.fraction},
                      {"ci_low", result.ci_low},
                      {"ci_high", result.ci_high},
                      {"method", xapp::verify::to_string(result.method)},
                      {"report", verify_out},
                      {"plot_data", verify_plot}});
            return 0;
        }

        if (*explain_cmd) {
            const auto loaded = xapp::model::load_model(load_model_document(st, explain_model));
            const xapp::Dataset ds = xapp::load_csv(explain_data);
            const xapp::Dataset bg_ds = explain_background.empty()
                                            ? ds
                                            : xapp::load_csv(explain_background);
            const auto background = xapp::explain::sample_background(
                bg_ds, loaded.normalizer, explain_bg_rows, explain_seed);
            xapp::explain::RankingConfig cfg;
            cfg.n_permutations = explain_perms;
            cfg.max_samples = explain_samples;
            cfg.seed = explain_seed;
            cfg.threads = threads;
            const auto ranking = xapp::explain::importance_ranking(
                loaded.model, loaded.normalizer, ds, background, cfg);
            if (!explain_out.empty()) {
                xapp::write_file_atomic(explain_out, xapp::explain::to_csv(ranking));
            }
            json top = json::array();
            for (std::size_t i = 0; i < ranking.ranking.size() && i < 5; ++i) {
                top.push_back(json{{"feature", ranking.ranking[i].name},
                                   {"mean_abs_phi", ranking.ranking[i].mean_abs_phi}});
            }
            emit(json{{"n_samples", ranking.n_samples},
                      {"n_permutations", ranking.n_permutations},
                      {"top_features", std::move(top)},
                      {"ranking_csv", explain_out}});
            return 0;
        }

        if (*plane_cmd) {
            PlaneState state = PlaneState::load(st.root());
            if (!plane_pool_path.empty()) {
                const auto pool =
                    xapp::plane::pool_from_json(xapp::read_file(plane_pool_path));
                state.pool = pool_to_state(pool);
            }
            if (*plane_register) {
                const auto manifest =
                    xapp::plane::manifest_from_json(xapp::read_file(plane_manifest_path));
                state.registry[manifest.id] = json::parse(xapp::plane::to_json(manifest));
                state.save();
                emit(json{{"registered", manifest.id}});
                return 0;
            }
            if (*plane_deploy) {
                xapp::plane::Orchestrator::Clock clock = nullptr;
                if (!fixed_ts) {
                    clock = [] {
                        return static_cast<std::uint64_t>(
                            std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::system_clock::now().time_since_epoch())
                                .count());
                    };
                }
                xapp::plane::Orchestrator orch(pool_from_state(state), clock);
                for (const auto& [id, m] : state.registry.items()) {
                    orch.register_pipeline(xapp::plane::manifest_from_json(m.dump()));
                }
                const auto outcome = orch.run_deployment(plane_deploy_id, plane_threshold);
                auto events = orch.event_log();
                if (fixed_ts) {
                    const std::size_t offset = state.event_count();
                    for (auto& e : events) {
                        e.ts += offset;
                    }
                }
                state.append_events(events);
                state.pool = pool_to_state(orch.pool_snapshot());
                // Deployment ids stay unique across invocations.
                const std::string dep_id =
                    "dep-" + std::to_string(state.deployments.size() + 1);
                state.deployments.push_back(json{
                    {"id", dep_id},
                    {"pipeline_id", plane_deploy_id},
                    {"state", xapp::plane::to_string(outcome.state)}});
                state.save();
                json doc{{"deployment_id", dep_id},
                         {"state", xapp::plane::to_string(outcome.state)}};
                if (outcome.risk) {
                    doc["risk"] = {
                        {"max_deficit", outcome.risk->max_deficit},
                        {"verdict", outcome.risk->verdict == xapp::plane::RiskVerdict::Abort
                                        ? "Abort"
                                        : "ProceedWithWarning"}};
                }
                emit(doc);
                return outcome.state == xapp::plane::DeploymentState::Running ? 0 : 1;
            }
            if (*plane_status) {
                emit(json{{"pipelines", state.registry},
                          {"pool", state.pool},
                          {"deployments", state.deployments},
                          {"events", state.event_count()}});
                return 0;
            }
        }

        if (*pipe_cmd && *pipe_run) {
            PlaneState state = PlaneState::load(st.root());
            if (!state.registry.contains(pipe_manifest_id)) {
                throw xapp::UnknownPipeline("no pipeline registered with id " +
                                            pipe_manifest_id);
            }
            const auto manifest = xapp::plane::manifest_from_json(
                state.registry[pipe_manifest_id].dump());
            if (pipe_data.empty() == pipe_sim_config.empty()) {
                throw xapp::InvalidConfig(
                    "pipeline run: exactly one of --data or --sim-config is required");
            }
            xapp::mlops::DataSource source;
            if (!pipe_data.empty()) {
                source = fs::path(pipe_data);
            } else {
                source = xapp::sim::sim_config_from_json(xapp::read_file(pipe_sim_config));
            }
            xapp::mlops::RunOptions options;
            options.threads = threads;
            options.ranking.threads = threads;
            if (!pipe_train_config.empty()) {
                options.train =
                    xapp::model::train_config_from_json(xapp::read_file(pipe_train_config));
            }
            if (!pipe_criteria.empty()) {
                options.criteria =
                    xapp::mlops::criteria_from_json(xapp::read_file(pipe_criteria));
            }
            xapp::mlops::OperatorChannel channel =
                [&](const xapp::mlops::GateDecision& d)
                -> std::optional<xapp::mlops::OperatorOverride> {
                if (pipe_auto_approve) {
                    return xapp::mlops::OperatorOverride{true, "auto"};
                }
                std::cerr << "gate outcome AwaitOperator:\n"
                          << xapp::mlops::to_json(d) << "\npublish? [y/N] " << std::flush;
                std::string reply;
                std::getline(std::cin, reply);
                const bool yes = !reply.empty() && (reply[0] == 'y' || reply[0] == 'Y');
                return xapp::mlops::OperatorOverride{yes, "cli-operator"};
            };
            const auto result = xapp::mlops::run_mlops(st, manifest, source, options, channel);
            xapp::write_file_atomic(st.root() / "runs" / result.run_id / "stages.jsonl",
                                    xapp::mlops::stage_log_to_jsonl(result.stage_log));
            emit(json::parse(xapp::mlops::to_json(result)));
            return result.decision.verdict == xapp::mlops::Verdict::Publish ? 0 : 1;
        }

        if (*infer_cmd) {
            std::optional<std::uint64_t> version;
            if (infer_xapp != "latest") {
                version = std::stoull(infer_xapp);
            }
            const auto package = xapp::mlops::get_package(st, version);
            const Eigen::VectorXd x = features_from_json(xapp::read_file(infer_input));
            const auto result = xapp::mlops::online_infer(st, package, x, infer_explain);
            json doc = json::parse(xapp::mlops::to_json(result));
            doc["xapp_version"] = package.version;
            emit(doc);
            return 0;
        }
    } catch (const xapp::Error& e) {
        emit(json{{"error", {{"type", error_type(e)}, {"message", e.what()}}}});
        return 1;
    } catch (const std::exception& e) {
        emit(json{{"error", {{"type", "runtime"}, {"message", e.what()}}}});
        return 1;
    }
    return 2;
}
