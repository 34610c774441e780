#include "xapp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "xapp/errors.hpp"

namespace xapp::sim {

using nlohmann::json;

SteeringPolicy policy_from_string(const std::string& name) {
    if (name == "priority_active_standby") return SteeringPolicy::PriorityActiveStandby;
    if (name == "smallest_delay") return SteeringPolicy::SmallestDelay;
    if (name == "load_balancing") return SteeringPolicy::LoadBalancing;
    if (name == "random_scheduling") return SteeringPolicy::RandomScheduling;
    throw InvalidConfig("unknown steering policy: " + name);
}

const char* to_string(SteeringPolicy policy) {
    switch (policy) {
        case SteeringPolicy::PriorityActiveStandby: return "priority_active_standby";
        case SteeringPolicy::SmallestDelay: return "smallest_delay";
        case SteeringPolicy::LoadBalancing: return "load_balancing";
        case SteeringPolicy::RandomScheduling: return "random_scheduling";
    }
    return "?";
}

void MobilityParams::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw InvalidConfig("mobility.alpha must be in [0,1]");
    }
    if (!(mean_speed >= 0.0)) {
        throw InvalidConfig("mobility.mean_speed must be >= 0");
    }
    if (!(sigma >= 0.0)) {
        throw InvalidConfig("mobility.sigma must be >= 0");
    }
}

void SimConfig::validate() const {
    if (num_ues < 1) throw InvalidConfig("num_ues must be >= 1");
    if (!(area_side > 0.0)) throw InvalidConfig("area_side must be > 0");
    if (duration < 1) throw InvalidConfig("duration must be >= 1");
    if (!(dt > 0.0)) throw InvalidConfig("dt must be > 0");
    if (!(app_mix >= 0.0 && app_mix <= 1.0)) throw InvalidConfig("app_mix must be in [0,1]");
    if (!(measurement_jitter >= 0.0 && measurement_jitter < 1.0)) {
        throw InvalidConfig("measurement_jitter must be in [0,1)");
    }
    if (!(anomaly_rate >= 0.0 && anomaly_rate <= 1.0)) {
        throw InvalidConfig("anomaly_rate must be in [0,1]");
    }
    mobility.validate();
}

SimConfig sim_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("sim config: ") + e.what());
    }
    SimConfig c;
    try {
        c.num_ues = j.at("num_ues").get<std::uint32_t>();
        c.area_side = j.at("area_side").get<double>();
        c.duration = j.at("duration").get<std::uint32_t>();
        c.dt = j.at("dt").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.policy = policy_from_string(j.at("policy").get<std::string>());
        const json& m = j.at("mobility");
        c.mobility.alpha = m.at("alpha").get<double>();
        c.mobility.mean_speed = m.at("mean_speed").get<double>();
        c.mobility.sigma = m.at("sigma").get<double>();
        c.app_mix = j.at("app_mix").get<double>();
        c.measurement_jitter = j.value("measurement_jitter", c.measurement_jitter);
        c.anomaly_rate = j.value("anomaly_rate", c.anomaly_rate);
    } catch (const json::exception& e) {
        throw MalformedDocument(std::string("sim config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string to_json(const SimConfig& c) {
    json j{{"num_ues", c.num_ues},
           {"area_side", c.area_side},
           {"duration", c.duration},
           {"dt", c.dt},
           {"seed", c.seed},
           {"policy", to_string(c.policy)},
           {"mobility",
            {{"alpha", c.mobility.alpha},
             {"mean_speed", c.mobility.mean_speed},
             {"sigma", c.mobility.sigma}}},
           {"app_mix", c.app_mix},
           {"measurement_jitter", c.measurement_jitter},
           {"anomaly_rate", c.anomaly_rate}};
    return j.dump(2);
}

namespace {

AccessPoint make_ap(Technology kind, double x, double y, double capacity, double base_delay,
                    double range, int priority, double path_loss_exp) {
    AccessPoint ap;
    ap.kind = kind;
    ap.x = x;
    ap.y = y;
    ap.capacity = capacity;
    ap.base_delay = base_delay;
    ap.range = range;
    ap.priority = priority;
    ap.path_loss_exp = path_loss_exp;
    // Reference SNR keeps the edge of coverage 2 dB above the floor, so the
    // range cutoff is the binding link-up condition.
    ap.snr_ref = kSnrFloorDb + 2.0 +
                 10.0 * path_loss_exp * std::log10(std::max(range, 1.0));
    return ap;
}

}  // namespace

ApTriple default_access_points(double area_side) {
    // WiFi covers the whole square and carries first priority, LiFi is a
    // short-range high-capacity island, 5G is the wide-area fallback.
    const double L = area_side;
    return ApTriple{
        make_ap(Technology::WiFi, 0.50 * L, 0.50 * L, 60e6, 5.0, 0.80 * L, 1, 2.8),
        make_ap(Technology::LiFi, 0.30 * L, 0.30 * L, 80e6, 2.0, 0.20 * L, 2, 3.5),
        make_ap(Technology::FiveG, 0.10 * L, 0.90 * L, 50e6, 12.0, 3.0 * L, 3, 2.0),
    };
}

UEState step_mobility(UEState ue, const MobilityParams& params, double dt,
                      double area_side, rng::Generator& g) {
    const double a = params.alpha;
    const double noise_scale = params.sigma * std::sqrt(std::max(0.0, 1.0 - a * a));
    // Draw both dimensions before any branch so the stream layout is fixed.
    const double wx = g.normal();
    const double wy = g.normal();
    ue.vx = a * ue.vx + (1.0 - a) * ue.mean_vx + noise_scale * wx;
    ue.vy = a * ue.vy + (1.0 - a) * ue.mean_vy + noise_scale * wy;

    ue.x += ue.vx * dt;
    ue.y += ue.vy * dt;
    // Reflect at the area boundary; velocity flips with the position.
    auto reflect = [area_side](double& pos, double& vel) {
        while (pos < 0.0 || pos > area_side) {
            if (pos < 0.0) {
                pos = -pos;
                vel = -vel;
            } else {
                pos = 2.0 * area_side - pos;
                vel = -vel;
            }
        }
    };
    reflect(ue.x, ue.vx);
    reflect(ue.y, ue.vy);
    return ue;
}

LinkTriple compute_link_state(const UEState& ue, const ApTriple& aps,
                              const std::array<double, kNumTechnologies>& offered_load) {
    LinkTriple links;
    for (std::size_t i = 0; i < kNumTechnologies; ++i) {
        const AccessPoint& ap = aps[i];
        LinkState& link = links[i];
        const double dx = ue.x - ap.x;
        const double dy = ue.y - ap.y;
        const double dist = std::sqrt(dx * dx + dy * dy);
        link.snr = ap.snr_ref - 10.0 * ap.path_loss_exp * std::log10(std::max(dist, 1.0));
        link.occupied = std::min(1.0, std::max(0.0, offered_load[i]) / ap.capacity);
        link.delay = ap.base_delay * (1.0 + link.occupied);
        link.loss = std::min(1.0, 0.001 + 0.08 * link.occupied * link.occupied);
        link.up = dist <= ap.range && link.snr >= kSnrFloorDb;
    }
    return links;
}

std::size_t LinkSelector::select(const LinkTriple& links, const ApTriple& aps,
                                 rng::Generator& g) {
    std::array<std::size_t, kNumTechnologies> up{};
    std::size_t n_up = 0;
    for (std::size_t i = 0; i < kNumTechnologies; ++i) {
        if (links[i].up) {
            up[n_up++] = i;
        }
    }
    if (n_up == 0) {
        throw NoLinkAvailable("all links down");
    }
    switch (policy_) {
        case SteeringPolicy::PriorityActiveStandby: {
            std::size_t best = up[0];
            for (std::size_t k = 1; k < n_up; ++k) {
                if (aps[up[k]].priority < aps[best].priority) {
                    best = up[k];
                }
            }
            return best;
        }
        case SteeringPolicy::SmallestDelay: {
            std::size_t best = up[0];
            for (std::size_t k = 1; k < n_up; ++k) {
                if (links[up[k]].delay < links[best].delay) {
                    best = up[k];
                }
            }
            return best;
        }
        case SteeringPolicy::LoadBalancing:
            return up[round_robin_++ % n_up];
        case SteeringPolicy::RandomScheduling:
            return up[g.uniform_int(n_up)];
    }
    throw NoLinkAvailable("unreachable");
}

namespace {

struct UEStreams {
    rng::Generator mobility;
    rng::Generator steering;
    rng::Generator measurement;
};

UEState init_ue(const SimConfig& config, std::uint32_t index, std::uint32_t n_class1,
                rng::Generator& g) {
    UEState ue;
    ue.x = g.uniform(0.0, config.area_side);
    ue.y = g.uniform(0.0, config.area_side);
    const double heading = g.uniform(0.0, 2.0 * std::numbers::pi);
    ue.mean_vx = config.mobility.mean_speed * std::cos(heading);
    ue.mean_vy = config.mobility.mean_speed * std::sin(heading);
    ue.vx = ue.mean_vx;
    ue.vy = ue.mean_vy;
    if (index < n_class1) {
        ue.app_class = 1;
        ue.packet_size = kClass1PacketBytes;
        ue.demand_rate = kClass1DemandBps;
    } else {
        ue.app_class = 2;
        ue.packet_size = kClass2PacketBytes;
        ue.demand_rate = kClass2DemandBps;
    }
    return ue;
}

}  // namespace

Dataset run_simulation(const SimConfig& config) {
    return run_simulation(config, default_access_points(config.area_side));
}

Dataset run_simulation(const SimConfig& config, const ApTriple& aps) {
    config.validate();
    {
        std::array<int, kNumTechnologies> prio_seen{};
        for (const AccessPoint& ap : aps) {
            if (!(ap.capacity > 0.0) || !(ap.range > 0.0)) {
                throw InvalidConfig("access point capacity and range must be > 0");
            }
            if (ap.priority < 1 || ap.priority > 3 || prio_seen[ap.priority - 1]++) {
                throw InvalidConfig("AP priorities must be a permutation of {1,2,3}");
            }
        }
    }

    const std::uint32_t n_class1 =
        static_cast<std::uint32_t>(std::floor(config.app_mix * config.num_ues + 0.5));

    std::vector<UEState> ues;
    std::vector<UEStreams> streams;
    std::vector<LinkSelector> selectors;
    ues.reserve(config.num_ues);
    for (std::uint32_t u = 0; u < config.num_ues; ++u) {
        streams.push_back(UEStreams{
            rng::Generator(rng::derive_seed(config.seed, 0x10000 + u)),
            rng::Generator(rng::derive_seed(config.seed, 0x20000 + u)),
            rng::Generator(rng::derive_seed(config.seed, 0x30000 + u)),
        });
        ues.push_back(init_ue(config, u, n_class1, streams[u].mobility));
        selectors.emplace_back(config.policy);
    }

    Dataset ds;
    ds.rows.reserve(static_cast<std::size_t>(config.duration) * config.num_ues);

    // Offered load per AP, fed by the previous window's steering decisions.
    std::array<double, kNumTechnologies> offered_load{};

    for (std::uint32_t step = 0; step < config.duration; ++step) {
        std::array<double, kNumTechnologies> next_load{};
        for (std::uint32_t u = 0; u < config.num_ues; ++u) {
            UEState& ue = ues[u];
            ue = step_mobility(ue, config.mobility, config.dt, config.area_side,
                               streams[u].mobility);
            LinkTriple links = compute_link_state(ue, aps, offered_load);
            std::size_t chosen;
            try {
                chosen = selectors[u].select(links, aps, streams[u].steering);
            } catch (const NoLinkAvailable&) {
                throw NoLinkAvailable("all links down for UE " + std::to_string(u) +
                                      " at step " + std::to_string(step));
            }
            next_load[chosen] += ue.demand_rate;

            LinkState& sel = links[chosen];
            sel.tx_bytes = ue.demand_rate * config.dt / 8.0;
            sel.rx_bytes = sel.tx_bytes * (1.0 - sel.loss);
            sel.throughput = sel.rx_bytes * 8.0 / config.dt;

            // The exported row carries measured values: every counter and
            // link metric is observed through window jitter. The draw order
            // is fixed so the stream layout never depends on the steering
            // outcome.
            rng::Generator& meas = streams[u].measurement;
            const double a = config.measurement_jitter;
            auto jitter = [&meas, a](double v) { return v * (1.0 + a * meas.uniform(-1.0, 1.0)); };

            // Degraded-telemetry windows: the estimators lose the true
            // packet/rate values and the counter window is partly missed.
            // All draws happen unconditionally to keep the stream layout
            // independent of the branch.
            const bool anomalous = meas.uniform01() < config.anomaly_rate;
            const double packet_guess = meas.uniform(100.0, 1500.0);
            const double demand_guess = meas.uniform(0.2e6, 2.6e6);
            const double counter_keep = meas.uniform(0.1, 0.6);
            const double scale = anomalous ? counter_keep : 1.0;

            FeatureVector row;
            row.sample_id = static_cast<std::int64_t>(step) * config.num_ues + u;
            row.label = ue.app_class;
            std::size_t f = 0;
            for (std::size_t t = 0; t < kNumTechnologies; ++t) {
                const double tx = scale * jitter(links[t].tx_bytes);
                const double rx = scale * jitter(links[t].rx_bytes);
                const double occ = std::clamp(
                    links[t].occupied + 0.1 * a * meas.uniform(-1.0, 1.0), 0.0, 1.0);
                const double delay = links[t].delay * (1.0 + 0.5 * a * meas.uniform(-1.0, 1.0));
                const double thr = scale * jitter(links[t].throughput);
                const double loss = std::clamp(
                    links[t].loss + 0.05 * a * meas.uniform(-1.0, 1.0), 0.0, 1.0);
                const double snr = links[t].snr + 20.0 * a * meas.uniform(-1.0, 1.0);
                row.features[f++] = tx;
                row.features[f++] = rx;
                row.features[f++] = occ;
                row.features[f++] = delay;
                row.features[f++] = thr;
                row.features[f++] = loss;
                row.features[f++] = snr;
            }
            row.features[f++] = static_cast<double>(config.policy);
            row.features[f++] = static_cast<double>(config.num_ues);
            row.features[f++] = anomalous ? packet_guess : jitter(ue.packet_size);
            row.features[f++] = anomalous ? demand_guess : jitter(ue.demand_rate);
            ds.rows.push_back(row);
        }
        offered_load = next_load;
    }
    return ds;
}

}  // namespace xapp::sim
