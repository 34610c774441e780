#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "xapp/dataset.hpp"
#include "xapp/rng.hpp"

namespace xapp::sim {

enum class SteeringPolicy : int {
    PriorityActiveStandby = 0,
    SmallestDelay = 1,
    LoadBalancing = 2,
    RandomScheduling = 3,
};

SteeringPolicy policy_from_string(const std::string& name);
const char* to_string(SteeringPolicy policy);

struct MobilityParams {
    double alpha = 0.85;      // velocity memory factor in [0, 1]
    double mean_speed = 1.0;  // m/s
    double sigma = 0.3;       // m/s randomness scale

    void validate() const;
};

struct SimConfig {
    std::uint32_t num_ues = 10;
    double area_side = 70.0;     // metres; UEs move in [0, area_side]^2
    std::uint32_t duration = 100;  // steps
    double dt = 1.0;             // seconds per step
    std::uint64_t seed = 1;
    SteeringPolicy policy = SteeringPolicy::PriorityActiveStandby;
    MobilityParams mobility;
    double app_mix = 0.5;  // fraction of UEs on application class 1
    // Relative spread of the per-window measured counters around their
    // configured values (byte counts, rates, packet sizes). The draw comes
    // from the seeded per-UE streams, so runs stay reproducible.
    double measurement_jitter = 0.25;
    // Probability that a window's telemetry is degraded: the packet-size
    // and rate estimates are unreliable and part of the counter window is
    // missed. Also seeded, so runs replay bit-identically.
    double anomaly_rate = 0.08;

    void validate() const;
};

SimConfig sim_config_from_json(const std::string& text);
std::string to_json(const SimConfig& config);

// Fixed index order of the three access technologies; matches the feature
// column blocks (WiFi, LiFi, 5G).
enum class Technology : int { WiFi = 0, LiFi = 1, FiveG = 2 };
inline constexpr std::size_t kNumTechnologies = 3;

struct AccessPoint {
    Technology kind = Technology::WiFi;
    double x = 0.0, y = 0.0;
    double capacity = 1.0;    // bit/s
    double base_delay = 1.0;  // ms at zero load
    double range = 1.0;       // metres
    int priority = 1;         // 1 = highest
    double snr_ref = 0.0;     // dB at the 1 m reference distance
    double path_loss_exp = 2.0;
};

using ApTriple = std::array<AccessPoint, kNumTechnologies>;

// WiFi mid-range and first priority, LiFi short-range, 5G covering the
// whole area with lowest priority. Geometry scales with the area side.
ApTriple default_access_points(double area_side);

inline constexpr double kSnrFloorDb = 3.0;

// Application traffic profiles, distinct per class.
inline constexpr double kClass1PacketBytes = 200.0;
inline constexpr double kClass1DemandBps = 2e6;
inline constexpr double kClass2PacketBytes = 1200.0;
inline constexpr double kClass2DemandBps = 5e5;

struct UEState {
    double x = 0.0, y = 0.0;
    double vx = 0.0, vy = 0.0;
    double mean_vx = 0.0, mean_vy = 0.0;  // per-UE asymptotic velocity
    int app_class = 1;
    double packet_size = kClass1PacketBytes;  // bytes
    double demand_rate = kClass1DemandBps;    // bit/s
};

struct LinkState {
    bool up = false;
    double delay = 0.0;       // ms
    double occupied = 0.0;    // [0, 1]
    double tx_bytes = 0.0;    // per window
    double rx_bytes = 0.0;    // per window
    double throughput = 0.0;  // bit/s delivered
    double loss = 0.0;        // [0, 1]
    double snr = 0.0;         // dB
};

using LinkTriple = std::array<LinkState, kNumTechnologies>;

// Gauss-Markov velocity update followed by a position step, reflecting at
// the area boundary:
//   v' = alpha*v + (1-alpha)*mu + sigma*sqrt(1-alpha^2)*w,  w ~ N(0,1)
UEState step_mobility(UEState ue, const MobilityParams& params, double dt,
                      double area_side, rng::Generator& g);

// Distance/load channel model. Links report delay, occupancy, loss and SNR
// whether or not they are up; up requires distance <= range and SNR above
// the floor.
LinkTriple compute_link_state(const UEState& ue, const ApTriple& aps,
                              const std::array<double, kNumTechnologies>& offered_load);

// Steering decision for one UE-window. LoadBalancing keeps its round-robin
// position across calls.
class LinkSelector {
public:
    explicit LinkSelector(SteeringPolicy policy) : policy_(policy) {}

    // Index into the link triple. Throws NoLinkAvailable if all are down.
    std::size_t select(const LinkTriple& links, const ApTriple& aps, rng::Generator& g);

private:
    SteeringPolicy policy_;
    std::uint64_t round_robin_ = 0;
};

// Full scenario run; a pure function of the config (and AP layout), so
// repeated runs serialize to byte-identical CSV.
Dataset run_simulation(const SimConfig& config);
Dataset run_simulation(const SimConfig& config, const ApTriple& aps);

}  // namespace xapp::sim
