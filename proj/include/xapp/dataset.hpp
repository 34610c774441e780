#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace xapp {

inline constexpr std::size_t kNumFeatures = 25;

// CSV column order after sample_id and label. Seven per-technology link
// metrics for WiFi, LiFi and 5G, then four scenario scalars.
extern const std::array<const char*, kNumFeatures> kFeatureNames;

// Indices of a few columns referenced by name elsewhere.
inline constexpr std::size_t kFeatTxWifi = 0;
inline constexpr std::size_t kFeatRxWifi = 1;
inline constexpr std::size_t kFeatOccupyWifi = 2;
inline constexpr std::size_t kFeatAlgorithm = 21;
inline constexpr std::size_t kFeatNumUes = 22;
inline constexpr std::size_t kFeatPacketSize = 23;
inline constexpr std::size_t kFeatDemandRate = 24;

// One labelled traffic observation; the classifier's input space.
struct FeatureVector {
    std::array<double, kNumFeatures> features{};
    int label = 1;  // application class, 1 or 2
    std::int64_t sample_id = 0;
};

struct Dataset {
    std::vector<FeatureVector> rows;

    bool empty() const { return rows.empty(); }
    std::size_t size() const { return rows.size(); }
};

// Dataset CSV: UTF-8, header row, 27 columns, floats rendered with 9
// significant digits. Identical datasets serialize to identical bytes.
std::string to_csv(const Dataset& ds);
Dataset from_csv(std::string_view text);

Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace xapp
