#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace xapp::store {

// Hex SHA-256 of bytes.
std::string sha256_hex(std::string_view bytes);

inline constexpr std::string_view kUriScheme = "artifact://";

bool is_valid_uri(std::string_view uri);

// Content-addressed blob store under root/artifacts/<first2>/<digest>.
// Artifacts are immutable; put is idempotent and get re-verifies the digest.
class ArtifactStore {
public:
    explicit ArtifactStore(std::filesystem::path root);

    std::string put(std::string_view bytes);
    std::string get(const std::string& uri) const;
    bool contains(const std::string& uri) const;

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path path_for(std::string_view digest) const;
    std::filesystem::path root_;
};

struct MetricsRecord {
    std::uint64_t ts = 0;
    std::string run_id;
    std::string key;
    double value = 0.0;
};

// Append-only JSON-lines metrics log, one file per run id. Timestamps are
// a per-run monotone sequence so replays produce identical logs.
class MetricsLog {
public:
    MetricsLog(std::filesystem::path root, std::string run_id);

    void log(const std::string& key, double value);
    void log_metric(MetricsRecord record);
    std::vector<MetricsRecord> query() const;

    const std::filesystem::path& file() const { return file_; }

    static std::vector<MetricsRecord> query_metrics(const std::filesystem::path& root,
                                                    const std::string& run_id);

private:
    std::string run_id_;
    std::filesystem::path file_;
    std::uint64_t next_ts_ = 0;
};

}  // namespace xapp::store
