#include "xapp/store.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "xapp/errors.hpp"
#include "xapp/util.hpp"

namespace xapp::store {

using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out(static_cast<std::size_t>(len) * 2, '0');
    for (unsigned int i = 0; i < len; ++i) {
        out[2 * i] = hex[digest[i] >> 4];
        out[2 * i + 1] = hex[digest[i] & 0xf];
    }
    return out;
}

bool is_valid_uri(std::string_view uri) {
    if (uri.substr(0, kUriScheme.size()) != kUriScheme) {
        return false;
    }
    std::string_view digest = uri.substr(kUriScheme.size());
    if (digest.size() != 64) {
        return false;
    }
    for (char c : digest) {
        bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
        if (!ok) {
            return false;
        }
    }
    return true;
}

namespace {

std::string_view digest_of(const std::string& uri) {
    if (!is_valid_uri(uri)) {
        throw MalformedURI("not an artifact URI: " + uri);
    }
    return std::string_view(uri).substr(kUriScheme.size());
}

}  // namespace

ArtifactStore::ArtifactStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_ / "artifacts");
}

std::filesystem::path ArtifactStore::path_for(std::string_view digest) const {
    return root_ / "artifacts" / std::string(digest.substr(0, 2)) / std::string(digest);
}

std::string ArtifactStore::put(std::string_view bytes) {
    std::string digest = sha256_hex(bytes);
    auto path = path_for(digest);
    if (!std::filesystem::exists(path)) {
        write_file_atomic(path, bytes);
    }
    return std::string(kUriScheme) + digest;
}

std::string ArtifactStore::get(const std::string& uri) const {
    auto digest = digest_of(uri);
    auto path = path_for(digest);
    if (!std::filesystem::exists(path)) {
        throw UnknownArtifact("no artifact " + uri);
    }
    std::string bytes = read_file(path);
    if (sha256_hex(bytes) != digest) {
        throw UnknownArtifact("artifact digest mismatch for " + uri);
    }
    return bytes;
}

bool ArtifactStore::contains(const std::string& uri) const {
    return std::filesystem::exists(path_for(digest_of(uri)));
}

MetricsLog::MetricsLog(std::filesystem::path root, std::string run_id)
    : run_id_(std::move(run_id)), file_(root / "runs" / run_id_ / "metrics.jsonl") {
    std::filesystem::create_directories(file_.parent_path());
    if (std::filesystem::exists(file_)) {
        next_ts_ = query().size();
    }
}

void MetricsLog::log(const std::string& key, double value) {
    log_metric(MetricsRecord{0, run_id_, key, value});
}

void MetricsLog::log_metric(MetricsRecord record) {
    record.ts = next_ts_++;
    record.run_id = run_id_;
    json j{{"ts", record.ts}, {"run_id", record.run_id}, {"key", record.key},
           {"value", record.value}};
    std::ofstream out(file_, std::ios::app);
    if (!out) {
        throw Error("cannot append to metrics log: " + file_.string());
    }
    out << j.dump() << '\n';
}

std::vector<MetricsRecord> MetricsLog::query() const {
    return query_metrics(file_.parent_path().parent_path().parent_path(), run_id_);
}

std::vector<MetricsRecord> MetricsLog::query_metrics(const std::filesystem::path& root,
                                                     const std::string& run_id) {
    auto file = root / "runs" / run_id / "metrics.jsonl";
    std::vector<MetricsRecord> out;
    if (!std::filesystem::exists(file)) {
        return out;
    }
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        json j = json::parse(line);
        out.push_back(MetricsRecord{j.at("ts").get<std::uint64_t>(),
                                    j.at("run_id").get<std::string>(),
                                    j.at("key").get<std::string>(),
                                    j.at("value").get<double>()});
    }
    return out;
}

}  // namespace xapp::store
