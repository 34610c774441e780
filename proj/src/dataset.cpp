#include "xapp/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "xapp/errors.hpp"
#include "xapp/util.hpp"

namespace xapp {

const std::array<const char*, kNumFeatures> kFeatureNames = {
    "TX_WIFI",     "RX_WIFI",     "OCCUPY_WIFI", "DELAY_WIFI", "THROUGHPUT_WIFI",
    "LOSS_WIFI",   "SNR_WIFI",    "TX_LIFI",     "RX_LIFI",    "OCCUPY_LIFI",
    "DELAY_LIFI",  "THROUGHPUT_LIFI", "LOSS_LIFI", "SNR_LIFI",  "TX_5G",
    "RX_5G",       "OCCUPY_5G",   "DELAY_5G",    "THROUGHPUT_5G", "LOSS_5G",
    "SNR_5G",      "ALGORITHM",   "NUM_UES",     "PACKET_SIZE", "DEMAND_RATE",
};

namespace {

std::string header_line() {
    std::string h = "sample_id,label";
    for (const char* name : kFeatureNames) {
        h += ',';
        h += name;
    }
    return h;
}

double parse_double(std::string_view field, std::size_t line_no) {
    // std::from_chars<double> is incomplete in libstdc++ 11 for some forms;
    // strtod handles the full %.9g output range.
    std::string tmp(field);
    char* end = nullptr;
    double v = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size() || tmp.empty()) {
        throw MalformedDocument("dataset CSV: bad number '" + tmp + "' at line " +
                                std::to_string(line_no));
    }
    if (!std::isfinite(v)) {
        throw MalformedDocument("dataset CSV: non-finite value at line " +
                                std::to_string(line_no));
    }
    return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace

std::string to_csv(const Dataset& ds) {
    std::string out = header_line();
    out += '\n';
    for (const FeatureVector& row : ds.rows) {
        out += std::to_string(row.sample_id);
        out += ',';
        out += std::to_string(row.label);
        for (double f : row.features) {
            out += ',';
            out += format_g9(f);
        }
        out += '\n';
    }
    return out;
}

Dataset from_csv(std::string_view text) {
    Dataset ds;
    std::size_t line_no = 0;
    std::size_t start = 0;
    const std::string expected_header = header_line();
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (line.empty()) {
            continue;
        }
        if (line_no == 1) {
            if (line != expected_header) {
                throw MalformedDocument("dataset CSV: unexpected header");
            }
            continue;
        }
        auto fields = split_fields(line);
        if (fields.size() != kNumFeatures + 2) {
            throw MalformedDocument("dataset CSV: expected " +
                                    std::to_string(kNumFeatures + 2) + " columns, got " +
                                    std::to_string(fields.size()) + " at line " +
                                    std::to_string(line_no));
        }
        FeatureVector row;
        row.sample_id = static_cast<std::int64_t>(parse_double(fields[0], line_no));
        double label = parse_double(fields[1], line_no);
        if (label != 1.0 && label != 2.0) {
            throw MalformedDocument("dataset CSV: label must be 1 or 2 at line " +
                                    std::to_string(line_no));
        }
        row.label = static_cast<int>(label);
        for (std::size_t i = 0; i < kNumFeatures; ++i) {
            row.features[i] = parse_double(fields[i + 2], line_no);
        }
        ds.rows.push_back(row);
    }
    if (line_no == 0) {
        throw MalformedDocument("dataset CSV: empty document");
    }
    return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
    return from_csv(read_file(path));
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    write_file_atomic(path, to_csv(ds));
}

}  // namespace xapp
