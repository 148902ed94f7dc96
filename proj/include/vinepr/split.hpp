#pragma once

#include <string>
#include <vector>

#include "vinepr/point_cloud.hpp"

namespace vinepr {

enum class SplitProtocol { zone, interleaved, run_based };

/// Train/test assignment over an ordered record list. Indices refer to the
/// input list; ids are the resolved (sequence_id, scan_index) pairs where
/// scan_index counts records within their sequence.
struct SplitSpec {
    SplitProtocol protocol = SplitProtocol::interleaved;
    std::vector<std::size_t> train_indices, test_indices;
    std::vector<std::pair<std::string, std::uint32_t>> train_ids, test_ids;
};

namespace detail {

inline void resolve_split_ids(const std::vector<ScanRecord>& records, SplitSpec& split) {
    std::vector<std::pair<std::string, std::uint32_t>> ids;
    ids.reserve(records.size());
    std::vector<std::pair<std::string, std::uint32_t>> counters;
    for (const auto& r : records) {
        std::uint32_t next = 0;
        bool found = false;
        for (auto& [seq, count] : counters)
            if (seq == r.sequence_id) {
                next = count++;
                found = true;
                break;
            }
        if (!found) {
            counters.push_back({r.sequence_id, 1});
            next = 0;
        }
        ids.push_back({r.sequence_id, next});
    }
    for (auto i : split.train_indices) split.train_ids.push_back(ids[i]);
    for (auto i : split.test_indices) split.test_ids.push_back(ids[i]);
}

}  // namespace detail

/// Zone protocol: a record is a test record iff its planar distance to any
/// zone center is within the radius. A split with an empty side is degenerate.
inline SplitSpec make_zone_split(const std::vector<ScanRecord>& records,
                                 const std::vector<Vec3>& zone_centers, double radius) {
    if (!(radius > 0.0)) throw ConfigError("make_zone_split: radius must be > 0");
    if (zone_centers.empty()) throw ConfigError("make_zone_split: no zone centers");
    SplitSpec split;
    split.protocol = SplitProtocol::zone;
    for (std::size_t i = 0; i < records.size(); ++i) {
        bool in_zone = false;
        for (const auto& c : zone_centers)
            in_zone |= planar_distance(records[i].pose, c) <= radius;
        (in_zone ? split.test_indices : split.train_indices).push_back(i);
    }
    if (split.test_indices.empty() || split.train_indices.empty())
        throw ConfigError("make_zone_split: degenerate split (train " +
                          std::to_string(split.train_indices.size()) + ", test " +
                          std::to_string(split.test_indices.size()) + ")");
    detail::resolve_split_ids(records, split);
    return split;
}

/// "One in, one out": even positions train, odd positions test (0-based).
inline SplitSpec make_interleaved_split(const std::vector<ScanRecord>& records) {
    if (records.size() < 2)
        throw ConfigError("make_interleaved_split: need at least 2 records");
    SplitSpec split;
    split.protocol = SplitProtocol::interleaved;
    for (std::size_t i = 0; i < records.size(); ++i)
        (i % 2 == 0 ? split.train_indices : split.test_indices).push_back(i);
    detail::resolve_split_ids(records, split);
    return split;
}

/// Run protocol: whole sequences become the test side.
inline SplitSpec make_run_split(const std::vector<ScanRecord>& records,
                                const std::vector<std::string>& test_sequence_ids) {
    if (test_sequence_ids.empty()) throw ConfigError("make_run_split: no test sequences named");
    for (const auto& id : test_sequence_ids) {
        bool present = false;
        for (const auto& r : records) present |= (r.sequence_id == id);
        if (!present) throw ConfigError("make_run_split: unknown sequence id '" + id + "'");
    }
    SplitSpec split;
    split.protocol = SplitProtocol::run_based;
    for (std::size_t i = 0; i < records.size(); ++i) {
        bool is_test = false;
        for (const auto& id : test_sequence_ids) is_test |= (records[i].sequence_id == id);
        (is_test ? split.test_indices : split.train_indices).push_back(i);
    }
    if (split.train_indices.empty())
        throw ConfigError("make_run_split: every record landed in the test side");
    detail::resolve_split_ids(records, split);
    return split;
}

}  // namespace vinepr
