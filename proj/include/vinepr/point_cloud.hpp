#pragma once

#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "vinepr/common.hpp"

namespace vinepr {

/// An ordered set of 3-D points in meters, with optional per-point intensity.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<double> intensity;  // empty, or one value per point
    std::string frame_id;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_intensity() const { return !intensity.empty(); }

    void validate() const {
        for (const auto& p : points)
            if (!p.finite()) throw DataError("PointCloud: non-finite coordinate");
        if (has_intensity() && intensity.size() != points.size())
            throw DataError("PointCloud: intensity length " + std::to_string(intensity.size()) +
                            " != point count " + std::to_string(points.size()));
    }
};

struct NormalizationParams {
    double scale_factor = 60.0;  // S
    double max_range = 60.0;     // meters
    bool drop_zero_points = true;

    void validate() const {
        if (!(scale_factor > 0.0)) throw ConfigError("NormalizationParams: scale_factor must be > 0");
        if (!(max_range > 0.0)) throw ConfigError("NormalizationParams: max_range must be > 0");
    }
};

/// One scan paired with its ground pose: the unit of retrieval.
struct ScanRecord {
    PointCloud cloud;
    Vec3 pose;                      // world frame, meters
    std::optional<double> heading;  // radians
    double timestamp = 0.0;         // seconds
    std::string sequence_id;

    void validate() const {
        if (!pose.finite()) throw DataError("ScanRecord: non-finite pose");
    }
};

/// Drops (0,0,0) returns and points beyond max_range. Order preserved,
/// intensity rows dropped in lockstep. May yield an empty cloud; callers
/// that cannot work with one must check.
inline PointCloud filter_cloud(const PointCloud& cloud, const NormalizationParams& params) {
    params.validate();
    const double max_sq = params.max_range * params.max_range;
    PointCloud out;
    out.frame_id = cloud.frame_id;
    out.points.reserve(cloud.size());
    if (cloud.has_intensity()) out.intensity.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        if (params.drop_zero_points && p.x == 0.0 && p.y == 0.0 && p.z == 0.0) continue;
        if (p.squared_norm() > max_sq) continue;
        out.points.push_back(p);
        if (cloud.has_intensity()) out.intensity.push_back(cloud.intensity[i]);
    }
    return out;
}

inline Vec3 centroid(const PointCloud& cloud) {
    if (cloud.empty()) throw NumericError("centroid: empty cloud");
    Vec3 sum;
    for (const auto& p : cloud.points) sum = sum + p;
    return sum / static_cast<double>(cloud.size());
}

/// p_hat = (p - centroid) / S. The input is expected to be filtered already;
/// with max_range == S every output coordinate is bounded by 2 in magnitude.
inline PointCloud normalize_cloud(const PointCloud& cloud, const NormalizationParams& params) {
    params.validate();
    if (cloud.empty()) throw NumericError("normalize_cloud: empty cloud (centroid undefined)");
    const Vec3 mu = centroid(cloud);
    PointCloud out = cloud;
    for (auto& p : out.points) p = (p - mu) / params.scale_factor;
    return out;
}

namespace detail {
struct VoxelKey {
    std::int64_t x, y, z;
    bool operator==(const VoxelKey&) const = default;
};
struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const {
        std::uint64_t h = splitmix64(static_cast<std::uint64_t>(k.x));
        h = hash_combine(h, static_cast<std::uint64_t>(k.y));
        h = hash_combine(h, static_cast<std::uint64_t>(k.z));
        return static_cast<std::size_t>(h);
    }
};
inline VoxelKey voxel_key(const Vec3& p, double voxel_size) {
    return {static_cast<std::int64_t>(std::floor(p.x / voxel_size)),
            static_cast<std::int64_t>(std::floor(p.y / voxel_size)),
            static_cast<std::int64_t>(std::floor(p.z / voxel_size))};
}
}  // namespace detail

/// Keeps the first point (in input order) of every occupied voxel cell.
inline PointCloud quantize_cloud(const PointCloud& cloud, double voxel_size) {
    if (!(voxel_size > 0.0)) throw ConfigError("quantize_cloud: voxel_size must be > 0");
    std::unordered_set<detail::VoxelKey, detail::VoxelKeyHash> seen;
    seen.reserve(cloud.size());
    PointCloud out;
    out.frame_id = cloud.frame_id;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!seen.insert(detail::voxel_key(cloud.points[i], voxel_size)).second) continue;
        out.points.push_back(cloud.points[i]);
        if (cloud.has_intensity()) out.intensity.push_back(cloud.intensity[i]);
    }
    return out;
}

/// Greedy distance-based subsampling over the ground plane: the first record
/// is always kept, each later one only if it moved >= min_distance in (x, y)
/// from the last kept record.
inline std::vector<ScanRecord> subsample_trajectory(const std::vector<ScanRecord>& records,
                                                    double min_distance) {
    if (!(min_distance > 0.0)) throw ConfigError("subsample_trajectory: min_distance must be > 0");
    std::vector<ScanRecord> kept;
    for (const auto& rec : records) {
        if (kept.empty() || planar_distance(rec.pose, kept.back().pose) >= min_distance)
            kept.push_back(rec);
    }
    return kept;
}

}  // namespace vinepr
