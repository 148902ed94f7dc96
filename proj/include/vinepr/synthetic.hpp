#pragma once

#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vinepr/dataset.hpp"
#include "vinepr/pcd.hpp"
#include "vinepr/point_cloud.hpp"

namespace vinepr {

namespace detail {

constexpr double kSensorHeight = 0.8;      // meters above the ground pose
constexpr double kCanopyWireHeight = 1.2;  // canopy cluster center height
constexpr double kCanopySigmaXY = 0.95;    // canopy blob spread, meters; wide
constexpr double kCanopySigmaZ = 0.55;     // enough to blur station identity
constexpr double kTrunkHeightMin = 0.8;  // per-plant trunk height range
constexpr double kTrunkHeightMax = 3.2;
constexpr int kTrunkPointsMin = 4;  // per-plant trunk return budget
constexpr int kTrunkPointsMax = 12;
constexpr double kPlantJitterX = 0.45;    // station jitter, fraction of plant_spacing
constexpr double kPlantJitterY = 0.25;    // fraction of row_spacing
constexpr double kMissingPlantRate = 0.22;  // vacant stations (dead or removed vines)

}  // namespace detail

/// Parallel vine rows along +x, nominally one plant every plant_spacing
/// meters with a seeded per-plant station jitter. Plant structure (position,
/// trunk height, point budget) is a deterministic function of (seed, plant
/// index), so it persists across scans like real geometry, while the returns
/// themselves are resampled per scan like a real sensor.
struct VineyardSpec {
    int num_rows = 5;
    double row_length = 50.0;    // meters
    double row_spacing = 2.5;    // meters between rows (y axis)
    double plant_spacing = 1.5;  // meters between plants (x axis)
    int canopy_density = 40;     // canopy points per plant at season 1
    double season = 0.0;         // 0 bare winter vines .. 1 full summer canopy
    double grass_height = 0.15;  // meters; 0 disables grass returns
    double noise_sigma = 0.0;    // meters, isotropic Gaussian position noise
    std::uint64_t seed = 0;
    double sensor_range = 60.0;  // meters; effective range is min(60, this)
    double grass_density = 1.0;  // grass returns per m^2 inside the range disc

    void validate() const {
        if (num_rows < 1) throw ConfigError("VineyardSpec: num_rows must be >= 1");
        if (!(row_length > 0.0)) throw ConfigError("VineyardSpec: row_length must be > 0");
        if (!(row_spacing > 0.0)) throw ConfigError("VineyardSpec: row_spacing must be > 0");
        if (!(plant_spacing > 0.0)) throw ConfigError("VineyardSpec: plant_spacing must be > 0");
        if (canopy_density < 0) throw ConfigError("VineyardSpec: canopy_density must be >= 0");
        if (!(season >= 0.0 && season <= 1.0))
            throw ConfigError("VineyardSpec: season must be in [0, 1]");
        if (!(grass_height >= 0.0)) throw ConfigError("VineyardSpec: grass_height must be >= 0");
        if (!(noise_sigma >= 0.0)) throw ConfigError("VineyardSpec: noise_sigma must be >= 0");
        if (!(sensor_range > 0.0)) throw ConfigError("VineyardSpec: sensor_range must be > 0");
        if (!(grass_density >= 0.0)) throw ConfigError("VineyardSpec: grass_density must be >= 0");
    }

    int plants_per_row() const {
        return static_cast<int>(std::floor(row_length / plant_spacing)) + 1;
    }
    double effective_range() const { return std::min(sensor_range, 60.0); }

    /// Closed-form ceiling on generate_scan output size.
    std::size_t max_points_per_scan() const {
        const auto plants = static_cast<std::size_t>(num_rows) *
                            static_cast<std::size_t>(plants_per_row());
        const std::size_t per_plant = static_cast<std::size_t>(detail::kTrunkPointsMax) +
                                      static_cast<std::size_t>(canopy_density);
        const double disc = std::numbers::pi * effective_range() * effective_range();
        return plants * per_plant + static_cast<std::size_t>(std::llround(grass_density * disc));
    }
};

namespace detail {

struct PlantShape {
    double height;
    int trunk_points;
};

inline double unit_from_hash(std::uint64_t h) {
    return static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53;  // [0, 1)
}

/// World-persistent per-plant structure, independent of the sensor pose.
inline PlantShape plant_shape(const VineyardSpec& spec, int row, int plant) {
    std::uint64_t h = hash_combine(spec.seed, 0x9ea7ULL);
    h = hash_combine(h, static_cast<std::uint64_t>(row));
    h = hash_combine(h, static_cast<std::uint64_t>(plant));
    PlantShape s;
    s.height = kTrunkHeightMin + unit_from_hash(h) * (kTrunkHeightMax - kTrunkHeightMin);
    s.trunk_points = kTrunkPointsMin +
                     static_cast<int>(unit_from_hash(h ^ 0xabcdULL) *
                                      (kTrunkPointsMax - kTrunkPointsMin + 1));
    if (s.trunk_points > kTrunkPointsMax) s.trunk_points = kTrunkPointsMax;
    return s;
}

inline std::uint64_t scan_key(const VineyardSpec& spec, const Vec3& pose,
                              std::optional<double> heading) {
    std::uint64_t h = hash_combine(spec.seed, 0x5ca9ULL);
    h = hash_combine(h, hash_double(pose.x));
    h = hash_combine(h, hash_double(pose.y));
    h = hash_combine(h, hash_double(pose.z));
    h = hash_combine(h, hash_double(heading.value_or(0.0)));
    return h;
}

}  // namespace detail

/// Ground station of one plant: the nominal grid node plus the seeded jitter
/// that makes each station unique, like a real vineyard.
inline Vec3 plant_position(const VineyardSpec& spec, int row, int plant) {
    std::uint64_t h = hash_combine(spec.seed, 0x9157ULL);
    h = hash_combine(h, static_cast<std::uint64_t>(row));
    h = hash_combine(h, static_cast<std::uint64_t>(plant));
    const double jx = (detail::unit_from_hash(h) - 0.5) * 2.0 * detail::kPlantJitterX *
                      spec.plant_spacing;
    const double jy = (detail::unit_from_hash(h ^ 0x77aaULL) - 0.5) * 2.0 *
                      detail::kPlantJitterY * spec.row_spacing;
    return {plant * spec.plant_spacing + jx, row * spec.row_spacing + jy, 0.0};
}

/// Vacant stations (dead or removed vines) leave gaps whose pattern anchors
/// a location along otherwise repetitive rows.
inline bool plant_present(const VineyardSpec& spec, int row, int plant) {
    std::uint64_t h = hash_combine(spec.seed, 0xdeadULL);
    h = hash_combine(h, static_cast<std::uint64_t>(row));
    h = hash_combine(h, static_cast<std::uint64_t>(plant));
    return detail::unit_from_hash(h) >= detail::kMissingPlantRate;
}

/// Simulates one scan: trunk returns resampled along each visible plant's
/// vertical segment, canopy blobs scaled by season, grass returns inside the
/// range disc (clipped to the field plus a margin), Gaussian position noise.
/// Points are expressed in the sensor frame (pose plus mount height, rotated
/// by heading) and range-limited. Deterministic per (spec.seed, pose).
inline PointCloud generate_scan(const VineyardSpec& spec, const Vec3& pose,
                                std::optional<double> heading = std::nullopt) {
    spec.validate();
    const double range = spec.effective_range();
    const double range_sq = range * range;
    const Vec3 sensor{pose.x, pose.y, pose.z + detail::kSensorHeight};
    const double h = heading.value_or(0.0);
    const double cos_h = std::cos(-h), sin_h = std::sin(-h);
    const std::uint64_t key = detail::scan_key(spec, pose, heading);

    PointCloud cloud;
    cloud.frame_id = "sensor";
    auto emit_world_point = [&](Vec3 world) {
        const Vec3 rel = world - sensor;
        const Vec3 local{rel.x * cos_h - rel.y * sin_h, rel.x * sin_h + rel.y * cos_h, rel.z};
        if (local.squared_norm() <= range_sq) cloud.points.push_back(local);
    };

    const int canopy_points = static_cast<int>(std::lround(spec.canopy_density * spec.season));
    const int plants = spec.plants_per_row();
    for (int row = 0; row < spec.num_rows; ++row) {
        for (int plant = 0; plant < plants; ++plant) {
            if (!plant_present(spec, row, plant)) continue;
            const Vec3 station = plant_position(spec, row, plant);
            const double x = station.x, y = station.y;
            // quick planar reject with slack for canopy spread and noise
            const double dx = x - pose.x, dy = y - pose.y;
            const double slack = 3.0 * (detail::kCanopySigmaXY + spec.noise_sigma) + 1.0;
            if (dx * dx + dy * dy > (range + slack) * (range + slack)) continue;

            const detail::PlantShape shape = detail::plant_shape(spec, row, plant);
            std::mt19937_64 rng(hash_combine(hash_combine(key, static_cast<std::uint64_t>(row)),
                                             static_cast<std::uint64_t>(plant)));
            auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
            std::normal_distribution<double> noise(0.0, spec.noise_sigma);
            auto jitter = [&](Vec3 p) {
                if (spec.noise_sigma > 0.0)
                    p = p + Vec3{noise(rng), noise(rng), noise(rng)};
                return p;
            };
            for (int t = 0; t < shape.trunk_points; ++t)
                emit_world_point(jitter({x, y, unit() * shape.height}));
            if (canopy_points > 0) {
                std::normal_distribution<double> blob_xy(0.0, detail::kCanopySigmaXY);
                std::normal_distribution<double> blob_z(0.0, detail::kCanopySigmaZ);
                for (int c = 0; c < canopy_points; ++c)
                    emit_world_point(jitter({x + blob_xy(rng), y + blob_xy(rng),
                                             detail::kCanopyWireHeight + blob_z(rng)}));
            }
        }
    }

    if (spec.grass_height > 0.0 && spec.grass_density > 0.0) {
        const double disc_area = std::numbers::pi * range * range;
        const auto count = static_cast<long long>(std::llround(spec.grass_density * disc_area));
        std::mt19937_64 rng(hash_combine(key, 0x6ea55ULL));
        auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        const double margin = 2.0;
        const double field_y = (spec.num_rows - 1) * spec.row_spacing;
        for (long long i = 0; i < count; ++i) {
            const double r = range * std::sqrt(unit());
            const double theta = 2.0 * std::numbers::pi * unit();
            const double z = unit() * spec.grass_height;
            Vec3 p{pose.x + r * std::cos(theta), pose.y + r * std::sin(theta), z};
            if (spec.noise_sigma > 0.0) p = p + Vec3{noise(rng), noise(rng), noise(rng)};
            if (p.x < -margin || p.x > spec.row_length + margin || p.y < -margin ||
                p.y > field_y + margin)
                continue;  // grass exists only in and around the field
            emit_world_point(p);
        }
    }
    return cloud;
}

/// Walks the listed row centerlines at a fixed step (1 m/s), one scan per
/// pose. Reversed traversals visit the same poses in reverse order with the
/// heading flipped by pi. start_offset shifts every station along the row,
/// for revisits that do not align with an earlier pass.
inline std::vector<ScanRecord> generate_traversal(const VineyardSpec& spec,
                                                  const std::vector<int>& row_indices, double step,
                                                  bool reversed = false,
                                                  const std::string& sequence_id = "run1",
                                                  double start_time = 0.0,
                                                  double start_offset = 0.0) {
    spec.validate();
    if (!(step > 0.0)) throw ConfigError("generate_traversal: step must be > 0");
    if (row_indices.empty()) throw ConfigError("generate_traversal: empty row list");
    if (start_offset < 0.0 || start_offset > spec.row_length)
        throw ConfigError("generate_traversal: start_offset outside the row");
    for (int r : row_indices)
        if (r < 0 || r >= spec.num_rows)
            throw ConfigError("generate_traversal: row index " + std::to_string(r) +
                              " out of range");

    const int per_row =
        static_cast<int>(std::floor((spec.row_length - start_offset) / step)) + 1;
    std::vector<Vec3> poses;
    for (int r : row_indices)
        for (int i = 0; i < per_row; ++i)
            poses.push_back({start_offset + i * step, r * spec.row_spacing, 0.0});
    if (reversed) std::reverse(poses.begin(), poses.end());
    const double heading = reversed ? std::numbers::pi : 0.0;

    std::vector<ScanRecord> records;
    records.reserve(poses.size());
    for (std::size_t k = 0; k < poses.size(); ++k) {
        ScanRecord rec;
        rec.pose = poses[k];
        rec.heading = heading;
        rec.timestamp = start_time + static_cast<double>(k) * step;  // 1 m/s walk
        rec.sequence_id = sequence_id;
        rec.cloud = generate_scan(spec, rec.pose, heading);
        records.push_back(std::move(rec));
    }
    return records;
}

/// Writes a traversal as PCD scans plus a pose CSV under base_dir, returning
/// the manifest entry that re-ingests it.
inline SequenceSpec write_traversal_files(const std::filesystem::path& base_dir,
                                          const std::vector<ScanRecord>& records,
                                          const std::string& sensor_label = "synthetic") {
    if (records.empty()) throw DataError("write_traversal_files: no records");
    const std::string& seq = records.front().sequence_id;
    const std::string scan_dir = "scans/" + seq;
    const std::string pose_file = "poses/" + seq + ".csv";
    std::vector<PoseSample> poses;
    for (const auto& rec : records) {
        char name[64];
        std::snprintf(name, sizeof(name), "%012.6f.pcd", rec.timestamp);
        write_file(base_dir / scan_dir / name, write_pcd(rec.cloud, /*binary=*/true));
        poses.push_back({rec.timestamp, rec.pose, rec.heading});
    }
    write_file(base_dir / pose_file, write_pose_csv(poses));
    return {seq, scan_dir, pose_file, sensor_label};
}

}  // namespace vinepr
