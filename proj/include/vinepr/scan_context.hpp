#pragma once

#include <numbers>
#include <vector>

#include "vinepr/point_cloud.hpp"

namespace vinepr {

struct ScanContextParams {
    int num_rings = 20;
    int num_sectors = 60;
    double max_range = 60.0;  // meters
    double voxel_size = 0.1;  // meters; callers quantize at this before encoding

    void validate() const {
        if (num_rings < 1) throw ConfigError("ScanContextParams: num_rings must be >= 1");
        if (num_sectors < 1) throw ConfigError("ScanContextParams: num_sectors must be >= 1");
        if (!(max_range > 0.0)) throw ConfigError("ScanContextParams: max_range must be > 0");
        if (!(voxel_size > 0.0)) throw ConfigError("ScanContextParams: voxel_size must be > 0");
    }
};

/// Polar-grid max-height descriptor. Ring r covers planar radii
/// [r, r+1) * max_range/num_rings, sector s covers azimuths
/// [s, s+1) * 2pi/num_sectors; each bin stores the maximum z of its points
/// (0 when empty). Returned row-major: index = ring * num_sectors + sector.
/// Operates on raw sensor-frame coordinates.
inline std::vector<double> scan_context(const PointCloud& cloud, const ScanContextParams& params) {
    params.validate();
    if (cloud.empty()) throw DataError("scan_context: empty cloud");
    const double ring_width = params.max_range / params.num_rings;
    const double sector_width = 2.0 * std::numbers::pi / params.num_sectors;
    std::vector<double> desc(static_cast<std::size_t>(params.num_rings) *
                                 static_cast<std::size_t>(params.num_sectors),
                             0.0);
    std::vector<bool> occupied(desc.size(), false);
    for (const auto& p : cloud.points) {
        const double radius = p.planar_norm();
        if (radius > params.max_range) continue;
        int ring = static_cast<int>(std::floor(radius / ring_width));
        if (ring >= params.num_rings) ring = params.num_rings - 1;  // radius == max_range
        double azimuth = std::atan2(p.y, p.x);
        if (azimuth < 0.0) azimuth += 2.0 * std::numbers::pi;
        int sector = static_cast<int>(std::floor(azimuth / sector_width));
        if (sector >= params.num_sectors) sector = params.num_sectors - 1;
        const std::size_t idx = static_cast<std::size_t>(ring) *
                                    static_cast<std::size_t>(params.num_sectors) +
                                static_cast<std::size_t>(sector);
        if (!occupied[idx] || p.z > desc[idx]) {
            desc[idx] = p.z;
            occupied[idx] = true;
        }
    }
    return desc;
}

}  // namespace vinepr
