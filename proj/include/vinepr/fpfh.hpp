#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "vinepr/point_cloud.hpp"

namespace vinepr {

struct FpfhParams {
    double voxel_size = 0.15;    // meters; callers quantize at this before extraction
    double normal_radius = 0.5;  // meters, for both normals and pair features
    int bins_per_feature = 11;   // 3 features -> 33-d descriptor

    void validate() const {
        if (!(voxel_size > 0.0)) throw ConfigError("FpfhParams: voxel_size must be > 0");
        if (!(normal_radius > 0.0)) throw ConfigError("FpfhParams: normal_radius must be > 0");
        if (bins_per_feature < 1) throw ConfigError("FpfhParams: bins_per_feature must be >= 1");
    }
};

struct NormalEstimate {
    Vec3 normal;         // unit length when valid
    bool valid = false;  // false when the point has fewer than 3 in-radius neighbors
};

namespace detail {

/// Uniform hash grid with cell size = search radius, so a radius query only
/// visits the 27 surrounding cells.
class SpatialGrid {
public:
    SpatialGrid(const std::vector<Vec3>& points, double cell) : points_(points), cell_(cell) {
        for (std::size_t i = 0; i < points.size(); ++i)
            cells_[voxel_key(points[i], cell_)].push_back(static_cast<int>(i));
    }

    /// Calls fn(index, squared_distance) for every point within radius of p,
    /// in ascending index order (deterministic accumulation downstream).
    template <typename Fn>
    void for_each_within(const Vec3& p, double radius, Fn&& fn) const {
        const double r_sq = radius * radius;
        const VoxelKey c = voxel_key(p, cell_);
        scratch_.clear();
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
                    if (it == cells_.end()) continue;
                    for (int j : it->second) {
                        const double d_sq = (points_[static_cast<std::size_t>(j)] - p).squared_norm();
                        if (d_sq <= r_sq) scratch_.push_back({j, d_sq});
                    }
                }
        std::sort(scratch_.begin(), scratch_.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [j, d_sq] : scratch_) fn(j, d_sq);
    }

private:
    const std::vector<Vec3>& points_;
    double cell_;
    std::unordered_map<VoxelKey, std::vector<int>, VoxelKeyHash> cells_;
    mutable std::vector<std::pair<int, double>> scratch_;
};

}  // namespace detail

/// Per-point normal from the covariance of the in-radius neighborhood (point
/// included): the eigenvector of the smallest eigenvalue, flipped to face the
/// sensor origin. Points with fewer than 3 neighbors are flagged invalid.
inline std::vector<NormalEstimate> estimate_normals(const PointCloud& cloud, double radius) {
    if (!(radius > 0.0)) throw ConfigError("estimate_normals: radius must be > 0");
    std::vector<NormalEstimate> out(cloud.size());
    detail::SpatialGrid grid(cloud.points, radius);
    std::vector<int> nbrs;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        nbrs.clear();
        grid.for_each_within(p, radius, [&](int j, double) { nbrs.push_back(j); });
        if (nbrs.size() < 3) continue;  // invalid, not fatal

        // accumulate in coordinate order: the same neighborhood then yields
        // bit-identical covariances under any input permutation
        std::sort(nbrs.begin(), nbrs.end(), [&](int a, int b) {
            const Vec3& pa = cloud.points[static_cast<std::size_t>(a)];
            const Vec3& pb = cloud.points[static_cast<std::size_t>(b)];
            if (pa.x != pb.x) return pa.x < pb.x;
            if (pa.y != pb.y) return pa.y < pb.y;
            return pa.z < pb.z;
        });

        Vec3 mean;
        for (int j : nbrs) mean = mean + cloud.points[static_cast<std::size_t>(j)];
        mean = mean / static_cast<double>(nbrs.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int j : nbrs) {
            const Vec3 d = cloud.points[static_cast<std::size_t>(j)] - mean;
            Eigen::Vector3d v(d.x, d.y, d.z);
            cov += v * v.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
        const Eigen::Vector3d n = solver.eigenvectors().col(0);  // smallest eigenvalue
        Vec3 normal{n.x(), n.y(), n.z()};
        if (normal.dot(p * -1.0) < 0.0) normal = normal * -1.0;  // face the sensor
        out[i] = {normal, true};
    }
    return out;
}

namespace detail {

struct PairFeatures {
    double alpha, phi, theta;
};

/// Standard pair features in the Darboux frame of the source normal.
/// Returns false when the frame is degenerate (direction parallel to the
/// source normal).
inline bool pair_features(const Vec3& p_src, const Vec3& n_src, const Vec3& p_tgt,
                          const Vec3& n_tgt, PairFeatures& f) {
    const Vec3 diff = p_tgt - p_src;
    const double dist = diff.norm();
    if (dist < 1e-12) return false;
    const Vec3 d = diff / dist;
    const Vec3& u = n_src;
    Vec3 v = d.cross(u);
    const double v_norm = v.norm();
    if (v_norm < 1e-12) return false;
    v = v / v_norm;
    const Vec3 w = u.cross(v);
    f.alpha = v.dot(n_tgt);
    f.phi = u.dot(d);
    f.theta = std::atan2(w.dot(n_tgt), u.dot(n_tgt));
    return true;
}

inline int feature_bin(double x, double lo, double hi, int bins) {
    int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
    if (b < 0) b = 0;
    if (b >= bins) b = bins - 1;
    return b;
}

inline void bin_pair(const PairFeatures& f, int bins, std::vector<double>& hist) {
    hist[static_cast<std::size_t>(feature_bin(f.alpha, -1.0, 1.0, bins))] += 1.0;
    hist[static_cast<std::size_t>(bins + feature_bin(f.phi, -1.0, 1.0, bins))] += 1.0;
    hist[static_cast<std::size_t>(2 * bins +
                                  feature_bin(f.theta, -std::numbers::pi, std::numbers::pi, bins))] +=
        1.0;
}

}  // namespace detail

/// Mean-pooled FPFH global descriptor: per-point SPFH histograms over valid
/// pairs, the distance-weighted neighbor blend
/// FPFH(p) = SPFH(p) + (1/k) * sum_q SPFH(q)/dist(p,q), then the arithmetic
/// mean over valid-normal points, L2-normalized. Expects a cloud already
/// quantized at params.voxel_size.
inline std::vector<double> fpfh_global(const PointCloud& cloud, const FpfhParams& params) {
    params.validate();
    const auto normals = estimate_normals(cloud, params.normal_radius);
    std::size_t num_valid = 0;
    for (const auto& n : normals) num_valid += n.valid ? 1 : 0;
    if (num_valid < 2)
        throw DataError("fpfh_global: need at least 2 points with valid normals, have " +
                        std::to_string(num_valid));

    const int bins = params.bins_per_feature;
    const std::size_t dim = static_cast<std::size_t>(3 * bins);
    const std::size_t n = cloud.size();
    detail::SpatialGrid grid(cloud.points, params.normal_radius);

    // SPFH pass: histogram pair features against every valid-normal neighbor.
    std::vector<std::vector<double>> spfh(n);
    std::vector<std::vector<std::pair<int, double>>> neighbor_dists(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!normals[i].valid) continue;
        spfh[i].assign(dim, 0.0);
        grid.for_each_within(cloud.points[i], params.normal_radius, [&](int j, double d_sq) {
            const auto ju = static_cast<std::size_t>(j);
            if (ju == i || !normals[ju].valid) return;
            detail::PairFeatures f;
            if (detail::pair_features(cloud.points[i], normals[i].normal, cloud.points[ju],
                                      normals[ju].normal, f))
                detail::bin_pair(f, bins, spfh[i]);
            neighbor_dists[i].push_back({j, std::sqrt(d_sq)});
        });
    }

    // FPFH pass and global mean.
    std::vector<double> global(dim, 0.0);
    std::vector<double> fpfh(dim);
    for (std::size_t i = 0; i < n; ++i) {
        if (!normals[i].valid) continue;
        fpfh = spfh[i];
        const std::size_t k = neighbor_dists[i].size();
        if (k > 0) {
            for (const auto& [j, dist] : neighbor_dists[i]) {
                const double w = 1.0 / (static_cast<double>(k) * std::max(dist, 1e-12));
                const auto& h = spfh[static_cast<std::size_t>(j)];
                for (std::size_t b = 0; b < dim; ++b) fpfh[b] += w * h[b];
            }
        }
        for (std::size_t b = 0; b < dim; ++b) global[b] += fpfh[b];
    }
    for (auto& g : global) g /= static_cast<double>(num_valid);

    const double norm = l2_norm(global);
    if (norm < 1e-12)
        throw NumericError("fpfh_global: degenerate descriptor (no pair features in radius)");
    for (auto& g : global) g /= norm;
    return global;
}

}  // namespace vinepr
