#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "voxslam/point_cloud.hpp"

namespace voxslam {

struct VoxelKey {
    std::int32_t x = 0, y = 0, z = 0;
    bool operator==(const VoxelKey &) const = default;
    bool operator<(const VoxelKey &rhs) const {
        if (x != rhs.x) return x < rhs.x;
        if (y != rhs.y) return y < rhs.y;
        return z < rhs.z;
    }
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey &k) const {
        return static_cast<std::size_t>(k.x) * 73856093u ^
               static_cast<std::size_t>(k.y) * 19349669u ^
               static_cast<std::size_t>(k.z) * 83492791u;
    }
};

/// Sparse voxel grid over 3D points. Each voxel holds at most
/// max_points_per_voxel points; insertion beyond the cap is a no-op.
/// Coordinates are keyed by floor division so negative space tiles the
/// same way positive space does.
class VoxelHashMap {
public:
    struct Neighbor {
        Eigen::Vector3d point;
        double distance;
    };

    explicit VoxelHashMap(double voxel_size, int max_points_per_voxel = 20);

    void Insert(const Eigen::Vector3d &point);
    void Insert(const std::vector<Eigen::Vector3d> &points);
    void Insert(const TimedPointCloud &cloud);

    /// Closest stored point within max_distance. Searches outward voxel
    /// shell by voxel shell and stops as soon as no farther shell can hold
    /// a closer point. Ties are broken by insertion order, matching an
    /// exhaustive scan. shell_override > 0 caps the number of shells.
    std::optional<Neighbor> NearestNeighbor(const Eigen::Vector3d &query, double max_distance,
                                            int shell_override = 0) const;

    /// New grid with the points at distance <= radius from center, re-keyed.
    VoxelHashMap Crop(const Eigen::Vector3d &center, double radius) const;

    void Clear();
    bool Empty() const { return num_points_ == 0; }
    std::size_t NumPoints() const { return num_points_; }
    std::size_t NumVoxels() const { return voxels_.size(); }
    double voxel_size() const { return voxel_size_; }
    int max_points_per_voxel() const { return max_points_per_voxel_; }

    VoxelKey KeyOf(const Eigen::Vector3d &point) const;

    /// All stored points, ordered by voxel key then insertion order.
    std::vector<Eigen::Vector3d> Points() const;

    /// Visits voxels in ascending key order; points keep insertion order.
    void ForEachVoxelSorted(
        const std::function<void(const VoxelKey &, const std::vector<Eigen::Vector3d> &)> &visit)
        const;

private:
    struct Entry {
        Eigen::Vector3d point;
        std::uint64_t seq;
    };

    double voxel_size_;
    int max_points_per_voxel_;
    std::uint64_t next_seq_ = 0;
    std::size_t num_points_ = 0;
    std::unordered_map<VoxelKey, std::vector<Entry>, VoxelKeyHash> voxels_;
};

}  // namespace voxslam
