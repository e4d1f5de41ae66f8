#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "voxslam/geometry.hpp"
#include "voxslam/point_cloud.hpp"
#include "voxslam/voxel_hash_map.hpp"

namespace voxslam {

/// Per-voxel surface statistics: centroid and the plane normal from a
/// principal component analysis of the voxel's points.
struct VoxelStat {
    Eigen::Vector3d mean;
    Eigen::Vector3d normal;
};

/// Scans accumulated in the frame of one keypose. The first trajectory entry
/// is always the identity: the map is born at its keypose. A finalized map
/// carries voxel_stats and is immutable from then on.
struct LocalMap {
    std::int64_t id = 0;
    RigidTransform keypose;
    std::vector<RigidTransform> local_trajectory;
    VoxelHashMap grid;
    std::optional<std::vector<VoxelStat>> voxel_stats;
    std::size_t start_scan_index = 0;
    std::size_t end_scan_index = 0;

    LocalMap(std::int64_t map_id, const RigidTransform &keypose_in, double voxel_size,
             int max_points_per_voxel, std::size_t start_index)
        : id(map_id),
          keypose(keypose_in),
          local_trajectory{RigidTransform::Identity()},
          grid(voxel_size, max_points_per_voxel),
          start_scan_index(start_index),
          end_scan_index(start_index) {}
};

struct SplitPolicy {
    double distance_threshold_beta = 100.0;
};

/// Inserts the frame transformed by the given local pose and appends the
/// pose to the trajectory. The frame is expected de-skewed and downsampled.
void Integrate(LocalMap &map, const RigidTransform &pose_in_keypose_frame,
               const TimedPointCloud &frame);

/// Arc length of the local trajectory; the sum of translation deltas
/// between consecutive poses.
double TraveledDistance(const LocalMap &map);

bool ShouldSplit(const LocalMap &map, const SplitPolicy &policy);

/// Computes voxel_stats: for every voxel holding at least 3 points, the
/// point mean and the smallest-eigenvalue direction of the covariance,
/// sign-fixed to non-negative z (ties resolved toward y, then x). Stats are
/// ordered by voxel key.
void Finalize(LocalMap &map);

/// Finalizes the map in place and returns its successor: keypose chained by
/// the last local pose, trajectory restarted at identity, grid seeded with
/// the crop of the old grid around the new origin, re-expressed in the new
/// keypose frame. The boundary scan is shared: the successor's identity pose
/// refers to the same scan as the predecessor's last pose.
LocalMap Split(LocalMap &map, double crop_radius);

/// Binary round-trip of a local map (debugging aid; format private to this
/// project). Throws std::runtime_error on IO or format problems.
void SaveLocalMap(const LocalMap &map, const std::string &path);
LocalMap LoadLocalMap(const std::string &path);

}  // namespace voxslam
