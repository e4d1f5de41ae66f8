#pragma once

#include <vector>

#include <Eigen/Core>

#include "voxslam/geometry.hpp"

namespace voxslam {

/// Point cloud in the sensor frame. Timestamps, when present, are normalized
/// to [0,1] over the sweep and run parallel to the points.
struct TimedPointCloud {
    std::vector<Eigen::Vector3d> points;
    std::vector<double> timestamps;

    std::size_t Size() const { return points.size(); }
    bool Empty() const { return points.empty(); }
    bool HasTimestamps() const { return !timestamps.empty(); }
};

TimedPointCloud TransformCloud(const RigidTransform &transform, const TimedPointCloud &cloud);

/// Keeps at most one point per voxel, the first one encountered.
/// Throws std::invalid_argument when voxel_size <= 0.
TimedPointCloud VoxelDownsample(const TimedPointCloud &cloud, double voxel_size);

}  // namespace voxslam
