#include "voxslam/point_cloud.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>

namespace voxslam {

namespace {

struct VoxelIndex {
    std::int64_t x, y, z;
    bool operator==(const VoxelIndex &) const = default;
};

struct VoxelIndexHash {
    std::size_t operator()(const VoxelIndex &k) const {
        return static_cast<std::size_t>(k.x * 73856093LL ^ k.y * 19349669LL ^ k.z * 83492791LL);
    }
};

VoxelIndex IndexOf(const Eigen::Vector3d &p, double voxel_size) {
    return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
            static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
            static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

}  // namespace

TimedPointCloud TransformCloud(const RigidTransform &transform, const TimedPointCloud &cloud) {
    TimedPointCloud out;
    out.points.reserve(cloud.points.size());
    for (const auto &p : cloud.points) {
        out.points.push_back(transform * p);
    }
    out.timestamps = cloud.timestamps;
    return out;
}

TimedPointCloud VoxelDownsample(const TimedPointCloud &cloud, double voxel_size) {
    if (voxel_size <= 0.0) {
        throw std::invalid_argument("VoxelDownsample: voxel_size must be positive");
    }
    std::unordered_set<VoxelIndex, VoxelIndexHash> seen;
    seen.reserve(cloud.points.size());
    TimedPointCloud out;
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        if (seen.insert(IndexOf(cloud.points[i], voxel_size)).second) {
            out.points.push_back(cloud.points[i]);
            if (cloud.HasTimestamps()) {
                out.timestamps.push_back(cloud.timestamps[i]);
            }
        }
    }
    return out;
}

}  // namespace voxslam
