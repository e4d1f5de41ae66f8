#include "voxslam/voxel_hash_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace voxslam {

VoxelHashMap::VoxelHashMap(double voxel_size, int max_points_per_voxel)
    : voxel_size_(voxel_size), max_points_per_voxel_(max_points_per_voxel) {
    if (voxel_size <= 0.0) {
        throw std::invalid_argument("VoxelHashMap: voxel_size must be positive");
    }
    if (max_points_per_voxel < 1) {
        throw std::invalid_argument("VoxelHashMap: max_points_per_voxel must be at least 1");
    }
}

VoxelKey VoxelHashMap::KeyOf(const Eigen::Vector3d &point) const {
    return {static_cast<std::int32_t>(std::floor(point.x() / voxel_size_)),
            static_cast<std::int32_t>(std::floor(point.y() / voxel_size_)),
            static_cast<std::int32_t>(std::floor(point.z() / voxel_size_))};
}

void VoxelHashMap::Insert(const Eigen::Vector3d &point) {
    auto &entries = voxels_[KeyOf(point)];
    if (static_cast<int>(entries.size()) >= max_points_per_voxel_) {
        return;
    }
    entries.push_back({point, next_seq_++});
    ++num_points_;
}

void VoxelHashMap::Insert(const std::vector<Eigen::Vector3d> &points) {
    for (const auto &p : points) {
        Insert(p);
    }
}

void VoxelHashMap::Insert(const TimedPointCloud &cloud) {
    Insert(cloud.points);
}

std::optional<VoxelHashMap::Neighbor> VoxelHashMap::NearestNeighbor(const Eigen::Vector3d &query,
                                                                    double max_distance,
                                                                    int shell_override) const {
    if (max_distance <= 0.0 || voxels_.empty()) {
        return std::nullopt;
    }
    const int max_shells =
        shell_override > 0 ? shell_override
                           : static_cast<int>(std::ceil(max_distance / voxel_size_));
    const VoxelKey center = KeyOf(query);

    double best_dist2 = std::numeric_limits<double>::infinity();
    std::uint64_t best_seq = std::numeric_limits<std::uint64_t>::max();
    const Eigen::Vector3d *best_point = nullptr;

    auto visit_voxel = [&](const VoxelKey &key) {
        const auto it = voxels_.find(key);
        if (it == voxels_.end()) return;
        for (const auto &entry : it->second) {
            const double d2 = (entry.point - query).squaredNorm();
            if (d2 < best_dist2 || (d2 == best_dist2 && entry.seq < best_seq)) {
                best_dist2 = d2;
                best_seq = entry.seq;
                best_point = &entry.point;
            }
        }
    };

    for (int shell = 0; shell <= max_shells; ++shell) {
        if (shell == 0) {
            visit_voxel(center);
        } else {
            for (int dx = -shell; dx <= shell; ++dx) {
                for (int dy = -shell; dy <= shell; ++dy) {
                    for (int dz = -shell; dz <= shell; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != shell) {
                            continue;
                        }
                        visit_voxel({center.x + dx, center.y + dy, center.z + dz});
                    }
                }
            }
        }
        // Any point in shell s lies at least (s - 1) * voxel_size away, so
        // once the best distance is strictly inside that bound no farther
        // shell can win or tie.
        if (best_point != nullptr && std::sqrt(best_dist2) < shell * voxel_size_) {
            break;
        }
    }

    if (best_point == nullptr) {
        return std::nullopt;
    }
    const double dist = std::sqrt(best_dist2);
    if (dist > max_distance) {
        return std::nullopt;
    }
    return Neighbor{*best_point, dist};
}

VoxelHashMap VoxelHashMap::Crop(const Eigen::Vector3d &center, double radius) const {
    VoxelHashMap out(voxel_size_, max_points_per_voxel_);
    ForEachVoxelSorted([&](const VoxelKey &, const std::vector<Eigen::Vector3d> &points) {
        for (const auto &p : points) {
            if ((p - center).norm() <= radius) {
                out.Insert(p);
            }
        }
    });
    return out;
}

void VoxelHashMap::Clear() {
    voxels_.clear();
    num_points_ = 0;
    next_seq_ = 0;
}

std::vector<Eigen::Vector3d> VoxelHashMap::Points() const {
    std::vector<Eigen::Vector3d> out;
    out.reserve(num_points_);
    ForEachVoxelSorted([&](const VoxelKey &, const std::vector<Eigen::Vector3d> &points) {
        out.insert(out.end(), points.begin(), points.end());
    });
    return out;
}

void VoxelHashMap::ForEachVoxelSorted(
    const std::function<void(const VoxelKey &, const std::vector<Eigen::Vector3d> &)> &visit)
    const {
    std::vector<const std::pair<const VoxelKey, std::vector<Entry>> *> items;
    items.reserve(voxels_.size());
    for (const auto &kv : voxels_) {
        items.push_back(&kv);
    }
    std::sort(items.begin(), items.end(),
              [](const auto *a, const auto *b) { return a->first < b->first; });
    std::vector<Eigen::Vector3d> points;
    for (const auto *kv : items) {
        points.clear();
        points.reserve(kv->second.size());
        for (const auto &entry : kv->second) {
            points.push_back(entry.point);
        }
        visit(kv->first, points);
    }
}

}  // namespace voxslam
