#include "voxslam/local_map.hpp"

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace voxslam {

namespace {

constexpr std::uint32_t kMagic = 0x4d4c5856;  // "VXLM"
constexpr std::uint32_t kVersion = 1;

void WritePose(std::ostream &os, const RigidTransform &pose) {
    const Eigen::Matrix3d r = pose.rotation();
    const Eigen::Vector3d t = pose.translation();
    os.write(reinterpret_cast<const char *>(r.data()), sizeof(double) * 9);
    os.write(reinterpret_cast<const char *>(t.data()), sizeof(double) * 3);
}

RigidTransform ReadPose(std::istream &is) {
    Eigen::Matrix3d r;
    Eigen::Vector3d t;
    is.read(reinterpret_cast<char *>(r.data()), sizeof(double) * 9);
    is.read(reinterpret_cast<char *>(t.data()), sizeof(double) * 3);
    return {r, t};
}

template <typename T>
void WriteScalar(std::ostream &os, T value) {
    os.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

template <typename T>
T ReadScalar(std::istream &is) {
    T value{};
    is.read(reinterpret_cast<char *>(&value), sizeof(T));
    return value;
}

}  // namespace

void Integrate(LocalMap &map, const RigidTransform &pose_in_keypose_frame,
               const TimedPointCloud &frame) {
    for (const auto &p : frame.points) {
        map.grid.Insert(pose_in_keypose_frame * p);
    }
    map.local_trajectory.push_back(pose_in_keypose_frame);
    ++map.end_scan_index;
}

double TraveledDistance(const LocalMap &map) {
    double length = 0.0;
    for (std::size_t i = 1; i < map.local_trajectory.size(); ++i) {
        length += (map.local_trajectory[i].translation() -
                   map.local_trajectory[i - 1].translation())
                      .norm();
    }
    return length;
}

bool ShouldSplit(const LocalMap &map, const SplitPolicy &policy) {
    return TraveledDistance(map) > policy.distance_threshold_beta;
}

void Finalize(LocalMap &map) {
    std::vector<VoxelStat> stats;
    map.grid.ForEachVoxelSorted(
        [&](const VoxelKey &, const std::vector<Eigen::Vector3d> &points) {
            if (points.size() < 3) {
                return;
            }
            Eigen::Vector3d mean = Eigen::Vector3d::Zero();
            for (const auto &p : points) {
                mean += p;
            }
            mean /= static_cast<double>(points.size());

            Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
            for (const auto &p : points) {
                const Eigen::Vector3d d = p - mean;
                cov += d * d.transpose();
            }
            cov /= static_cast<double>(points.size());

            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
            Eigen::Vector3d normal = solver.eigenvectors().col(0).normalized();
            if (normal.z() < 0.0 ||
                (normal.z() == 0.0 && (normal.y() < 0.0 ||
                                       (normal.y() == 0.0 && normal.x() < 0.0)))) {
                normal = -normal;
            }
            stats.push_back({mean, normal});
        });
    map.voxel_stats = std::move(stats);
}

LocalMap Split(LocalMap &map, double crop_radius) {
    Finalize(map);

    const RigidTransform last = map.local_trajectory.back();
    LocalMap fresh(map.id + 1, map.keypose * last, map.grid.voxel_size(),
                   map.grid.max_points_per_voxel(), map.end_scan_index);

    const RigidTransform to_fresh = last.Inverse();
    const VoxelHashMap cropped = map.grid.Crop(last.translation(), crop_radius);
    for (const auto &p : cropped.Points()) {
        fresh.grid.Insert(to_fresh * p);
    }
    return fresh;
}

void SaveLocalMap(const LocalMap &map, const std::string &path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("SaveLocalMap: cannot open " + path);
    }
    WriteScalar(os, kMagic);
    WriteScalar(os, kVersion);
    WriteScalar(os, map.id);
    WriteScalar(os, static_cast<std::uint64_t>(map.start_scan_index));
    WriteScalar(os, static_cast<std::uint64_t>(map.end_scan_index));
    WriteScalar(os, map.grid.voxel_size());
    WriteScalar(os, static_cast<std::int32_t>(map.grid.max_points_per_voxel()));
    WritePose(os, map.keypose);

    WriteScalar(os, static_cast<std::uint64_t>(map.local_trajectory.size()));
    for (const auto &pose : map.local_trajectory) {
        WritePose(os, pose);
    }

    WriteScalar(os, static_cast<std::uint8_t>(map.voxel_stats.has_value() ? 1 : 0));
    if (map.voxel_stats) {
        WriteScalar(os, static_cast<std::uint64_t>(map.voxel_stats->size()));
        for (const auto &stat : *map.voxel_stats) {
            os.write(reinterpret_cast<const char *>(stat.mean.data()), sizeof(double) * 3);
            os.write(reinterpret_cast<const char *>(stat.normal.data()), sizeof(double) * 3);
        }
    }

    const auto points = map.grid.Points();
    WriteScalar(os, static_cast<std::uint64_t>(points.size()));
    for (const auto &p : points) {
        os.write(reinterpret_cast<const char *>(p.data()), sizeof(double) * 3);
    }
    if (!os) {
        throw std::runtime_error("SaveLocalMap: write failed for " + path);
    }
}

LocalMap LoadLocalMap(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("LoadLocalMap: cannot open " + path);
    }
    if (ReadScalar<std::uint32_t>(is) != kMagic) {
        throw std::runtime_error("LoadLocalMap: bad magic in " + path);
    }
    if (ReadScalar<std::uint32_t>(is) != kVersion) {
        throw std::runtime_error("LoadLocalMap: unsupported version in " + path);
    }
    const auto id = ReadScalar<std::int64_t>(is);
    const auto start = ReadScalar<std::uint64_t>(is);
    const auto end = ReadScalar<std::uint64_t>(is);
    const auto voxel_size = ReadScalar<double>(is);
    const auto cap = ReadScalar<std::int32_t>(is);
    const RigidTransform keypose = ReadPose(is);

    LocalMap map(id, keypose, voxel_size, cap, start);
    map.end_scan_index = end;

    const auto n_poses = ReadScalar<std::uint64_t>(is);
    map.local_trajectory.clear();
    map.local_trajectory.reserve(n_poses);
    for (std::uint64_t i = 0; i < n_poses; ++i) {
        map.local_trajectory.push_back(ReadPose(is));
    }

    if (ReadScalar<std::uint8_t>(is) != 0) {
        const auto n_stats = ReadScalar<std::uint64_t>(is);
        std::vector<VoxelStat> stats(n_stats);
        for (auto &stat : stats) {
            is.read(reinterpret_cast<char *>(stat.mean.data()), sizeof(double) * 3);
            is.read(reinterpret_cast<char *>(stat.normal.data()), sizeof(double) * 3);
        }
        map.voxel_stats = std::move(stats);
    }

    const auto n_points = ReadScalar<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < n_points; ++i) {
        Eigen::Vector3d p;
        is.read(reinterpret_cast<char *>(p.data()), sizeof(double) * 3);
        map.grid.Insert(p);
    }
    if (!is) {
        throw std::runtime_error("LoadLocalMap: truncated file " + path);
    }
    return map;
}

}  // namespace voxslam
