#include "voxslam/odometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace voxslam {

PreprocessedScan Preprocess(const TimedPointCloud &scan, double min_range, double max_range,
                            double voxel_size, const RigidTransform &delta) {
    if (min_range < 0.0 || min_range >= max_range) {
        throw std::invalid_argument("Preprocess: need 0 <= min_range < max_range");
    }
    if (voxel_size <= 0.0) {
        throw std::invalid_argument("Preprocess: voxel_size must be positive");
    }
    if (scan.HasTimestamps() && scan.timestamps.size() != scan.points.size()) {
        throw std::invalid_argument("Preprocess: timestamp count does not match point count");
    }

    TimedPointCloud filtered;
    filtered.points.reserve(scan.points.size());
    for (std::size_t i = 0; i < scan.points.size(); ++i) {
        const double range = scan.points[i].norm();
        if (range < min_range || range > max_range) {
            continue;
        }
        filtered.points.push_back(scan.points[i]);
        if (scan.HasTimestamps()) {
            filtered.timestamps.push_back(scan.timestamps[i]);
        }
    }

    if (filtered.HasTimestamps()) {
        const Twist motion = Log(delta);
        if (motion.Norm() > 0.0) {
            for (std::size_t i = 0; i < filtered.points.size(); ++i) {
                const double tau = filtered.timestamps[i] - 0.5;
                const Vector6d scaled = tau * motion.Vector();
                filtered.points[i] = Exp(Twist::FromVector(scaled)) * filtered.points[i];
            }
        }
    }

    PreprocessedScan out;
    out.map_frame = VoxelDownsample(filtered, 0.5 * voxel_size);
    out.registration_frame = VoxelDownsample(out.map_frame, 1.5 * voxel_size);
    return out;
}

std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> FindCorrespondences(
    const TimedPointCloud &source, const VoxelHashMap &map, const RigidTransform &pose,
    double max_distance, int shell_override) {
    std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> correspondences;
    correspondences.reserve(source.points.size());
    for (const auto &s : source.points) {
        const auto hit = map.NearestNeighbor(pose * s, max_distance, shell_override);
        if (hit) {
            correspondences.emplace_back(s, hit->point);
        }
    }
    return correspondences;
}

NormalEquations BuildNormalEquations(
    const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> &correspondences,
    const RigidTransform &pose) {
    NormalEquations ne;
    ne.num_correspondences = correspondences.size();
    const Eigen::Matrix3d &r = pose.rotation();
    for (const auto &[s, q] : correspondences) {
        Eigen::Matrix<double, 3, 6> j;
        j.leftCols<3>() = -r * Skew(s);
        j.rightCols<3>() = r;
        const Eigen::Vector3d residual = pose * s - q;
        ne.h += j.transpose() * j;
        ne.g += j.transpose() * residual;
        ne.chi2 += residual.squaredNorm();
    }
    return ne;
}

RegistrationResult RegisterScan(const TimedPointCloud &source, const VoxelHashMap &map,
                                const RigidTransform &initial_guess,
                                double max_correspondence_distance, int max_iterations,
                                double convergence_tolerance, int shell_override) {
    if (source.Empty()) {
        throw std::invalid_argument("RegisterScan: source cloud is empty");
    }
    if (map.Empty()) {
        throw std::invalid_argument("RegisterScan: map is empty");
    }

    RegistrationResult result;
    result.pose = initial_guess;
    for (int iteration = 1; iteration <= max_iterations; ++iteration) {
        const auto correspondences = FindCorrespondences(
            source, map, result.pose, max_correspondence_distance, shell_override);
        if (correspondences.empty()) {
            throw RegistrationError("RegisterScan: no correspondences within the gate");
        }

        const NormalEquations ne = BuildNormalEquations(correspondences, result.pose);
        const Eigen::FullPivLU<Matrix6d> lu(ne.h);
        if (lu.rank() < 6) {
            throw DegenerateGeometryError(
                "RegisterScan: normal matrix is singular, geometry underconstrains the pose");
        }
        const Vector6d delta = lu.solve(-ne.g);

        result.pose = result.pose * Exp(Twist::FromVector(delta));
        result.iterations = iteration;
        result.final_correction_norm = delta.norm();
        if (result.final_correction_norm < convergence_tolerance) {
            break;
        }
    }
    return result;
}

double AdaptiveThreshold::Current() const {
    if (count_ == 0) {
        return initial_threshold_;
    }
    const double rms = std::sqrt(sum_squared_ / static_cast<double>(count_));
    return std::max(3.0 * rms, voxel_size_);
}

double AdaptiveThreshold::DeviationMagnitude(const RigidTransform &deviation) const {
    const double angle = RotationAngle(deviation.rotation());
    return deviation.translation().norm() + 2.0 * std::sin(0.5 * angle) * max_range_;
}

void AdaptiveThreshold::Update(const RigidTransform &prediction, const RigidTransform &result) {
    const double magnitude = DeviationMagnitude(prediction.Inverse() * result);
    sum_squared_ += magnitude * magnitude;
    ++count_;
}

Odometry::Odometry(const OdometryConfig &config)
    : config_(config),
      map_(config.voxel_size, config.max_points_per_voxel),
      threshold_(config.initial_threshold, config.voxel_size, config.max_range) {}

Odometry::Result Odometry::ProcessScan(const TimedPointCloud &scan) {
    const RigidTransform prediction = Predict();
    const PreprocessedScan pre = Preprocess(scan, config_.min_range, config_.max_range,
                                            config_.voxel_size, last_delta_);

    Result result;
    result.map_frame = pre.map_frame;
    result.threshold = threshold_.Current();

    if (map_.Empty()) {
        result.pose = prediction;
    } else if (pre.registration_frame.Empty()) {
        result.pose = prediction;
        result.registration_ok = false;
    } else {
        try {
            const RegistrationResult reg = RegisterScan(
                pre.registration_frame, map_, prediction, result.threshold,
                config_.max_iterations, config_.convergence_tolerance,
                config_.neighbor_search_shells);
            result.pose = reg.pose;
            result.iterations = reg.iterations;
            threshold_.Update(prediction, reg.pose);
        } catch (const RegistrationError &) {
            result.pose = prediction;
            result.registration_ok = false;
        }
    }

    map_.Insert(TransformCloud(result.pose, pre.map_frame));
    last_delta_ = last_pose_.Inverse() * result.pose;
    last_pose_ = result.pose;
    return result;
}

void Odometry::Reset() {
    last_pose_ = RigidTransform::Identity();
    last_delta_ = RigidTransform::Identity();
    map_.Clear();
    threshold_ = AdaptiveThreshold(config_.initial_threshold, config_.voxel_size,
                                   config_.max_range);
}

void Odometry::RebaseFrame(const VoxelHashMap &new_map) {
    last_pose_ = RigidTransform::Identity();
    map_ = new_map;
}

}  // namespace voxslam
