#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "voxslam/geometry.hpp"
#include "voxslam/point_cloud.hpp"
#include "voxslam/voxel_hash_map.hpp"

namespace voxslam {

/// Raised when registration cannot proceed (no correspondences within the
/// gate, which signals divergence between map and guess).
class RegistrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when the normal matrix is singular, i.e. the observed geometry
/// does not constrain all six degrees of freedom.
class DegenerateGeometryError : public RegistrationError {
public:
    using RegistrationError::RegistrationError;
};

struct OdometryConfig {
    double min_range = 1.0;
    double max_range = 100.0;
    double voxel_size = 1.0;
    int max_points_per_voxel = 20;
    double convergence_tolerance = 1e-4;
    int max_iterations = 500;
    double initial_threshold = 2.0;
    /// 0 derives the shell count from the correspondence distance.
    int neighbor_search_shells = 0;
};

struct RegistrationResult {
    RigidTransform pose;
    int iterations = 0;
    double final_correction_norm = 0.0;
};

struct PreprocessedScan {
    TimedPointCloud registration_frame;
    TimedPointCloud map_frame;
};

/// Range filter on the raw point norms, constant-velocity de-skew toward the
/// sweep midpoint (timestamp 0.5), then the double downsampling: the map
/// frame at half the voxel size, the registration frame at 1.5 times it.
/// Throws std::invalid_argument on bad ranges or timestamp length mismatch.
PreprocessedScan Preprocess(const TimedPointCloud &scan, double min_range, double max_range,
                            double voxel_size, const RigidTransform &delta);

/// Pairs of (source point in sensor frame, matched map point) gathered by
/// nearest-neighbor lookup of the transformed source.
std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> FindCorrespondences(
    const TimedPointCloud &source, const VoxelHashMap &map, const RigidTransform &pose,
    double max_distance, int shell_override = 0);

/// Gauss-Newton normal equations of the point-to-point cost at the current
/// pose: h = sum JᵀJ, g = sum Jᵀr with residual r = pose·s - q and Jacobian
/// of (pose·exp(eps))·s in the twist coordinates. The gradient of chi2 with
/// respect to the perturbation is 2·g.
struct NormalEquations {
    Matrix6d h = Matrix6d::Zero();
    Vector6d g = Vector6d::Zero();
    double chi2 = 0.0;
    std::size_t num_correspondences = 0;
};

NormalEquations BuildNormalEquations(
    const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> &correspondences,
    const RigidTransform &pose);

/// Iterative closest point with per-iteration re-association: solve the
/// normal equations, apply T <- T·exp(delta), stop when the correction norm
/// drops below the tolerance or the iteration cap is reached.
RegistrationResult RegisterScan(const TimedPointCloud &source, const VoxelHashMap &map,
                                const RigidTransform &initial_guess,
                                double max_correspondence_distance, int max_iterations,
                                double convergence_tolerance, int shell_override = 0);

/// Running RMS of the deviation between the motion prediction and the
/// registered result, turned into a correspondence gate of 3·RMS, floored
/// at the voxel size. Before any sample the gate is the initial threshold.
class AdaptiveThreshold {
public:
    AdaptiveThreshold(double initial_threshold, double voxel_size, double max_range)
        : initial_threshold_(initial_threshold), voxel_size_(voxel_size),
          max_range_(max_range) {}

    double Current() const;
    void Update(const RigidTransform &prediction, const RigidTransform &result);

    /// Deviation magnitude: translation plus the chord the rotation sweeps
    /// at the maximum range.
    double DeviationMagnitude(const RigidTransform &deviation) const;

private:
    double initial_threshold_;
    double voxel_size_;
    double max_range_;
    double sum_squared_ = 0.0;
    std::size_t count_ = 0;
};

/// Scan-to-map odometry with a constant-velocity prediction model.
class Odometry {
public:
    explicit Odometry(const OdometryConfig &config);

    struct Result {
        RigidTransform pose;
        TimedPointCloud map_frame;
        bool registration_ok = true;
        int iterations = 0;
        double threshold = 0.0;
    };

    /// Registers one scan against the local map and integrates it. On
    /// registration failure the pose falls back to the prediction and the
    /// result is flagged.
    Result ProcessScan(const TimedPointCloud &scan);

    RigidTransform Predict() const { return last_pose_ * last_delta_; }

    void Reset();

    /// Re-anchors the odometry frame at the current pose: the pose becomes
    /// identity and the map is replaced, while the velocity model and the
    /// threshold statistics carry over (both are frame-invariant).
    void RebaseFrame(const VoxelHashMap &new_map);

    const RigidTransform &last_pose() const { return last_pose_; }
    const RigidTransform &last_delta() const { return last_delta_; }
    const VoxelHashMap &local_map() const { return map_; }
    const OdometryConfig &config() const { return config_; }

private:
    OdometryConfig config_;
    RigidTransform last_pose_;
    RigidTransform last_delta_;
    VoxelHashMap map_;
    AdaptiveThreshold threshold_;
};

}  // namespace voxslam
