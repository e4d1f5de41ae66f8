#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "voxslam/geometry.hpp"
#include "voxslam/point_cloud.hpp"

namespace voxslam {

/// Scene and sensor description for the synthetic LiDAR generator. Worlds
/// are a tiled terrain (flat patches with curb-like steps between them)
/// plus yawed rectangular prisms scattered beside the path; everything is
/// deterministic for a given seed.
struct SyntheticWorldSpec {
    enum class Path { kLoop, kStraight };

    Path path = Path::kLoop;
    double loop_circumference = 600.0;
    double straight_length = 150.0;
    double speed = 15.0;
    /// Seconds spent stationary before the platform moves at all.
    double start_pause = 0.0;
    /// Seconds to accelerate from rest to cruise speed (0 = constant speed).
    double ramp_time = 0.0;
    double sensor_height = 1.8;
    /// Vehicle suspension motion: attitude amplitude in radians, heave in
    /// meters. Applies whenever handheld is false.
    double attitude_amplitude = 0.002;
    double bounce_amplitude = 0.01;

    /// Walking-style motion: vertical bob plus small roll/pitch/yaw sway.
    bool handheld = false;

    std::size_t num_scans = 410;
    double sweep_duration = 0.1;

    int num_beams = 64;
    int num_azimuths = 720;
    double vertical_fov_min_deg = -25.0;
    double vertical_fov_max_deg = 15.0;
    double max_range = 120.0;
    double noise_sigma = 0.02;
    /// Hits more grazing than this return no energy and are dropped.
    double max_incidence_deg = 88.0;

    int num_boxes = 80;
    double box_min_size = 1.0;
    double box_max_size = 6.0;
    double box_min_height = 2.0;
    double box_max_height = 8.0;
    double corridor_clearance = 6.0;
    double corridor_width = 25.0;

    /// Facade-like prisms lining the path, roughly street-aligned. They are
    /// laid out as two nearly continuous rows (one per side) with short gaps,
    /// so the corridor never loses its walls; num_buildings caps the total.
    int num_buildings = 400;
    double building_offset_min = 8.0;
    double building_offset_max = 14.0;
    double building_min_length = 6.0;
    double building_max_length = 14.0;
    double building_gap_min = 0.5;
    double building_gap_max = 4.0;
    double building_min_depth = 3.0;
    double building_max_depth = 8.0;
    double building_min_height = 4.0;
    double building_max_height = 9.0;
    double building_yaw_jitter = 0.08;
    /// Facades are split into panels of roughly this width, each with its own
    /// setback within +/- building_relief, so walls carry along-street texture.
    double building_panel_width = 2.5;
    double building_relief = 0.35;

    /// Parked-car-scale prisms along the corridor edge, one row per side.
    int num_cars = 200;
    double car_clearance = 3.5;
    double car_spacing_min = 6.0;
    double car_spacing_max = 20.0;

    /// Post-like thin prisms (trunks, signs) close to the path.
    int num_poles = 140;
    double pole_min_size = 0.15;
    double pole_max_size = 0.35;
    double pole_min_height = 2.2;
    double pole_max_height = 4.5;
    double pole_clearance = 6.5;
    /// Fraction of poles crowned with an overhead canopy block, which puts
    /// structure into the upward half of the field of view.
    double tree_fraction = 0.5;

    /// Car/bush-scale clutter scattered along the verge.
    int num_clutter = 500;
    double clutter_min_size = 0.4;
    double clutter_max_size = 2.5;
    double clutter_min_height = 0.4;
    double clutter_max_height = 2.0;
    double clutter_clearance = 6.5;
    double clutter_width = 15.0;

    /// Gently rolling ground: a low-frequency height swell sampled on small
    /// flat patches, plus per-patch jitter for curb-scale texture.
    /// Raised sidewalk plateau: terrain beyond curb_offset from the path
    /// centerline is lifted by curb_height, giving the street hard edges.
    double curb_offset = 6.0;
    double curb_height = 0.15;
    /// Speed-table style raised bands across the roadway, spaced along the
    /// path; their leading/trailing steps put hard edges across the street.
    double crosswalk_spacing = 25.0;
    double crosswalk_width = 3.0;
    double crosswalk_height = 0.12;
    double terrain_tile_size = 2.0;
    double terrain_amplitude = 0.35;
    double terrain_wavelength_x = 45.0;
    double terrain_wavelength_y = 37.0;
    double terrain_jitter = 0.04;

    /// Fine surface relief: ranges are offset by a repeatable, position-
    /// anchored bump of at most this amplitude, quantized to roughness_cell.
    double surface_roughness = 0.04;
    double roughness_cell = 0.15;

    std::uint64_t seed = 1;
};

/// Named sensor/motion profiles used by the synthetic fixtures: car64,
/// car16, handheld64, handheld16, straight64. Throws std::invalid_argument
/// on an unknown name.
SyntheticWorldSpec ProfileSpec(const std::string &name);

/// Vertical rectangular prism with a yawed footprint.
struct Box {
    Eigen::Vector2d center;
    Eigen::Vector2d half_extents;
    double yaw = 0.0;
    double base_z = 0.0;
    double top_z = 1.0;
};

class SyntheticWorld {
public:
    explicit SyntheticWorld(const SyntheticWorldSpec &spec);

    const SyntheticWorldSpec &spec() const { return spec_; }
    const std::vector<Box> &boxes() const { return boxes_; }

    /// Continuous-time sensor pose in the world frame.
    RigidTransform PoseAt(double time) const;

    /// Start time of scan k; sweeps are back to back.
    double ScanStartTime(std::size_t scan_index) const;

    /// Pose the scan is attributed to: the sweep midpoint.
    RigidTransform GroundTruthPose(std::size_t scan_index) const;

    /// Height of the terrain patch containing the given ground position.
    double TerrainHeight(double x, double y) const;

    /// First surface hit along the ray, as a range, or none within max_range.
    std::optional<double> Raycast(const Eigen::Vector3d &origin,
                                  const Eigen::Vector3d &direction, double max_range) const;

    /// Unsigned distance from a point to the nearest world surface.
    double DistanceToSurface(const Eigen::Vector3d &point) const;

    /// One sweep in the sensor frame with per-point capture timestamps in
    /// [0,1). Range noise is seeded per scan, independent of render order.
    TimedPointCloud RenderScan(std::size_t scan_index) const;

private:
    struct SurfaceHit {
        double range = 0.0;
        double cos_incidence = 1.0;
    };

    std::optional<SurfaceHit> RaycastTerrain(const Eigen::Vector3d &origin,
                                             const Eigen::Vector3d &direction,
                                             double max_range) const;
    /// candidates restricts the box test to a subset; nullptr means all.
    std::optional<SurfaceHit> RaycastSurface(const Eigen::Vector3d &origin,
                                             const Eigen::Vector3d &direction, double max_range,
                                             const std::vector<std::uint32_t> *candidates) const;

    SyntheticWorldSpec spec_;
    std::vector<Box> boxes_;
    std::vector<double> box_radii_;
    double loop_radius_ = 0.0;
};

}  // namespace voxslam
