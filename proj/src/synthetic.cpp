#include "voxslam/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/Geometry>

namespace voxslam {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t SplitMix64(std::uint64_t state) {
    state += 0x9E3779B97F4A7C15ULL;
    state = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9ULL;
    state = (state ^ (state >> 27)) * 0x94D049BB133111EBULL;
    return state ^ (state >> 31);
}

Eigen::Vector2d IntoFootprintFrame(const Box &box, const Eigen::Vector2d &p) {
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    const Eigen::Vector2d d = p - box.center;
    return Eigen::Vector2d(c * d.x() + s * d.y(), -s * d.x() + c * d.y());
}

double BoxSurfaceDistance(const Box &box, const Eigen::Vector3d &point) {
    const Eigen::Vector2d local = IntoFootprintFrame(box, point.head<2>());
    const Eigen::Vector3d lo(-box.half_extents.x(), -box.half_extents.y(), box.base_z);
    const Eigen::Vector3d hi(box.half_extents.x(), box.half_extents.y(), box.top_z);
    const Eigen::Vector3d p(local.x(), local.y(), point.z());
    const Eigen::Vector3d outside = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
    const double outside_distance = outside.norm();
    if (outside_distance > 0.0) {
        return outside_distance;
    }
    const Eigen::Vector3d margin = (p - lo).cwiseMin(hi - p);
    return margin.minCoeff();
}

struct BoxHit {
    double t = 0.0;
    // Absolute cosine between the ray and the entered face normal.
    double cos_incidence = 1.0;
};

std::optional<BoxHit> BoxRayHit(const Box &box, const Eigen::Vector3d &origin,
                                const Eigen::Vector3d &direction) {
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    const Eigen::Vector2d od = origin.head<2>() - box.center;
    const Eigen::Vector3d o(c * od.x() + s * od.y(), -s * od.x() + c * od.y(), origin.z());
    const Eigen::Vector3d d(c * direction.x() + s * direction.y(),
                            -s * direction.x() + c * direction.y(), direction.z());
    const Eigen::Vector3d lo(-box.half_extents.x(), -box.half_extents.y(), box.base_z);
    const Eigen::Vector3d hi(box.half_extents.x(), box.half_extents.y(), box.top_z);

    double t_enter = 0.0;
    double t_exit = std::numeric_limits<double>::infinity();
    int enter_axis = -1;
    for (int axis = 0; axis < 3; ++axis) {
        if (std::abs(d[axis]) < 1e-12) {
            if (o[axis] < lo[axis] || o[axis] > hi[axis]) {
                return std::nullopt;
            }
            continue;
        }
        double t_low = (lo[axis] - o[axis]) / d[axis];
        double t_high = (hi[axis] - o[axis]) / d[axis];
        if (t_low > t_high) {
            std::swap(t_low, t_high);
        }
        if (t_low > t_enter) {
            t_enter = t_low;
            enter_axis = axis;
        }
        t_exit = std::min(t_exit, t_high);
        if (t_enter > t_exit) {
            return std::nullopt;
        }
    }
    if (t_enter <= 1e-9 || enter_axis < 0) {
        return std::nullopt;
    }
    return BoxHit{t_enter, std::abs(d[enter_axis])};
}

}  // namespace

SyntheticWorldSpec ProfileSpec(const std::string &name) {
    SyntheticWorldSpec spec;
    if (name == "car64" || name == "car16") {
        spec.ramp_time = 3.0;
        spec.num_scans = 430;
        spec.num_beams = name == "car16" ? 16 : 64;
        return spec;
    }
    if (name == "handheld64" || name == "handheld16") {
        spec.handheld = true;
        spec.loop_circumference = 220.0;
        spec.speed = 4.0;
        spec.ramp_time = 3.0;
        spec.sensor_height = 1.5;
        spec.num_scans = 590;
        spec.num_boxes = 60;
        spec.num_clutter = 250;
        spec.corridor_clearance = 4.0;
        spec.corridor_width = 20.0;
        spec.num_beams = name == "handheld16" ? 16 : 64;
        return spec;
    }
    if (name == "straight64") {
        spec.path = SyntheticWorldSpec::Path::kStraight;
        spec.straight_length = 150.0;
        spec.speed = 10.0;
        spec.num_scans = 100;
        return spec;
    }
    throw std::invalid_argument("unknown synthetic profile: " + name);
}

SyntheticWorld::SyntheticWorld(const SyntheticWorldSpec &spec) : spec_(spec) {
    if (spec_.num_scans == 0 || spec_.num_beams <= 0 || spec_.num_azimuths <= 0) {
        throw std::invalid_argument("synthetic spec must describe at least one scan and beam");
    }
    if (spec_.sweep_duration <= 0.0 || spec_.max_range <= 0.0) {
        throw std::invalid_argument("synthetic sweep duration and max range must be positive");
    }
    if (spec_.noise_sigma < 0.0) {
        throw std::invalid_argument("synthetic noise sigma must be non-negative");
    }
    if (spec_.terrain_tile_size <= 0.0 || spec_.terrain_amplitude < 0.0 ||
        spec_.terrain_wavelength_x <= 0.0 || spec_.terrain_wavelength_y <= 0.0 ||
        spec_.terrain_jitter < 0.0) {
        throw std::invalid_argument("synthetic terrain shape parameters are out of range");
    }
    if (spec_.surface_roughness < 0.0 || spec_.roughness_cell <= 0.0) {
        throw std::invalid_argument("synthetic surface roughness must be non-negative");
    }
    if (spec_.max_incidence_deg <= 0.0 || spec_.max_incidence_deg > 90.0) {
        throw std::invalid_argument("synthetic max incidence must lie in (0, 90] degrees");
    }
    if (spec_.start_pause < 0.0 || spec_.ramp_time < 0.0) {
        throw std::invalid_argument("synthetic start pause and ramp must be non-negative");
    }
    if (spec_.tree_fraction < 0.0 || spec_.tree_fraction > 1.0) {
        throw std::invalid_argument("synthetic tree fraction must lie in [0, 1]");
    }
    if (spec_.building_panel_width < 0.5 || spec_.building_relief < 0.0) {
        throw std::invalid_argument("synthetic facade panel parameters are out of range");
    }
    if (spec_.attitude_amplitude < 0.0 || spec_.bounce_amplitude < 0.0) {
        throw std::invalid_argument("synthetic suspension amplitudes must be non-negative");
    }
    if (spec_.curb_offset <= 0.0 || spec_.curb_height < 0.0) {
        throw std::invalid_argument("synthetic curb parameters are out of range");
    }
    if (spec_.crosswalk_spacing <= 0.0 || spec_.crosswalk_height < 0.0 ||
        spec_.crosswalk_width < 0.0 || spec_.crosswalk_width >= spec_.crosswalk_spacing) {
        throw std::invalid_argument("synthetic crosswalk parameters are out of range");
    }
    loop_radius_ = spec_.loop_circumference / (2.0 * kPi);

    std::mt19937_64 rng(spec_.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto path_point = [&](double along, double side, double offset) {
        if (spec_.path == SyntheticWorldSpec::Path::kLoop) {
            const double theta = 2.0 * kPi * along;
            const Eigen::Vector2d on_path(loop_radius_ * std::sin(theta),
                                          loop_radius_ * (1.0 - std::cos(theta)));
            const Eigen::Vector2d radial(std::sin(theta), -std::cos(theta));
            return Eigen::Vector2d(on_path + side * offset * radial);
        }
        const double x = -20.0 + along * (spec_.straight_length + 40.0);
        return Eigen::Vector2d(x, side * offset);
    };
    // Default base is sunk below the deepest terrain patch so nothing
    // floats above a step; an explicit base makes an overhead block.
    const double sunk_base = -(spec_.terrain_amplitude + spec_.terrain_jitter + 0.1);
    auto add_prism = [&](const Eigen::Vector2d &center, double size_x, double size_y,
                         double top, double yaw, double base) {
        Box box;
        box.center = center;
        box.half_extents = 0.5 * Eigen::Vector2d(size_x, size_y);
        box.yaw = yaw;
        box.base_z = base;
        box.top_z = top;
        boxes_.push_back(box);
        box_radii_.push_back(box.half_extents.norm());
    };
    auto path_heading = [&](double along) {
        return spec_.path == SyntheticWorldSpec::Path::kLoop ? 2.0 * kPi * along : 0.0;
    };

    boxes_.reserve(static_cast<std::size_t>(std::max(spec_.num_boxes, 0)) +
                   static_cast<std::size_t>(std::max(spec_.num_buildings, 0)) +
                   static_cast<std::size_t>(std::max(spec_.num_cars, 0)) +
                   2 * static_cast<std::size_t>(std::max(spec_.num_poles, 0)) +
                   static_cast<std::size_t>(std::max(spec_.num_clutter, 0)));
    box_radii_.reserve(boxes_.capacity());
    for (int i = 0; i < spec_.num_boxes; ++i) {
        const double along = unit(rng);
        const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
        const double offset = spec_.corridor_clearance + unit(rng) * spec_.corridor_width;
        const Eigen::Vector2d center = path_point(along, side, offset);
        const double size_x =
            spec_.box_min_size + unit(rng) * (spec_.box_max_size - spec_.box_min_size);
        const double size_y =
            spec_.box_min_size + unit(rng) * (spec_.box_max_size - spec_.box_min_size);
        const double height =
            spec_.box_min_height + unit(rng) * (spec_.box_max_height - spec_.box_min_height);
        add_prism(center, size_x, size_y, height, unit(rng) * kPi, sunk_base);
    }
    const double path_length = spec_.path == SyntheticWorldSpec::Path::kLoop
                                   ? spec_.loop_circumference
                                   : spec_.straight_length + 40.0;
    int buildings_placed = 0;
    for (const double side : {-1.0, 1.0}) {
        double s = unit(rng) * spec_.building_gap_max;
        while (buildings_placed < spec_.num_buildings) {
            const double length =
                spec_.building_min_length +
                unit(rng) * (spec_.building_max_length - spec_.building_min_length);
            if (s + length > path_length) {
                break;
            }
            const double offset =
                spec_.building_offset_min +
                unit(rng) * (spec_.building_offset_max - spec_.building_offset_min);
            const double depth =
                spec_.building_min_depth +
                unit(rng) * (spec_.building_max_depth - spec_.building_min_depth);
            const double height =
                spec_.building_min_height +
                unit(rng) * (spec_.building_max_height - spec_.building_min_height);
            const double yaw_jitter = spec_.building_yaw_jitter * (2.0 * unit(rng) - 1.0);
            // Facade relief: slice the frontage into panels with jittered
            // setbacks so walls expose along-street geometry, not one plane.
            const int panels = std::max(
                1, static_cast<int>(std::lround(length / spec_.building_panel_width)));
            const double panel_len = length / panels;
            for (int p = 0; p < panels; ++p) {
                const double panel_s = s + (p + 0.5) * panel_len;
                const double panel_along = panel_s / path_length;
                const double panel_offset =
                    offset + spec_.building_relief * (2.0 * unit(rng) - 1.0);
                const double panel_height = std::max(2.0, height - 0.8 * unit(rng));
                add_prism(path_point(panel_along, side, panel_offset), panel_len + 0.3, depth,
                          panel_height, path_heading(panel_along) + yaw_jitter, sunk_base);
            }
            ++buildings_placed;
            s += length + spec_.building_gap_min +
                 unit(rng) * (spec_.building_gap_max - spec_.building_gap_min);
        }
    }
    int cars_placed = 0;
    for (const double side : {-1.0, 1.0}) {
        double s = unit(rng) * spec_.car_spacing_max;
        while (cars_placed < spec_.num_cars) {
            const double length = 4.2 + unit(rng) * 0.6;
            if (s + length > path_length) {
                break;
            }
            const double along = (s + 0.5 * length) / path_length;
            const double offset = spec_.car_clearance + unit(rng);
            const Eigen::Vector2d center = path_point(along, side, offset);
            const double width = 1.7 + unit(rng) * 0.3;
            const double height = 1.3 + unit(rng) * 0.4;
            const double yaw = path_heading(along) + 0.05 * (2.0 * unit(rng) - 1.0);
            add_prism(center, length, width, height, yaw, sunk_base);
            ++cars_placed;
            s += length + spec_.car_spacing_min +
                 unit(rng) * (spec_.car_spacing_max - spec_.car_spacing_min);
        }
    }
    for (int i = 0; i < spec_.num_poles; ++i) {
        const double along = unit(rng);
        const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
        const double span = std::max(
            spec_.corridor_clearance + spec_.corridor_width - spec_.pole_clearance, 1.0);
        const double offset = spec_.pole_clearance + unit(rng) * span;
        const Eigen::Vector2d center = path_point(along, side, offset);
        const double size =
            spec_.pole_min_size + unit(rng) * (spec_.pole_max_size - spec_.pole_min_size);
        const double height =
            spec_.pole_min_height + unit(rng) * (spec_.pole_max_height - spec_.pole_min_height);
        add_prism(center, size, size, height, unit(rng) * kPi, sunk_base);
        if (unit(rng) < spec_.tree_fraction) {
            // Canopy block riding the trunk; its underside faces the sensor.
            const double crown_w = 2.0 + unit(rng) * 2.4;
            const double crown_d = 2.0 + unit(rng) * 2.4;
            const double crown_top = height + 1.2 + unit(rng) * 1.3;
            add_prism(center, crown_w, crown_d, crown_top, unit(rng) * kPi, height - 0.3);
        }
    }
    for (int i = 0; i < spec_.num_clutter; ++i) {
        const double along = unit(rng);
        const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
        const double offset = spec_.clutter_clearance + unit(rng) * spec_.clutter_width;
        const Eigen::Vector2d center = path_point(along, side, offset);
        const double size_x =
            spec_.clutter_min_size + unit(rng) * (spec_.clutter_max_size - spec_.clutter_min_size);
        const double size_y =
            spec_.clutter_min_size + unit(rng) * (spec_.clutter_max_size - spec_.clutter_min_size);
        const double height =
            spec_.clutter_min_height +
            unit(rng) * (spec_.clutter_max_height - spec_.clutter_min_height);
        add_prism(center, size_x, size_y, height, unit(rng) * kPi, sunk_base);
    }
}

RigidTransform SyntheticWorld::PoseAt(double time) const {
    const double t = time - spec_.start_pause;
    double arc = 0.0;
    if (t <= 0.0) {
        arc = 0.0;
    } else if (spec_.ramp_time > 0.0 && t < spec_.ramp_time) {
        arc = spec_.speed * t * t / (2.0 * spec_.ramp_time);
    } else if (spec_.ramp_time > 0.0) {
        arc = spec_.speed * (t - 0.5 * spec_.ramp_time);
    } else {
        arc = spec_.speed * t;
    }
    double x = 0.0;
    double y = 0.0;
    double z = spec_.sensor_height;
    double yaw = 0.0;
    if (spec_.path == SyntheticWorldSpec::Path::kLoop) {
        const double theta = arc / loop_radius_;
        x = loop_radius_ * std::sin(theta);
        y = loop_radius_ * (1.0 - std::cos(theta));
        yaw = theta;
    } else {
        x = arc;
    }
    double roll = 0.0;
    double pitch = 0.0;
    if (spec_.handheld) {
        z += 0.04 * std::sin(2.0 * kPi * 1.8 * time);
        roll = 0.05 * std::sin(2.0 * kPi * 0.9 * time);
        pitch = 0.04 * std::sin(2.0 * kPi * 1.3 * time + 1.0);
        yaw += 0.03 * std::sin(2.0 * kPi * 0.6 * time + 2.0);
    } else {
        // Suspension response: the mount never retraces the identical attitude,
        // so successive sweeps do not stamp identical ground rings into the map.
        z += spec_.bounce_amplitude * std::sin(2.0 * kPi * 1.87 * time + 0.7);
        roll = spec_.attitude_amplitude * std::sin(2.0 * kPi * 1.13 * time);
        pitch = spec_.attitude_amplitude * std::sin(2.0 * kPi * 0.79 * time + 1.7);
    }
    const Eigen::Quaterniond q =
        Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
        Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
        Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX());
    return RigidTransform::FromQuaternion(q, Eigen::Vector3d(x, y, z));
}

double SyntheticWorld::ScanStartTime(std::size_t scan_index) const {
    return static_cast<double>(scan_index) * spec_.sweep_duration;
}

RigidTransform SyntheticWorld::GroundTruthPose(std::size_t scan_index) const {
    return PoseAt(ScanStartTime(scan_index) + 0.5 * spec_.sweep_duration);
}

double SyntheticWorld::TerrainHeight(double x, double y) const {
    const auto ix = static_cast<std::int64_t>(std::floor(x / spec_.terrain_tile_size));
    const auto iy = static_cast<std::int64_t>(std::floor(y / spec_.terrain_tile_size));
    const double cx = (static_cast<double>(ix) + 0.5) * spec_.terrain_tile_size;
    const double cy = (static_cast<double>(iy) + 0.5) * spec_.terrain_tile_size;
    const double swell = spec_.terrain_amplitude *
                         std::sin(2.0 * kPi * cx / spec_.terrain_wavelength_x) *
                         std::sin(2.0 * kPi * cy / spec_.terrain_wavelength_y);
    const std::uint64_t mixed =
        SplitMix64(spec_.seed ^ (static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL) ^
                   (static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4FULL));
    const double unit = static_cast<double>(mixed >> 11) * 0x1.0p-53;
    double height = swell + (2.0 * unit - 1.0) * spec_.terrain_jitter;
    // Raised sidewalks and speed tables, evaluated at the tile center so the
    // surface stays tile-consistent. Sidewalk: plateau beyond the curb line.
    // Speed tables: raised bands across the roadway at regular path progress.
    if (spec_.curb_height > 0.0 || spec_.crosswalk_height > 0.0) {
        double lateral = 0.0;
        double along = 0.0;
        if (spec_.path == SyntheticWorldSpec::Path::kLoop) {
            const double radius = spec_.loop_circumference / (2.0 * kPi);
            lateral = std::abs(Eigen::Vector2d(cx, cy - radius).norm() - radius);
            double angle = std::atan2(cx, radius - cy);
            if (angle < 0.0) {
                angle += 2.0 * kPi;
            }
            along = angle * radius;
        } else {
            lateral = std::abs(cy);
            along = cx;
        }
        if (lateral >= spec_.curb_offset) {
            if (spec_.curb_height > 0.0) {
                height += spec_.curb_height;
            }
        } else if (spec_.crosswalk_height > 0.0 && spec_.crosswalk_spacing > 0.0) {
            double phase = std::fmod(along, spec_.crosswalk_spacing);
            if (phase < 0.0) {
                phase += spec_.crosswalk_spacing;
            }
            if (std::abs(phase - 0.5 * spec_.crosswalk_spacing) <= 0.5 * spec_.crosswalk_width) {
                height += spec_.crosswalk_height;
            }
        }
    }
    return height;
}

std::optional<SyntheticWorld::SurfaceHit> SyntheticWorld::RaycastTerrain(
    const Eigen::Vector3d &origin, const Eigen::Vector3d &direction, double max_range) const {
    const double s = spec_.terrain_tile_size;
    const double amp = spec_.terrain_amplitude + spec_.terrain_jitter +
                       std::max(spec_.curb_height, spec_.crosswalk_height);
    std::int64_t ix = static_cast<std::int64_t>(std::floor(origin.x() / s));
    std::int64_t iy = static_cast<std::int64_t>(std::floor(origin.y() / s));

    const double dx = direction.x();
    const double dy = direction.y();
    const double dz = direction.z();
    const std::int64_t step_x = dx > 0.0 ? 1 : -1;
    const std::int64_t step_y = dy > 0.0 ? 1 : -1;
    const double inf = std::numeric_limits<double>::infinity();
    // Parameter of the next x/y tile boundary along the ray.
    auto boundary_t = [](double o, double d, std::int64_t index, std::int64_t step, double size) {
        if (std::abs(d) < 1e-15) {
            return std::numeric_limits<double>::infinity();
        }
        const double edge = (static_cast<double>(index) + (step > 0 ? 1.0 : 0.0)) * size;
        return (edge - o) / d;
    };
    double t_next_x = boundary_t(origin.x(), dx, ix, step_x, s);
    double t_next_y = boundary_t(origin.y(), dy, iy, step_y, s);
    const double delta_x = std::abs(dx) < 1e-15 ? inf : s / std::abs(dx);
    const double delta_y = std::abs(dy) < 1e-15 ? inf : s / std::abs(dy);

    double t_current = 0.0;
    while (t_current <= max_range) {
        const double tile_height = TerrainHeight(
            (static_cast<double>(ix) + 0.5) * s, (static_cast<double>(iy) + 0.5) * s);
        const double t_exit = std::min({t_next_x, t_next_y, max_range});
        if (std::abs(dz) > 1e-15) {
            const double t_hit = (tile_height - origin.z()) / dz;
            if (t_hit > 1e-9 && t_hit >= t_current && t_hit <= t_exit) {
                return SurfaceHit{t_hit, std::abs(dz)};
            }
        }
        if (t_exit >= max_range) {
            return std::nullopt;
        }
        // Rays climbing above every patch can never come back down.
        if (dz >= 0.0 && origin.z() + t_exit * dz > amp) {
            return std::nullopt;
        }
        double wall_cos = 0.0;
        if (t_next_x < t_next_y) {
            ix += step_x;
            t_next_x += delta_x;
            wall_cos = std::abs(dx);
        } else {
            iy += step_y;
            t_next_y += delta_y;
            wall_cos = std::abs(dy);
        }
        t_current = t_exit;
        // A step up at the boundary presents a curb-like wall.
        const double next_height = TerrainHeight(
            (static_cast<double>(ix) + 0.5) * s, (static_cast<double>(iy) + 0.5) * s);
        const double z_at_boundary = origin.z() + t_current * dz;
        if (z_at_boundary < next_height && t_current > 1e-9) {
            return SurfaceHit{t_current, wall_cos};
        }
    }
    return std::nullopt;
}

std::optional<SyntheticWorld::SurfaceHit> SyntheticWorld::RaycastSurface(
    const Eigen::Vector3d &origin, const Eigen::Vector3d &direction, double max_range,
    const std::vector<std::uint32_t> *candidates) const {
    std::optional<SurfaceHit> best = RaycastTerrain(origin, direction, max_range);
    const Eigen::Vector2d o2 = origin.head<2>();
    const Eigen::Vector2d d2 = direction.head<2>();
    const double d2_norm = d2.norm();
    const std::size_t count = candidates ? candidates->size() : boxes_.size();
    for (std::size_t c = 0; c < count; ++c) {
        const std::size_t i = candidates ? (*candidates)[c] : c;
        // Cheap footprint rejection before the exact slab test.
        if (d2_norm > 1e-12) {
            const Eigen::Vector2d to_center = boxes_[i].center - o2;
            const double along = to_center.dot(d2) / d2_norm;
            if (along < -box_radii_[i] || along > max_range * d2_norm + box_radii_[i]) {
                continue;
            }
            const double lateral2 = to_center.squaredNorm() - along * along;
            if (lateral2 > box_radii_[i] * box_radii_[i]) {
                continue;
            }
        }
        const std::optional<BoxHit> hit = BoxRayHit(boxes_[i], origin, direction);
        if (hit && hit->t <= max_range && (!best || hit->t < best->range)) {
            best = SurfaceHit{hit->t, hit->cos_incidence};
        }
    }
    return best;
}

std::optional<double> SyntheticWorld::Raycast(const Eigen::Vector3d &origin,
                                              const Eigen::Vector3d &direction,
                                              double max_range) const {
    const std::optional<SurfaceHit> hit = RaycastSurface(origin, direction, max_range, nullptr);
    if (!hit) {
        return std::nullopt;
    }
    return hit->range;
}

double SyntheticWorld::DistanceToSurface(const Eigen::Vector3d &point) const {
    const double s = spec_.terrain_tile_size;
    const auto ix = static_cast<std::int64_t>(std::floor(point.x() / s));
    const auto iy = static_cast<std::int64_t>(std::floor(point.y() / s));
    auto tile_height = [&](std::int64_t tx, std::int64_t ty) {
        return TerrainHeight((static_cast<double>(tx) + 0.5) * s,
                             (static_cast<double>(ty) + 0.5) * s);
    };
    double best = std::abs(point.z() - tile_height(ix, iy));

    // Curb walls between this patch and its four neighbors.
    const double h0 = tile_height(ix, iy);
    struct Wall {
        std::int64_t nx, ny;
        bool vertical_x;
        double plane;
    };
    const Wall walls[4] = {
        {ix - 1, iy, true, static_cast<double>(ix) * s},
        {ix + 1, iy, true, static_cast<double>(ix + 1) * s},
        {ix, iy - 1, false, static_cast<double>(iy) * s},
        {ix, iy + 1, false, static_cast<double>(iy + 1) * s},
    };
    for (const Wall &wall : walls) {
        const double h1 = tile_height(wall.nx, wall.ny);
        const double z_low = std::min(h0, h1);
        const double z_high = std::max(h0, h1);
        const double plane_gap =
            wall.vertical_x ? std::abs(point.x() - wall.plane) : std::abs(point.y() - wall.plane);
        const double along = wall.vertical_x ? point.y() : point.x();
        const double lane_low = (wall.vertical_x ? static_cast<double>(iy) : static_cast<double>(ix)) * s;
        const double along_gap = std::max({lane_low - along, along - (lane_low + s), 0.0});
        const double z_gap = std::max({z_low - point.z(), point.z() - z_high, 0.0});
        best = std::min(best, std::sqrt(plane_gap * plane_gap + along_gap * along_gap +
                                        z_gap * z_gap));
    }

    for (const Box &box : boxes_) {
        best = std::min(best, BoxSurfaceDistance(box, point));
    }
    return best;
}

TimedPointCloud SyntheticWorld::RenderScan(std::size_t scan_index) const {
    if (scan_index >= spec_.num_scans) {
        throw std::out_of_range("scan index beyond synthetic sequence");
    }
    TimedPointCloud cloud;
    cloud.points.reserve(
        static_cast<std::size_t>(spec_.num_azimuths) * static_cast<std::size_t>(spec_.num_beams));
    cloud.timestamps.reserve(cloud.points.capacity());

    // Prisms that no ray of this sweep can reach.
    const Eigen::Vector2d sweep_origin =
        PoseAt(ScanStartTime(scan_index) + 0.5 * spec_.sweep_duration).translation().head<2>();
    const double sweep_motion = std::abs(spec_.speed) * spec_.sweep_duration + 1.0;
    std::vector<std::uint32_t> visible;
    visible.reserve(boxes_.size());
    for (std::size_t i = 0; i < boxes_.size(); ++i) {
        const double reach = spec_.max_range + sweep_motion + box_radii_[i];
        if ((boxes_[i].center - sweep_origin).squaredNorm() <= reach * reach) {
            visible.push_back(static_cast<std::uint32_t>(i));
        }
    }

    std::mt19937_64 rng(spec_.seed * 0x9E3779B97F4A7C15ULL ^ (scan_index + 1));
    std::normal_distribution<double> noise(0.0, spec_.noise_sigma > 0.0 ? spec_.noise_sigma : 1.0);

    const double start_time = ScanStartTime(scan_index);
    const double fov_min = spec_.vertical_fov_min_deg * kPi / 180.0;
    const double fov_max = spec_.vertical_fov_max_deg * kPi / 180.0;
    const double min_return_cos = std::cos(spec_.max_incidence_deg * kPi / 180.0);
    for (int a = 0; a < spec_.num_azimuths; ++a) {
        const double tau = static_cast<double>(a) / static_cast<double>(spec_.num_azimuths);
        const RigidTransform pose = PoseAt(start_time + tau * spec_.sweep_duration);
        const double azimuth = 2.0 * kPi * tau;
        for (int b = 0; b < spec_.num_beams; ++b) {
            const double elevation =
                spec_.num_beams == 1
                    ? fov_min
                    : fov_min + (fov_max - fov_min) * static_cast<double>(b) /
                                    static_cast<double>(spec_.num_beams - 1);
            const Eigen::Vector3d dir_sensor(std::cos(elevation) * std::cos(azimuth),
                                             std::cos(elevation) * std::sin(azimuth),
                                             std::sin(elevation));
            const Eigen::Vector3d dir_world = pose.rotation() * dir_sensor;
            const std::optional<SurfaceHit> hit =
                RaycastSurface(pose.translation(), dir_world, spec_.max_range, &visible);
            if (!hit) {
                continue;
            }
            // Grazing hits scatter the pulse away instead of returning it.
            if (hit->cos_incidence < min_return_cos) {
                continue;
            }
            const double range = hit->range;
            double measured = range;
            if (spec_.surface_roughness > 0.0) {
                // Repeatable position-anchored relief so the same spot looks
                // the same from every scan.
                const Eigen::Vector3d spot = pose.translation() + range * dir_world;
                const auto cx = static_cast<std::int64_t>(std::floor(spot.x() / spec_.roughness_cell));
                const auto cy = static_cast<std::int64_t>(std::floor(spot.y() / spec_.roughness_cell));
                const auto cz = static_cast<std::int64_t>(std::floor(spot.z() / spec_.roughness_cell));
                const std::uint64_t mixed = SplitMix64(
                    spec_.seed ^ (static_cast<std::uint64_t>(cx) * 0x9E3779B97F4A7C15ULL) ^
                    (static_cast<std::uint64_t>(cy) * 0xC2B2AE3D27D4EB4FULL) ^
                    (static_cast<std::uint64_t>(cz) * 0xD6E8FEB86659FD93ULL));
                const double unit_bump = static_cast<double>(mixed >> 11) * 0x1.0p-53;
                measured += (2.0 * unit_bump - 1.0) * spec_.surface_roughness;
            }
            if (spec_.noise_sigma > 0.0) {
                measured += noise(rng);
            }
            if (measured <= 0.05) {
                continue;
            }
            cloud.points.push_back(dir_sensor * measured);
            cloud.timestamps.push_back(tau);
        }
    }
    return cloud;
}

}  // namespace voxslam
