#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxslam/geometry.hpp"
#include "voxslam/local_map.hpp"

namespace voxslam {

struct GraphNode {
    std::int64_t id = 0;
    RigidTransform estimate;
    bool fixed = false;
};

enum class EdgeKind { kOdometry, kLoop };

struct GraphEdge {
    std::int64_t from_id = 0;
    std::int64_t to_id = 0;
    RigidTransform measurement;
    Matrix6d information = Matrix6d::Identity();
    EdgeKind kind = EdgeKind::kOdometry;
};

struct OptimizeReport {
    double initial_chi2 = 0.0;
    double final_chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
    /// chi² after every accepted step, starting with the initial value.
    std::vector<double> chi2_history;
};

/// Residual of one relative-pose constraint,
/// log(measurement⁻¹ · x_from⁻¹ · x_to). Zero iff x_from·measurement = x_to.
Vector6d EdgeResidual(const RigidTransform &x_from, const RigidTransform &x_to,
                      const RigidTransform &measurement);

/// Residual plus its analytic Jacobians with respect to right perturbations
/// x·exp(eps) of either endpoint.
struct EdgeLinearization {
    Vector6d residual;
    Matrix6d j_from;
    Matrix6d j_to;
};

EdgeLinearization LinearizeEdge(const RigidTransform &x_from, const RigidTransform &x_to,
                                const RigidTransform &measurement);

/// Keypose graph: nodes are poses in the global frame, edges are relative
/// measurements. Optimization is Levenberg-Marquardt with on-manifold
/// updates X <- X·exp(delta); fixed nodes never move.
class PoseGraph {
public:
    /// Nodes get consecutive ids starting at 0. The first node defaults to
    /// fixed so the gauge is anchored.
    std::int64_t AddNode(const RigidTransform &estimate, bool fixed);
    std::int64_t AddNode(const RigidTransform &estimate);

    /// Identity information. Throws std::invalid_argument when an endpoint
    /// is missing or from == to.
    std::size_t AddOdometryEdge(std::int64_t from_id, std::int64_t to_id,
                                const RigidTransform &measurement);

    /// Identity information scaled by weight (configurable loop-edge scale).
    std::size_t AddLoopEdge(std::int64_t from_id, std::int64_t to_id,
                            const RigidTransform &measurement, double weight = 1.0);

    std::size_t AddEdge(const GraphEdge &edge);

    double Chi2() const;

    /// Throws std::runtime_error when no node is fixed (gauge unobservable).
    OptimizeReport Optimize(int max_iterations = 100, double tolerance = 1e-8);

    const std::vector<GraphNode> &nodes() const { return nodes_; }
    const std::vector<GraphEdge> &edges() const { return edges_; }
    const RigidTransform &Estimate(std::int64_t id) const { return nodes_.at(id).estimate; }
    void SetEstimate(std::int64_t id, const RigidTransform &pose) {
        nodes_.at(id).estimate = pose;
    }

    /// Plain-text interchange with VERTEX_SE3:QUAT / EDGE_SE3:QUAT / FIX
    /// records. Kind is not part of the format; on load, edges between
    /// consecutive ids are classified as odometry, the rest as loop edges.
    void Save(const std::string &path) const;
    static PoseGraph Load(const std::string &path);

private:
    std::vector<GraphNode> nodes_;
    std::vector<GraphEdge> edges_;
};

/// Final refinement pass: keypose nodes fixed at their optimized estimates,
/// one free node per scan seeded at keypose·local_pose, consecutive-scan
/// edges from the local-trajectory increments, and an identity edge tying
/// each map's first scan to its keypose. Consecutive maps share their
/// boundary scan. Returns the per-scan global trajectory in scan order.
std::vector<RigidTransform> FineGrainedOptimize(const std::vector<LocalMap> &maps,
                                                int max_iterations = 50,
                                                double tolerance = 1e-8);

}  // namespace voxslam
