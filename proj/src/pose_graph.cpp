#include "voxslam/pose_graph.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace voxslam {

namespace {

constexpr double kLambdaInit = 1e-6;
constexpr double kLambdaUp = 10.0;
constexpr double kLambdaDown = 0.1;
constexpr double kMaxLambda = 1e12;
constexpr double kRelChiTolerance = 1e-9;

}  // namespace

EdgeLinearization LinearizeEdge(const RigidTransform &x_from, const RigidTransform &x_to,
                                const RigidTransform &measurement) {
    const Twist error = Log(measurement.Inverse() * x_from.Inverse() * x_to);
    const RigidTransform b = x_from.Inverse() * x_to;
    const Matrix6d jr_inv = Se3RightJacobianInverse(error);
    return {error.Vector(), -jr_inv * Adjoint(b.Inverse()), jr_inv};
}

Vector6d EdgeResidual(const RigidTransform &x_from, const RigidTransform &x_to,
                      const RigidTransform &measurement) {
    return Log(measurement.Inverse() * x_from.Inverse() * x_to).Vector();
}

std::int64_t PoseGraph::AddNode(const RigidTransform &estimate, bool fixed) {
    const std::int64_t id = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back({id, estimate, fixed});
    return id;
}

std::int64_t PoseGraph::AddNode(const RigidTransform &estimate) {
    return AddNode(estimate, nodes_.empty());
}

std::size_t PoseGraph::AddEdge(const GraphEdge &edge) {
    if (edge.from_id < 0 || edge.from_id >= static_cast<std::int64_t>(nodes_.size()) ||
        edge.to_id < 0 || edge.to_id >= static_cast<std::int64_t>(nodes_.size())) {
        throw std::invalid_argument("PoseGraph: edge endpoint does not exist");
    }
    if (edge.from_id == edge.to_id) {
        throw std::invalid_argument("PoseGraph: self edges are not allowed");
    }
    if ((edge.information - edge.information.transpose()).norm() > 1e-9) {
        throw std::invalid_argument("PoseGraph: information matrix must be symmetric");
    }
    edges_.push_back(edge);
    return edges_.size() - 1;
}

std::size_t PoseGraph::AddOdometryEdge(std::int64_t from_id, std::int64_t to_id,
                                       const RigidTransform &measurement) {
    return AddEdge({from_id, to_id, measurement, Matrix6d::Identity(), EdgeKind::kOdometry});
}

std::size_t PoseGraph::AddLoopEdge(std::int64_t from_id, std::int64_t to_id,
                                   const RigidTransform &measurement, double weight) {
    return AddEdge({from_id, to_id, measurement, weight * Matrix6d::Identity(),
                    EdgeKind::kLoop});
}

double PoseGraph::Chi2() const {
    double chi2 = 0.0;
    for (const auto &edge : edges_) {
        const Vector6d r = EdgeResidual(nodes_[edge.from_id].estimate,
                                        nodes_[edge.to_id].estimate, edge.measurement);
        chi2 += r.dot(edge.information * r);
    }
    return chi2;
}

OptimizeReport PoseGraph::Optimize(int max_iterations, double tolerance) {
    bool any_fixed = false;
    for (const auto &node : nodes_) {
        any_fixed = any_fixed || node.fixed;
    }
    if (!any_fixed) {
        throw std::runtime_error("PoseGraph: no fixed node, gauge is unobservable");
    }

    std::vector<int> state_index(nodes_.size(), -1);
    int num_free = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].fixed) {
            state_index[i] = num_free++;
        }
    }

    OptimizeReport report;
    report.initial_chi2 = Chi2();
    report.chi2_history.push_back(report.initial_chi2);
    report.final_chi2 = report.initial_chi2;
    if (num_free == 0 || edges_.empty()) {
        report.converged = true;
        return report;
    }

    double lambda = kLambdaInit;
    double chi2 = report.initial_chi2;

    for (int iteration = 0; iteration < max_iterations; ++iteration) {
        report.iterations = iteration + 1;

        Eigen::VectorXd g = Eigen::VectorXd::Zero(6 * num_free);
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(edges_.size() * 144);

        auto add_block = [&](int row, int col, const Matrix6d &block) {
            for (int r = 0; r < 6; ++r) {
                for (int c = 0; c < 6; ++c) {
                    triplets.emplace_back(6 * row + r, 6 * col + c, block(r, c));
                }
            }
        };

        for (const auto &edge : edges_) {
            const int i_from = state_index[edge.from_id];
            const int i_to = state_index[edge.to_id];
            if (i_from < 0 && i_to < 0) {
                continue;
            }
            const EdgeLinearization lin = LinearizeEdge(
                nodes_[edge.from_id].estimate, nodes_[edge.to_id].estimate, edge.measurement);
            if (i_from >= 0) {
                add_block(i_from, i_from,
                          lin.j_from.transpose() * edge.information * lin.j_from);
                g.segment<6>(6 * i_from) +=
                    lin.j_from.transpose() * edge.information * lin.residual;
            }
            if (i_to >= 0) {
                add_block(i_to, i_to, lin.j_to.transpose() * edge.information * lin.j_to);
                g.segment<6>(6 * i_to) +=
                    lin.j_to.transpose() * edge.information * lin.residual;
            }
            if (i_from >= 0 && i_to >= 0) {
                const Matrix6d cross = lin.j_from.transpose() * edge.information * lin.j_to;
                add_block(i_from, i_to, cross);
                add_block(i_to, i_from, cross.transpose());
            }
        }

        bool accepted = false;
        while (lambda <= kMaxLambda) {
            std::vector<Eigen::Triplet<double>> damped = triplets;
            for (int d = 0; d < 6 * num_free; ++d) {
                damped.emplace_back(d, d, lambda);
            }
            Eigen::SparseMatrix<double> h(6 * num_free, 6 * num_free);
            h.setFromTriplets(damped.begin(), damped.end());

            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(h);
            if (solver.info() != Eigen::Success) {
                lambda *= kLambdaUp;
                continue;
            }
            const Eigen::VectorXd delta = solver.solve(-g);
            if (solver.info() != Eigen::Success) {
                lambda *= kLambdaUp;
                continue;
            }

            if (delta.norm() < tolerance) {
                report.converged = true;
                report.final_chi2 = chi2;
                return report;
            }

            std::vector<RigidTransform> backup;
            backup.reserve(nodes_.size());
            for (const auto &node : nodes_) {
                backup.push_back(node.estimate);
            }
            for (std::size_t i = 0; i < nodes_.size(); ++i) {
                if (state_index[i] >= 0) {
                    nodes_[i].estimate =
                        nodes_[i].estimate *
                        Exp(Twist::FromVector(delta.segment<6>(6 * state_index[i])));
                }
            }

            const double new_chi2 = Chi2();
            if (new_chi2 < chi2) {
                const double rel_change = (chi2 - new_chi2) / std::max(chi2, 1e-300);
                chi2 = new_chi2;
                report.chi2_history.push_back(chi2);
                lambda *= kLambdaDown;
                accepted = true;
                if (rel_change < kRelChiTolerance) {
                    report.converged = true;
                    report.final_chi2 = chi2;
                    return report;
                }
                break;
            }

            for (std::size_t i = 0; i < nodes_.size(); ++i) {
                nodes_[i].estimate = backup[i];
            }
            lambda *= kLambdaUp;
        }

        if (!accepted) {
            report.converged = true;
            break;
        }
    }

    report.final_chi2 = chi2;
    return report;
}

void PoseGraph::Save(const std::string &path) const {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("PoseGraph::Save: cannot open " + path);
    }
    char line[512];
    for (const auto &node : nodes_) {
        const Eigen::Quaterniond q = node.estimate.Quaternion();
        const Eigen::Vector3d t = node.estimate.translation();
        std::snprintf(line, sizeof(line),
                      "VERTEX_SE3:QUAT %" PRId64
                      " %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                      node.id, t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
        os << line;
        if (node.fixed) {
            os << "FIX " << node.id << "\n";
        }
    }
    for (const auto &edge : edges_) {
        const Eigen::Quaterniond q = edge.measurement.Quaternion();
        const Eigen::Vector3d t = edge.measurement.translation();
        std::snprintf(line, sizeof(line),
                      "EDGE_SE3:QUAT %" PRId64 " %" PRId64
                      " %.17g %.17g %.17g %.17g %.17g %.17g %.17g",
                      edge.from_id, edge.to_id, t.x(), t.y(), t.z(), q.x(), q.y(), q.z(),
                      q.w());
        os << line;
        for (int r = 0; r < 6; ++r) {
            for (int c = r; c < 6; ++c) {
                std::snprintf(line, sizeof(line), " %.17g", edge.information(r, c));
                os << line;
            }
        }
        os << "\n";
    }
    if (!os) {
        throw std::runtime_error("PoseGraph::Save: write failed for " + path);
    }
}

PoseGraph PoseGraph::Load(const std::string &path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("PoseGraph::Load: cannot open " + path);
    }
    PoseGraph graph;
    std::vector<std::int64_t> fixed_ids;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "VERTEX_SE3:QUAT") {
            std::int64_t id;
            double tx, ty, tz, qx, qy, qz, qw;
            ss >> id >> tx >> ty >> tz >> qx >> qy >> qz >> qw;
            if (!ss) {
                throw std::runtime_error("PoseGraph::Load: malformed vertex in " + path);
            }
            if (id != static_cast<std::int64_t>(graph.nodes_.size())) {
                throw std::runtime_error("PoseGraph::Load: vertex ids must be consecutive");
            }
            graph.AddNode(RigidTransform::FromQuaternion(Eigen::Quaterniond(qw, qx, qy, qz),
                                                         {tx, ty, tz}),
                          false);
        } else if (tag == "FIX") {
            std::int64_t id;
            ss >> id;
            fixed_ids.push_back(id);
        } else if (tag == "EDGE_SE3:QUAT") {
            std::int64_t from, to;
            double tx, ty, tz, qx, qy, qz, qw;
            ss >> from >> to >> tx >> ty >> tz >> qx >> qy >> qz >> qw;
            if (!ss) {
                throw std::runtime_error("PoseGraph::Load: malformed edge in " + path);
            }
            Matrix6d info = Matrix6d::Identity();
            double value;
            int r = 0, c = 0;
            bool have_info = false;
            while (ss >> value) {
                if (!have_info) {
                    info.setZero();
                    have_info = true;
                }
                info(r, c) = value;
                info(c, r) = value;
                if (++c == 6) {
                    c = ++r;
                }
                if (r == 6) break;
            }
            GraphEdge edge;
            edge.from_id = from;
            edge.to_id = to;
            edge.measurement = RigidTransform::FromQuaternion(
                Eigen::Quaterniond(qw, qx, qy, qz), {tx, ty, tz});
            edge.information = info;
            edge.kind = (to == from + 1) ? EdgeKind::kOdometry : EdgeKind::kLoop;
            graph.AddEdge(edge);
        }
    }
    for (const auto id : fixed_ids) {
        graph.nodes_.at(id).fixed = true;
    }
    return graph;
}

std::vector<RigidTransform> FineGrainedOptimize(const std::vector<LocalMap> &maps,
                                                int max_iterations, double tolerance) {
    if (maps.empty()) {
        return {};
    }

    PoseGraph graph;
    for (const auto &map : maps) {
        graph.AddNode(map.keypose, true);
    }

    // Consecutive maps share the boundary scan, so the scan at a map's
    // start index already has a node created by the previous map.
    const std::size_t first_scan = maps.front().start_scan_index;
    const std::size_t num_scans = maps.back().end_scan_index - first_scan + 1;
    std::vector<std::int64_t> scan_node(num_scans, -1);
    for (const auto &map : maps) {
        for (std::size_t i = 0; i < map.local_trajectory.size(); ++i) {
            const std::size_t scan = map.start_scan_index + i - first_scan;
            if (scan_node[scan] < 0) {
                scan_node[scan] = graph.AddNode(map.keypose * map.local_trajectory[i], false);
            }
        }
    }

    for (std::size_t k = 0; k < maps.size(); ++k) {
        const auto &map = maps[k];
        const std::size_t base = map.start_scan_index - first_scan;
        graph.AddOdometryEdge(static_cast<std::int64_t>(k), scan_node[base],
                              RigidTransform::Identity());
        for (std::size_t i = 0; i + 1 < map.local_trajectory.size(); ++i) {
            graph.AddOdometryEdge(
                scan_node[base + i], scan_node[base + i + 1],
                map.local_trajectory[i].Inverse() * map.local_trajectory[i + 1]);
        }
    }

    graph.Optimize(max_iterations, tolerance);

    std::vector<RigidTransform> trajectory;
    trajectory.reserve(num_scans);
    for (std::size_t scan = 0; scan < num_scans; ++scan) {
        trajectory.push_back(graph.Estimate(scan_node[scan]));
    }
    return trajectory;
}

}  // namespace voxslam
