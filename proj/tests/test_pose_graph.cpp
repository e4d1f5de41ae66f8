#include "voxslam/pose_graph.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <vector>

using namespace voxslam;

namespace {

std::mt19937_64 rng(31);

RigidTransform RandomTransform(double max_angle, double max_translation) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::Vector3d axis(dist(rng), dist(rng), dist(rng));
    while (axis.norm() < 1e-3) axis = {dist(rng), dist(rng), dist(rng)};
    axis.normalize();
    std::uniform_real_distribution<double> angle(-max_angle, max_angle);
    return Exp(Twist(angle(rng) * axis,
                     max_translation * Eigen::Vector3d(dist(rng), dist(rng), dist(rng))));
}

// Reference optimizer, written independently of PoseGraph::Optimize: dense
// normal equations, Jacobians by central finite differences, plain damped
// iteration until the objective stalls.
struct DenseOracle {
    std::vector<RigidTransform> estimates;
    std::vector<bool> fixed;
    struct Edge {
        int from, to;
        RigidTransform z;
        Matrix6d info;
    };
    std::vector<Edge> edge_list;

    double Chi2() const {
        double total = 0.0;
        for (const auto &e : edge_list) {
            const Vector6d r = EdgeResidual(estimates[e.from], estimates[e.to], e.z);
            total += r.dot(e.info * r);
        }
        return total;
    }

    void Run(int max_iterations = 200) {
        std::vector<int> index(estimates.size(), -1);
        int free_count = 0;
        for (std::size_t i = 0; i < estimates.size(); ++i) {
            if (!fixed[i]) index[i] = free_count++;
        }
        const int n = 6 * free_count;
        double lambda = 1e-6;
        double chi2 = Chi2();
        const double h = 1e-6;

        for (int it = 0; it < max_iterations; ++it) {
            Eigen::MatrixXd big_h = Eigen::MatrixXd::Zero(n, n);
            Eigen::VectorXd g = Eigen::VectorXd::Zero(n);

            for (const auto &e : edge_list) {
                const Vector6d r = EdgeResidual(estimates[e.from], estimates[e.to], e.z);
                auto fd_jacobian = [&](int node) {
                    Matrix6d j;
                    for (int k = 0; k < 6; ++k) {
                        Vector6d dv = Vector6d::Zero();
                        dv(k) = h;
                        RigidTransform plus = estimates[node] * Exp(Twist::FromVector(dv));
                        RigidTransform minus = estimates[node] * Exp(Twist::FromVector(-dv));
                        const Vector6d rp =
                            node == e.from ? EdgeResidual(plus, estimates[e.to], e.z)
                                           : EdgeResidual(estimates[e.from], plus, e.z);
                        const Vector6d rm =
                            node == e.from ? EdgeResidual(minus, estimates[e.to], e.z)
                                           : EdgeResidual(estimates[e.from], minus, e.z);
                        j.col(k) = (rp - rm) / (2.0 * h);
                    }
                    return j;
                };

                const int fi = index[e.from], ti = index[e.to];
                Matrix6d jf, jt;
                if (fi >= 0) jf = fd_jacobian(e.from);
                if (ti >= 0) jt = fd_jacobian(e.to);
                if (fi >= 0) {
                    big_h.block<6, 6>(6 * fi, 6 * fi) += jf.transpose() * e.info * jf;
                    g.segment<6>(6 * fi) += jf.transpose() * e.info * r;
                }
                if (ti >= 0) {
                    big_h.block<6, 6>(6 * ti, 6 * ti) += jt.transpose() * e.info * jt;
                    g.segment<6>(6 * ti) += jt.transpose() * e.info * r;
                }
                if (fi >= 0 && ti >= 0) {
                    big_h.block<6, 6>(6 * fi, 6 * ti) += jf.transpose() * e.info * jt;
                    big_h.block<6, 6>(6 * ti, 6 * fi) += jt.transpose() * e.info * jf;
                }
            }

            bool improved = false;
            for (int attempt = 0; attempt < 40; ++attempt) {
                const Eigen::VectorXd delta =
                    (big_h + lambda * Eigen::MatrixXd::Identity(n, n)).ldlt().solve(-g);
                std::vector<RigidTransform> backup = estimates;
                for (std::size_t i = 0; i < estimates.size(); ++i) {
                    if (index[i] >= 0) {
                        estimates[i] =
                            estimates[i] *
                            Exp(Twist::FromVector(delta.segment<6>(6 * index[i])));
                    }
                }
                const double next = Chi2();
                if (next < chi2) {
                    chi2 = next;
                    lambda *= 0.5;
                    improved = true;
                    break;
                }
                estimates = backup;
                lambda *= 4.0;
            }
            if (!improved || delta_below(g, n)) {
                break;
            }
        }
    }

    static bool delta_below(const Eigen::VectorXd &g, int n) {
        return n == 0 || g.norm() < 1e-14;
    }
};

}  // namespace

TEST_SUITE("pose_graph") {

TEST_CASE("consistent edges carry zero residual") {
    PoseGraph graph;
    graph.AddNode(RigidTransform::Identity());
    graph.AddNode(RigidTransform::Identity(), false);
    graph.AddOdometryEdge(0, 1, RigidTransform::Identity());
    CHECK(graph.Chi2() == 0.0);

    PoseGraph shifted;
    shifted.AddNode(RigidTransform::Identity());
    shifted.AddNode(RigidTransform::FromTranslation({5.0, 0.0, 0.0}), false);
    shifted.AddOdometryEdge(0, 1, RigidTransform::FromTranslation({5.0, 0.0, 0.0}));
    CHECK(shifted.Chi2() < 1e-24);
}

TEST_CASE("a consistent random chain has vanishing chi2") {
    PoseGraph graph;
    std::vector<RigidTransform> truth;
    RigidTransform pose;
    for (int i = 0; i < 50; ++i) {
        truth.push_back(pose);
        graph.AddNode(pose);
        pose = pose * RandomTransform(0.3, 2.0);
    }
    for (int i = 0; i + 1 < 50; ++i) {
        graph.AddOdometryEdge(i, i + 1, truth[i].Inverse() * truth[i + 1]);
    }
    CHECK(graph.Chi2() < 1e-18);
}

TEST_CASE("edge endpoints are validated") {
    PoseGraph graph;
    graph.AddNode(RigidTransform::Identity());
    CHECK_THROWS_AS(graph.AddOdometryEdge(0, 1, RigidTransform::Identity()),
                    std::invalid_argument);
    graph.AddNode(RigidTransform::Identity(), false);
    CHECK_THROWS_AS(graph.AddOdometryEdge(1, 1, RigidTransform::Identity()),
                    std::invalid_argument);
    GraphEdge asymmetric;
    asymmetric.from_id = 0;
    asymmetric.to_id = 1;
    asymmetric.information(0, 5) = 1.0;
    CHECK_THROWS_AS(graph.AddEdge(asymmetric), std::invalid_argument);
}

TEST_CASE("a loop edge matching the estimates leaves chi2 unchanged") {
    PoseGraph graph;
    RigidTransform pose;
    for (int i = 0; i < 5; ++i) {
        graph.AddNode(pose);
        pose = pose * RigidTransform::FromTranslation({1.0, 0.0, 0.0});
    }
    for (int i = 0; i + 1 < 5; ++i) {
        graph.AddOdometryEdge(i, i + 1, RigidTransform::FromTranslation({1.0, 0.0, 0.0}));
    }
    const double before = graph.Chi2();
    graph.AddLoopEdge(0, 4, graph.Estimate(0).Inverse() * graph.Estimate(4));
    CHECK(graph.Chi2() == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("a contradicting loop edge raises chi2 and optimization lowers it") {
    PoseGraph graph;
    RigidTransform pose;
    const RigidTransform step = RigidTransform::FromTranslation({1.0, 0.0, 0.0});
    // Drifted odometry: measurements claim 1.02 m while estimates step 1 m.
    const RigidTransform drifted = RigidTransform::FromTranslation({1.02, 0.0, 0.0});
    for (int i = 0; i < 10; ++i) {
        graph.AddNode(pose);
        pose = pose * step;
    }
    for (int i = 0; i + 1 < 10; ++i) {
        graph.AddOdometryEdge(i, i + 1, drifted);
    }
    graph.AddLoopEdge(0, 9, RigidTransform::FromTranslation({9.0, 0.0, 0.0}));
    const double before = graph.Chi2();
    CHECK(before > 0.0);
    const OptimizeReport report = graph.Optimize();
    CHECK(report.final_chi2 < before);
    for (std::size_t i = 1; i < report.chi2_history.size(); ++i) {
        CHECK(report.chi2_history[i] <= report.chi2_history[i - 1]);
    }
}

TEST_CASE("single free node converges to the exact solution") {
    PoseGraph graph;
    graph.AddNode(RigidTransform::Identity());
    graph.AddNode(RigidTransform::FromTranslation({0.5, 0.0, 0.0}), false);
    graph.AddOdometryEdge(0, 1, RigidTransform::FromTranslation({1.0, 0.0, 0.0}));
    graph.Optimize(100, 1e-12);
    CHECK((graph.Estimate(1).translation() - Eigen::Vector3d(1.0, 0.0, 0.0)).norm() < 1e-9);
    CHECK(RotationAngle(graph.Estimate(1).rotation()) < 1e-9);
}

TEST_CASE("optimizing a consistent graph leaves estimates bit-identical") {
    PoseGraph graph;
    std::vector<RigidTransform> truth;
    RigidTransform pose;
    for (int i = 0; i < 8; ++i) {
        truth.push_back(pose);
        graph.AddNode(pose);
        pose = pose * RandomTransform(0.2, 1.5);
    }
    for (int i = 0; i + 1 < 8; ++i) {
        graph.AddOdometryEdge(i, i + 1, truth[i].Inverse() * truth[i + 1]);
    }
    const OptimizeReport report = graph.Optimize();
    CHECK(report.converged);
    for (int i = 0; i < 8; ++i) {
        CHECK(graph.Estimate(i).BitwiseEqual(truth[i]));
    }
}

TEST_CASE("analytic jacobians match central finite differences") {
    const double h = 1e-6;
    for (int trial = 0; trial < 30; ++trial) {
        const RigidTransform x_from = RandomTransform(1.5, 5.0);
        const RigidTransform x_to = RandomTransform(1.5, 5.0);
        const RigidTransform z = RandomTransform(0.3, 1.0) * x_from.Inverse() * x_to;
        const EdgeLinearization lin = LinearizeEdge(x_from, x_to, z);

        Matrix6d fd_from, fd_to;
        for (int k = 0; k < 6; ++k) {
            Vector6d dv = Vector6d::Zero();
            dv(k) = h;
            const RigidTransform dplus = Exp(Twist::FromVector(dv));
            const RigidTransform dminus = Exp(Twist::FromVector(-dv));
            fd_from.col(k) = (EdgeResidual(x_from * dplus, x_to, z) -
                              EdgeResidual(x_from * dminus, x_to, z)) /
                             (2.0 * h);
            fd_to.col(k) = (EdgeResidual(x_from, x_to * dplus, z) -
                            EdgeResidual(x_from, x_to * dminus, z)) /
                           (2.0 * h);
        }
        CHECK((lin.j_from - fd_from).norm() < 1e-5);
        CHECK((lin.j_to - fd_to).norm() < 1e-5);
        CHECK((lin.residual - EdgeResidual(x_from, x_to, z)).norm() == 0.0);
    }
}

TEST_CASE("square loop agrees with the dense finite-difference oracle") {
    // Four keyposes with 90 degree turns; odometry stretched by 2 percent,
    // loop edge closing the square exactly.
    const double side = 10.0;
    const RigidTransform turn =
        Exp(Twist(Eigen::Vector3d(0.0, 0.0, M_PI / 2.0), Eigen::Vector3d::Zero()));
    const RigidTransform leg = RigidTransform::FromTranslation({side, 0.0, 0.0}) * turn;
    const RigidTransform stretched =
        RigidTransform::FromTranslation({side * 1.02, 0.0, 0.0}) * turn;

    PoseGraph graph;
    RigidTransform pose;
    for (int i = 0; i < 4; ++i) {
        graph.AddNode(pose);
        pose = pose * stretched;
    }
    for (int i = 0; i + 1 < 4; ++i) {
        graph.AddOdometryEdge(i, i + 1, stretched);
    }
    graph.AddLoopEdge(3, 0, leg);

    DenseOracle oracle;
    for (int i = 0; i < 4; ++i) {
        oracle.estimates.push_back(graph.Estimate(i));
        oracle.fixed.push_back(i == 0);
    }
    for (const auto &edge : graph.edges()) {
        oracle.edge_list.push_back({static_cast<int>(edge.from_id),
                                    static_cast<int>(edge.to_id), edge.measurement,
                                    edge.information});
    }

    graph.Optimize(200, 1e-12);
    oracle.Run();

    for (int i = 0; i < 4; ++i) {
        CHECK((graph.Estimate(i).translation() - oracle.estimates[i].translation()).norm() <
              1e-3);
    }
    CHECK(graph.Chi2() == doctest::Approx(oracle.Chi2()).epsilon(0.01));
}

TEST_CASE("optimizing with no fixed node reports a gauge failure") {
    PoseGraph graph;
    graph.AddNode(RigidTransform::Identity(), false);
    graph.AddNode(RigidTransform::FromTranslation({1.0, 0.0, 0.0}), false);
    graph.AddOdometryEdge(0, 1, RigidTransform::FromTranslation({2.0, 0.0, 0.0}));
    CHECK_THROWS_AS(graph.Optimize(), std::runtime_error);
}

TEST_CASE("solutions are equivariant to a global left composition") {
    auto build = [](const RigidTransform &offset) {
        PoseGraph graph;
        RigidTransform pose = offset;
        const RigidTransform drifted =
            Exp(Twist(Eigen::Vector3d(0.0, 0.0, 0.01), Eigen::Vector3d(1.01, 0.02, 0.0)));
        for (int i = 0; i < 12; ++i) {
            graph.AddNode(pose);
            pose = pose * drifted;
        }
        for (int i = 0; i + 1 < 12; ++i) {
            graph.AddOdometryEdge(i, i + 1, drifted);
        }
        graph.AddLoopEdge(0, 11, RigidTransform::FromTranslation({11.0, 0.0, 0.0}));
        graph.Optimize(100, 1e-12);
        return graph;
    };

    const RigidTransform t0 =
        Exp(Twist(Eigen::Vector3d(0.2, -0.1, 0.7), Eigen::Vector3d(4.0, -2.0, 1.0)));
    const PoseGraph base = build(RigidTransform::Identity());
    const PoseGraph moved = build(t0);
    for (int i = 0; i < 12; ++i) {
        const RigidTransform expected = t0 * base.Estimate(i);
        CHECK((moved.Estimate(i).Matrix() - expected.Matrix()).norm() < 1e-6);
    }
}

TEST_CASE("fixed nodes stay bit-identical through optimization") {
    PoseGraph graph;
    const RigidTransform anchor = RandomTransform(1.0, 3.0);
    graph.AddNode(anchor, true);
    graph.AddNode(anchor * RigidTransform::FromTranslation({0.9, 0.1, 0.0}), false);
    graph.AddOdometryEdge(0, 1, RigidTransform::FromTranslation({1.0, 0.0, 0.0}));
    graph.Optimize();
    CHECK(graph.Estimate(0).BitwiseEqual(anchor));
}

TEST_CASE("residual vanishes exactly when the measurement closes the pair") {
    const RigidTransform x_from = RandomTransform(1.0, 3.0);
    const RigidTransform x_to = RandomTransform(1.0, 3.0);
    const RigidTransform closing = x_from.Inverse() * x_to;
    CHECK(EdgeResidual(x_from, x_to, closing).norm() < 1e-12);
    const RigidTransform off = closing * RigidTransform::FromTranslation({0.01, 0.0, 0.0});
    CHECK(EdgeResidual(x_from, x_to, off).norm() > 1e-3);
}

TEST_CASE("plain-text export and import round-trip") {
    PoseGraph graph;
    RigidTransform pose;
    for (int i = 0; i < 6; ++i) {
        graph.AddNode(pose, i == 0);
        pose = pose * RandomTransform(0.4, 2.0);
    }
    for (int i = 0; i + 1 < 6; ++i) {
        graph.AddOdometryEdge(i, i + 1, graph.Estimate(i).Inverse() * graph.Estimate(i + 1));
    }
    graph.AddLoopEdge(0, 5, graph.Estimate(0).Inverse() * graph.Estimate(5), 2.5);

    const std::string path = "pose_graph_roundtrip.g2o";
    graph.Save(path);
    const PoseGraph loaded = PoseGraph::Load(path);
    std::remove(path.c_str());

    REQUIRE(loaded.nodes().size() == graph.nodes().size());
    REQUIRE(loaded.edges().size() == graph.edges().size());
    CHECK(loaded.nodes()[0].fixed);
    for (std::size_t i = 1; i < loaded.nodes().size(); ++i) {
        CHECK(!loaded.nodes()[i].fixed);
    }
    for (std::size_t i = 0; i < graph.nodes().size(); ++i) {
        CHECK((loaded.Estimate(i).Matrix() - graph.Estimate(i).Matrix()).norm() < 1e-12);
    }
    for (std::size_t i = 0; i < graph.edges().size(); ++i) {
        CHECK((loaded.edges()[i].measurement.Matrix() - graph.edges()[i].measurement.Matrix())
                  .norm() < 1e-12);
        CHECK((loaded.edges()[i].information - graph.edges()[i].information).norm() < 1e-12);
        CHECK(loaded.edges()[i].kind == graph.edges()[i].kind);
    }
    CHECK(loaded.Chi2() == doctest::Approx(graph.Chi2()).epsilon(1e-9));
}

TEST_CASE("fine-grained pass is exact for a single uncorrected map") {
    LocalMap map(0, RandomTransform(0.5, 10.0), 1.0, 20, 0);
    RigidTransform pose;
    for (int i = 0; i < 20; ++i) {
        pose = pose * RandomTransform(0.05, 1.0);
        Integrate(map, pose, {});
    }
    const std::vector<RigidTransform> trajectory = FineGrainedOptimize({map});
    REQUIRE(trajectory.size() == map.local_trajectory.size());
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        CHECK(trajectory[i].BitwiseEqual(map.keypose * map.local_trajectory[i]));
    }
}

TEST_CASE("fine-grained pass restores continuity and beats rigid re-anchoring") {
    // Two maps; loop closure moved the second keypose after the fact.
    LocalMap first(0, RigidTransform::Identity(), 1.0, 20, 0);
    RigidTransform pose;
    const RigidTransform step = RigidTransform::FromTranslation({1.0, 0.0, 0.0});
    for (int i = 0; i < 10; ++i) {
        pose = pose * step;
        Integrate(first, pose, {});
    }
    LocalMap second = Split(first, 1e9);
    for (int i = 0; i < 10; ++i) {
        Integrate(second, second.local_trajectory.back() * step, {});
    }
    // Pretend optimization nudged the second keypose.
    const RigidTransform nudge =
        Exp(Twist(Eigen::Vector3d(0.0, 0.0, 0.03), Eigen::Vector3d(0.4, 0.25, 0.0)));
    second.keypose = second.keypose * nudge;

    const std::vector<LocalMap> maps = {first, second};
    const std::vector<RigidTransform> smooth = FineGrainedOptimize(maps, 100, 1e-10);

    // Naive output: rigidly re-anchor each map, taking the boundary scan
    // from the later map.
    std::vector<RigidTransform> naive;
    for (std::size_t i = 0; i < first.local_trajectory.size() - 1; ++i) {
        naive.push_back(first.keypose * first.local_trajectory[i]);
    }
    for (const auto &local : second.local_trajectory) {
        naive.push_back(second.keypose * local);
    }
    REQUIRE(naive.size() == smooth.size());

    auto max_jump = [](const std::vector<RigidTransform> &traj) {
        double worst = 0.0;
        for (std::size_t i = 1; i < traj.size(); ++i) {
            const double actual =
                (traj[i].translation() - traj[i - 1].translation()).norm();
            worst = std::max(worst, std::abs(actual - 1.0));
        }
        return worst;
    };
    CHECK(max_jump(smooth) < max_jump(naive));
}

}  // TEST_SUITE
