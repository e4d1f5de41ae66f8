#include "voxslam/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace voxslam {

namespace {

constexpr double kSmallAngle = 1e-8;
constexpr double kSeriesAngle = 1e-2;
constexpr double kMaxLogAngle = M_PI - 1e-6;

// Integration of the rotational motion over the translation, Barfoot's Q block.
Eigen::Matrix3d QMatrix(const Eigen::Vector3d &omega, const Eigen::Vector3d &v) {
    const double theta = omega.norm();
    const Eigen::Matrix3d wx = Skew(omega);
    const Eigen::Matrix3d vx = Skew(v);
    const double theta2 = theta * theta;

    double c1, c2, c3;
    if (theta < kSeriesAngle) {
        c1 = 1.0 / 6.0 - theta2 / 120.0;
        c2 = -1.0 / 24.0 + theta2 / 720.0;
        c3 = -1.0 / 120.0 + theta2 / 5040.0;
    } else {
        const double theta3 = theta2 * theta;
        const double theta4 = theta2 * theta2;
        const double theta5 = theta4 * theta;
        const double s = std::sin(theta);
        const double c = std::cos(theta);
        c1 = (theta - s) / theta3;
        c2 = (1.0 - theta2 / 2.0 - c) / theta4;
        c3 = (theta - s - theta3 / 6.0) / theta5;
    }

    const Eigen::Matrix3d wvw = wx * vx * wx;
    Eigen::Matrix3d q = 0.5 * vx;
    q += c1 * (wx * vx + vx * wx + wvw);
    q -= c2 * (wx * wx * vx + vx * wx * wx - 3.0 * wvw);
    q -= 0.5 * (c2 - 3.0 * c3) * (wvw * wx + wx * wvw);
    return q;
}

}  // namespace

Eigen::Matrix3d Skew(const Eigen::Vector3d &v) {
    Eigen::Matrix3d m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
        -v.y(), v.x(), 0.0;
    return m;
}

Eigen::Matrix3d So3Exp(const Eigen::Vector3d &omega) {
    const double theta = omega.norm();
    if (theta < kSmallAngle) {
        return Eigen::Matrix3d::Identity() + Skew(omega);
    }
    const Eigen::Matrix3d wx = Skew(omega);
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    return Eigen::Matrix3d::Identity() + a * wx + b * wx * wx;
}

Eigen::Vector3d So3Log(const Eigen::Matrix3d &rotation) {
    const Eigen::Vector3d vee(rotation(2, 1) - rotation(1, 2),
                              rotation(0, 2) - rotation(2, 0),
                              rotation(1, 0) - rotation(0, 1));
    const double trace = rotation.trace();
    const double theta = std::atan2(0.5 * vee.norm(), 0.5 * (trace - 1.0));
    if (theta >= kMaxLogAngle) {
        throw std::domain_error("So3Log: rotation angle too close to pi");
    }
    if (theta < kSmallAngle) {
        return 0.5 * vee;
    }
    return (0.5 * theta / std::sin(theta)) * vee;
}

double RotationAngle(const Eigen::Matrix3d &rotation) {
    if (rotation == Eigen::Matrix3d::Identity()) {
        return 0.0;
    }
    const Eigen::Vector3d vee(rotation(2, 1) - rotation(1, 2),
                              rotation(0, 2) - rotation(2, 0),
                              rotation(1, 0) - rotation(0, 1));
    return std::atan2(0.5 * vee.norm(), 0.5 * (rotation.trace() - 1.0));
}

Eigen::Matrix3d So3LeftJacobian(const Eigen::Vector3d &omega) {
    const double theta = omega.norm();
    const Eigen::Matrix3d wx = Skew(omega);
    if (theta < kSeriesAngle) {
        const double theta2 = theta * theta;
        const double b = 0.5 - theta2 / 24.0;
        const double c = 1.0 / 6.0 - theta2 / 120.0;
        return Eigen::Matrix3d::Identity() + b * wx + c * wx * wx;
    }
    const double theta2 = theta * theta;
    const double b = (1.0 - std::cos(theta)) / theta2;
    const double c = (theta - std::sin(theta)) / (theta2 * theta);
    return Eigen::Matrix3d::Identity() + b * wx + c * wx * wx;
}

Eigen::Matrix3d So3LeftJacobianInverse(const Eigen::Vector3d &omega) {
    const double theta = omega.norm();
    const Eigen::Matrix3d wx = Skew(omega);
    if (theta < kSeriesAngle) {
        const double theta2 = theta * theta;
        const double c = 1.0 / 12.0 + theta2 / 720.0;
        return Eigen::Matrix3d::Identity() - 0.5 * wx + c * wx * wx;
    }
    const double half = 0.5 * theta;
    const double cot = 1.0 / std::tan(half);
    const double c = (1.0 - half * cot) / (theta * theta);
    return Eigen::Matrix3d::Identity() - 0.5 * wx + c * wx * wx;
}

RigidTransform Exp(const Twist &twist) {
    if (twist.rotational.isZero(0.0) && twist.translational.isZero(0.0)) {
        return RigidTransform::Identity();
    }
    return {So3Exp(twist.rotational), So3LeftJacobian(twist.rotational) * twist.translational};
}

Twist Log(const RigidTransform &transform) {
    const Eigen::Vector3d omega = So3Log(transform.rotation());
    return {omega, So3LeftJacobianInverse(omega) * transform.translation()};
}

Matrix6d Adjoint(const RigidTransform &transform) {
    Matrix6d ad = Matrix6d::Zero();
    ad.topLeftCorner<3, 3>() = transform.rotation();
    ad.bottomRightCorner<3, 3>() = transform.rotation();
    ad.bottomLeftCorner<3, 3>() = Skew(transform.translation()) * transform.rotation();
    return ad;
}

Matrix6d Se3LeftJacobian(const Twist &xi) {
    const Eigen::Matrix3d jl = So3LeftJacobian(xi.rotational);
    Matrix6d j = Matrix6d::Zero();
    j.topLeftCorner<3, 3>() = jl;
    j.bottomRightCorner<3, 3>() = jl;
    j.bottomLeftCorner<3, 3>() = QMatrix(xi.rotational, xi.translational);
    return j;
}

Matrix6d Se3RightJacobianInverse(const Twist &xi) {
    const Twist negated(-xi.rotational, -xi.translational);
    const Eigen::Matrix3d jlinv = So3LeftJacobianInverse(negated.rotational);
    const Eigen::Matrix3d q = QMatrix(negated.rotational, negated.translational);
    Matrix6d j = Matrix6d::Zero();
    j.topLeftCorner<3, 3>() = jlinv;
    j.bottomRightCorner<3, 3>() = jlinv;
    j.bottomLeftCorner<3, 3>() = -jlinv * q * jlinv;
    return j;
}

}  // namespace voxslam
