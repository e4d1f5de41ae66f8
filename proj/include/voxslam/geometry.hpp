#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace voxslam {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Element of se(3): rotational part in radians, translational part in meters.
struct Twist {
    Eigen::Vector3d rotational = Eigen::Vector3d::Zero();
    Eigen::Vector3d translational = Eigen::Vector3d::Zero();

    Twist() = default;
    Twist(const Eigen::Vector3d &rot, const Eigen::Vector3d &trans)
        : rotational(rot), translational(trans) {}

    static Twist FromVector(const Vector6d &v) { return {v.head<3>(), v.tail<3>()}; }

    Vector6d Vector() const {
        Vector6d v;
        v << rotational, translational;
        return v;
    }

    double Norm() const { return Vector().norm(); }
};

/// Rigid body transform in SE(3): orthonormal rotation plus translation in meters.
class RigidTransform {
public:
    RigidTransform() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
    RigidTransform(const Eigen::Matrix3d &rotation, const Eigen::Vector3d &translation)
        : rotation_(rotation), translation_(translation) {}

    static RigidTransform Identity() { return {}; }
    static RigidTransform FromTranslation(const Eigen::Vector3d &t) {
        return {Eigen::Matrix3d::Identity(), t};
    }
    static RigidTransform FromQuaternion(const Eigen::Quaterniond &q, const Eigen::Vector3d &t) {
        return {q.normalized().toRotationMatrix(), t};
    }

    const Eigen::Matrix3d &rotation() const { return rotation_; }
    const Eigen::Vector3d &translation() const { return translation_; }
    Eigen::Quaterniond Quaternion() const { return Eigen::Quaterniond(rotation_); }

    RigidTransform Inverse() const {
        const Eigen::Matrix3d rt = rotation_.transpose();
        return {rt, -(rt * translation_)};
    }

    RigidTransform operator*(const RigidTransform &rhs) const {
        return {rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_};
    }

    Eigen::Vector3d operator*(const Eigen::Vector3d &p) const {
        return rotation_ * p + translation_;
    }

    Eigen::Matrix4d Matrix() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = rotation_;
        m.topRightCorner<3, 1>() = translation_;
        return m;
    }

    bool BitwiseEqual(const RigidTransform &rhs) const {
        return rotation_ == rhs.rotation_ && translation_ == rhs.translation_;
    }

private:
    Eigen::Matrix3d rotation_;
    Eigen::Vector3d translation_;
};

/// Skew-symmetric matrix such that Skew(a) * b = a x b.
Eigen::Matrix3d Skew(const Eigen::Vector3d &v);

/// Rodrigues formula. So3Exp(0) is exactly the identity.
Eigen::Matrix3d So3Exp(const Eigen::Vector3d &omega);

/// Inverse of So3Exp. Throws std::domain_error when the rotation angle is >= pi - 1e-6.
Eigen::Vector3d So3Log(const Eigen::Matrix3d &rotation);

/// Rotation angle in [0, pi], numerically robust, never throws.
double RotationAngle(const Eigen::Matrix3d &rotation);

Eigen::Matrix3d So3LeftJacobian(const Eigen::Vector3d &omega);
Eigen::Matrix3d So3LeftJacobianInverse(const Eigen::Vector3d &omega);

/// Exponential map se(3) -> SE(3). Exp of the zero twist is exactly the identity.
RigidTransform Exp(const Twist &twist);

/// Logarithm map SE(3) -> se(3); inverse of Exp for rotation angles < pi.
/// Throws std::domain_error when the angle is >= pi - 1e-6.
Twist Log(const RigidTransform &transform);

/// Adjoint of SE(3) in (rotational, translational) block ordering:
/// T * Exp(xi) * T^-1 == Exp(Adjoint(T) * xi).
Matrix6d Adjoint(const RigidTransform &transform);

/// Left Jacobian of SE(3) at xi: Exp(xi + d) ~= Exp(Jl * d) * Exp(xi).
Matrix6d Se3LeftJacobian(const Twist &xi);

/// Inverse of the right Jacobian: Log(Exp(xi) * Exp(d)) ~= xi + JrInv * d.
Matrix6d Se3RightJacobianInverse(const Twist &xi);

}  // namespace voxslam
