#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>

namespace adg {

/// Pinhole camera: intrinsics in pixels plus a rigid world-to-camera
/// transform. Camera frame is x-right, y-down, z-forward; depth is
/// camera-space z.
struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Eigen::Matrix4d w2c = Eigen::Matrix4d::Identity();
  int width = 0, height = 0;
  double near = 0, far = 0;

  Eigen::Matrix3d rotation() const { return w2c.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return w2c.topRightCorner<3, 1>(); }
  Eigen::Vector3d camera_center() const { return -rotation().transpose() * translation(); }

  Eigen::Vector3d world_to_cam(const Eigen::Vector3d& p) const {
    return rotation() * p + translation();
  }
  Eigen::Vector3d cam_to_world(const Eigen::Vector3d& p) const {
    return rotation().transpose() * (p - translation());
  }

  /// Throws std::invalid_argument if any invariant fails.
  void validate() const;
};

struct ProjectedPoint {
  double u, v, depth;
};

/// World point -> continuous pixel coordinates + camera depth.
/// Throws std::domain_error for points at or behind the camera plane.
ProjectedPoint project(const Eigen::Vector3d& p, const CameraModel& cam);

/// Pixel + metric depth -> world point. Inverse of project.
/// Throws std::domain_error for non-positive depth.
Eigen::Vector3d unproject(double u, double v, double depth, const CameraModel& cam);

/// Builds a w2c matrix from a camera center, yaw (radians, about world y)
/// and pitch (radians, about camera x). Zero angles look along world +z.
Eigen::Matrix4d look_pose(const Eigen::Vector3d& center, double yaw, double pitch);

}  // namespace adg
