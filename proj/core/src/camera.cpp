#include "adg/camera.hpp"

#include <cmath>

namespace adg {

void CameraModel::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("CameraModel: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("CameraModel: image size must be positive");
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
    throw std::invalid_argument("CameraModel: principal point outside image");
  if (!(near > 0 && near < far)) throw std::invalid_argument("CameraModel: need 0 < near < far");

  const Eigen::Matrix3d r = rotation();
  const Eigen::Matrix3d e = r * r.transpose() - Eigen::Matrix3d::Identity();
  if (e.cwiseAbs().maxCoeff() > 1e-6)
    throw std::invalid_argument("CameraModel: rotation block is not orthonormal");
  if (std::fabs(r.determinant() - 1.0) > 1e-6)
    throw std::invalid_argument("CameraModel: rotation determinant is not +1");
  if (std::fabs(w2c(3, 0)) > 0 || std::fabs(w2c(3, 1)) > 0 || std::fabs(w2c(3, 2)) > 0 ||
      std::fabs(w2c(3, 3) - 1.0) > 1e-12)
    throw std::invalid_argument("CameraModel: bottom row of w2c must be (0,0,0,1)");
}

ProjectedPoint project(const Eigen::Vector3d& p, const CameraModel& cam) {
  const Eigen::Vector3d pc = cam.world_to_cam(p);
  if (!(pc.z() > 0)) throw std::domain_error("project: point behind camera");
  return {cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy, pc.z()};
}

Eigen::Vector3d unproject(double u, double v, double depth, const CameraModel& cam) {
  if (!(depth > 0)) throw std::domain_error("unproject: depth must be positive");
  const Eigen::Vector3d pc((u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth);
  return cam.cam_to_world(pc);
}

Eigen::Matrix4d look_pose(const Eigen::Vector3d& center, double yaw, double pitch) {
  // c2w rotation: columns are camera axes in world coordinates.
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Matrix3d rx = Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d c2w_rot = ry * rx;
  Eigen::Matrix4d w2c = Eigen::Matrix4d::Identity();
  w2c.topLeftCorner<3, 3>() = c2w_rot.transpose();
  w2c.topRightCorner<3, 1>() = -c2w_rot.transpose() * center;
  return w2c;
}

}  // namespace adg
