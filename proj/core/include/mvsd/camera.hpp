// Copyright (c) 2026 mvsd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "mvsd/errors.hpp"
#include "mvsd/math.hpp"

namespace mvsd {

// Pinhole camera: world-to-camera pose plus intrinsics. Camera frame is
// x-right, y-down, z-forward; pixel (u,v) maps to camera ray
// ((u-cx)/f, (v-cy)/f, 1).
struct CameraView {
    int index = 0;
    Mat3 rotation;          // world-to-camera
    Vec3 translation;       // p_cam = R * p_world + t
    double focal = 1.0;     // pixels
    double cx = 0.0, cy = 0.0;
    int width = 1, height = 1;

    void check_invariants() const {
        if (focal <= 0.0) throw ContractViolation("CameraView: focal must be > 0");
        if (width < 1 || height < 1)
            throw ContractViolation("CameraView: degenerate resolution");
        // R^T R == I and det == +1, to 1e-9.
        const Mat3 rtr = rotation.transposed() * rotation;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double want = (i == j) ? 1.0 : 0.0;
                if (std::abs(rtr(i, j) - want) > 1e-9)
                    throw ContractViolation("CameraView: rotation not orthonormal");
            }
        if (std::abs(rotation.det() - 1.0) > 1e-9)
            throw ContractViolation("CameraView: rotation determinant != +1");
    }

    Vec3 world_to_camera(const Vec3& p) const { return rotation * p + translation; }
    Vec3 camera_to_world(const Vec3& p) const {
        return rotation.transposed() * (p - translation);
    }
    Vec3 center() const { return rotation.transposed() * (Vec3{} - translation); }

    // Back-project pixel (u,v) at camera-space depth z.
    Vec3 backproject(double u, double v, double z) const {
        const Vec3 pc{(u - cx) * z / focal, (v - cy) * z / focal, z};
        return camera_to_world(pc);
    }

    // Project world point; returns camera-space z (non-positive means behind).
    double project(const Vec3& p, double& u, double& v) const {
        const Vec3 pc = world_to_camera(p);
        if (pc.z > 0.0) {
            u = focal * pc.x / pc.z + cx;
            v = focal * pc.y / pc.z + cy;
        } else {
            u = v = -1.0;
        }
        return pc.z;
    }

    // Same pose, intrinsics rescaled to a new resolution.
    CameraView scaled(int new_w, int new_h) const {
        CameraView c = *this;
        const double sx = static_cast<double>(new_w) / width;
        const double sy = static_cast<double>(new_h) / height;
        c.focal = focal * sx;
        c.cx = cx * sx;
        c.cy = cy * sy;
        c.width = new_w;
        c.height = new_h;
        return c;
    }

    // Camera on a sphere of the given radius looking at the origin.
    // Azimuth and elevation in radians; azimuth 0 is the frontal view
    // (camera on -z looking towards +z).
    static CameraView orbit(int index, double radius, double azimuth,
                            double elevation, double focal, int width, int height);
};

inline CameraView CameraView::orbit(int index, double radius, double azimuth,
                                    double elevation, double focal, int width,
                                    int height) {
    const double ca = std::cos(azimuth), sa = std::sin(azimuth);
    const double ce = std::cos(elevation), se = std::sin(elevation);
    const Vec3 eye{radius * ce * sa, -radius * se, -radius * ce * ca};
    const Vec3 fwd = (Vec3{} - eye).normalized();
    Vec3 right = Vec3{0.0, 1.0, 0.0}.cross(fwd);
    if (right.norm() < 1e-12) right = Vec3{1.0, 0.0, 0.0};
    right = right.normalized();
    const Vec3 down = fwd.cross(right);

    CameraView cam;
    cam.index = index;
    cam.rotation = Mat3::from_rows(right, down, fwd);
    cam.translation = Vec3{} - cam.rotation * eye;
    cam.focal = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    return cam;
}

}  // namespace mvsd
