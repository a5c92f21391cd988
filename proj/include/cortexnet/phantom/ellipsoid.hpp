#pragma once

#include <array>

#include <Eigen/Core>

namespace cortexnet {

using Vec3 = Eigen::Vector3d;

/// Axis-aligned ellipsoid centred at the origin: sum_i (p_i / a_i)^2 = 1.
struct Ellipsoid {
    std::array<double, 3> semi_axes{1.0, 1.0, 1.0};

    double implicit(const Vec3& p) const;   ///< sum (p_i/a_i)^2; 1 on the surface
    Vec3 gradient(const Vec3& p) const;     ///< of the implicit function
    Vec3 unit_normal(const Vec3& p) const;  ///< outward
    Vec3 radial_projection(const Vec3& p) const;
    Ellipsoid scaled(double s) const;
};

struct NearestPoint {
    Vec3 point;
    int iterations = 0;
};

/// Closest surface point to `p` by projected gradient descent on 0.5|q - p|^2:
/// tangent step, then radial re-projection onto the surface. Stops once a
/// step moves the iterate less than `tol` mm.
NearestPoint nearest_surface_point(const Ellipsoid& e, const Vec3& p, double tol = 1e-6);

/// Mean curvature (mm^-1, positive for a convex surface) at surface point q,
/// from the gradient and Hessian of the implicit function.
double mean_curvature(const Ellipsoid& e, const Vec3& q);

/// Distance along unit direction `dir` from `origin` (inside the ellipsoid)
/// to where the ray leaves the surface.
double ray_exit_distance(const Ellipsoid& e, const Vec3& origin, const Vec3& dir);

}  // namespace cortexnet
