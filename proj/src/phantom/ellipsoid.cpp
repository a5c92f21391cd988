#include "cortexnet/phantom/ellipsoid.hpp"

#include <cmath>

#include "cortexnet/common/error.hpp"

namespace cortexnet {

double Ellipsoid::implicit(const Vec3& p) const {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += (p[i] / semi_axes[i]) * (p[i] / semi_axes[i]);
    return s;
}

Vec3 Ellipsoid::gradient(const Vec3& p) const {
    return {2.0 * p[0] / (semi_axes[0] * semi_axes[0]), 2.0 * p[1] / (semi_axes[1] * semi_axes[1]),
            2.0 * p[2] / (semi_axes[2] * semi_axes[2])};
}

Vec3 Ellipsoid::unit_normal(const Vec3& p) const { return gradient(p).normalized(); }

Vec3 Ellipsoid::radial_projection(const Vec3& p) const {
    const double f = implicit(p);
    if (!(f > 0.0)) return {semi_axes[0], 0.0, 0.0};  // centre: any pole is equidistant enough
    return p / std::sqrt(f);
}

Ellipsoid Ellipsoid::scaled(double s) const {
    return Ellipsoid{{semi_axes[0] * s, semi_axes[1] * s, semi_axes[2] * s}};
}

NearestPoint nearest_surface_point(const Ellipsoid& e, const Vec3& p, double tol) {
    NearestPoint out;
    Vec3 q = e.radial_projection(p);
    double step = 0.5;
    double objective = 0.5 * (q - p).squaredNorm();
    constexpr int kMaxIterations = 100000;
    for (int it = 0; it < kMaxIterations; ++it) {
        out.iterations = it + 1;
        const Vec3 n = e.unit_normal(q);
        const Vec3 r = q - p;
        const Vec3 tangent = r - r.dot(n) * n;
        if (tangent.norm() < 1e-12) break;
        const Vec3 candidate = e.radial_projection(q - step * tangent);
        const double next = 0.5 * (candidate - p).squaredNorm();
        if (next > objective) {
            step *= 0.5;
            if (step < 1e-12) break;
            continue;
        }
        const double moved = (candidate - q).norm();
        q = candidate;
        objective = next;
        if (moved < tol) break;
    }
    out.point = q;
    return out;
}

double mean_curvature(const Ellipsoid& e, const Vec3& q) {
    const Vec3 g = e.gradient(q);
    const Vec3 hess_diag(2.0 / (e.semi_axes[0] * e.semi_axes[0]), 2.0 / (e.semi_axes[1] * e.semi_axes[1]),
                         2.0 / (e.semi_axes[2] * e.semi_axes[2]));
    const double g2 = g.squaredNorm();
    const double trace = hess_diag.sum();
    const double ghg = (g.array() * hess_diag.array() * g.array()).sum();
    return (g2 * trace - ghg) / (2.0 * std::pow(g2, 1.5));
}

double ray_exit_distance(const Ellipsoid& e, const Vec3& origin, const Vec3& dir) {
    double a = 0.0, b = 0.0, c = -1.0;
    for (int i = 0; i < 3; ++i) {
        const double inv = 1.0 / (e.semi_axes[i] * e.semi_axes[i]);
        a += dir[i] * dir[i] * inv;
        b += 2.0 * origin[i] * dir[i] * inv;
        c += origin[i] * origin[i] * inv;
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0 || c > 1e-12) throw InvariantError("ray_exit_distance: origin is outside the ellipsoid");
    return (-b + std::sqrt(disc)) / (2.0 * a);
}

}  // namespace cortexnet
