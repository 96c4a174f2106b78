#pragma once

#include <cmath>

namespace texloc {

inline constexpr double kPi = 3.14159265358979323846;

// Millimeters of ground covered by one map pixel. Config value only;
// never enters any geometric computation.
inline constexpr double kDefaultMmPerPixel = 0.16;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a <= 0.0) a += 2.0 * kPi;
    return a - kPi;
}

// Planar rigid transform. Rotation is stored as an angle so the implied
// rotation matrix is orthonormal by construction. Units are map pixels.
struct Pose2 {
    double theta = 0.0;  // radians, (-pi, pi]
    double tx = 0.0;     // map pixels
    double ty = 0.0;

    static Pose2 identity() { return {}; }
};

// compose(a, b): applies b first, then a.
inline Pose2 compose(const Pose2& a, const Pose2& b) {
    const double c = std::cos(a.theta);
    const double s = std::sin(a.theta);
    return {wrap_angle(a.theta + b.theta),
            a.tx + c * b.tx - s * b.ty,
            a.ty + s * b.tx + c * b.ty};
}

inline Pose2 inverse(const Pose2& p) {
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    return {wrap_angle(-p.theta),
            -(c * p.tx + s * p.ty),
            -(-s * p.tx + c * p.ty)};
}

inline Vec2 apply(const Pose2& p, Vec2 v) {
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    return {c * v.x - s * v.y + p.tx,
            s * v.x + c * v.y + p.ty};
}

// Relative transform taking coordinates in b's frame to a's frame.
inline Pose2 relative(const Pose2& a, const Pose2& b) {
    return compose(inverse(a), b);
}

inline double translation_norm(const Pose2& p) { return std::hypot(p.tx, p.ty); }

// Magnitude of the pose difference b relative to a: translation in pixels,
// rotation in radians.
inline void pose_delta(const Pose2& a, const Pose2& b, double& d_trans, double& d_rot) {
    const Pose2 d = relative(a, b);
    d_trans = translation_norm(d);
    d_rot = std::fabs(d.theta);
}

}  // namespace texloc
