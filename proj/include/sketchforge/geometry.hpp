#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace sketchforge {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm2(Vec2 a) { return dot(a, a); }
inline double norm(Vec2 a) { return std::sqrt(norm2(a)); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

struct SegmentProjection {
    Vec2 q;    // closest point
    double t;  // parameter along a->b, in [0, 1]
};

/// Closest point on segment [a, b] to p. A segment shorter than 1e-6
/// degenerates to its first endpoint.
SegmentProjection closest_point_segment(Vec2 p, Vec2 a, Vec2 b);

/// Uniform Catmull-Rom basis weights for (P0, P1, P2, P3) at t in [0, 1].
std::array<double, 4> catmull_rom_weights(double t);

Vec2 catmull_rom_eval(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double t);

/// Samples each interior span at t = k / samples_per_span and drops
/// consecutive duplicates. Needs at least 4 control points.
std::vector<Vec2> spline_to_polyline(std::span<const Vec2> ctrl, int samples_per_span);

/// Bezier control points equivalent to span (P1 -> P2) of a uniform
/// Catmull-Rom curve.
std::array<Vec2, 4> catmull_rom_span_to_bezier(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3);

}  // namespace sketchforge
