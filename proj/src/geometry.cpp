#include "sketchforge/geometry.hpp"

#include <algorithm>

#include "sketchforge/errors.hpp"

namespace sketchforge {

SegmentProjection closest_point_segment(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = norm2(ab);
    if (len2 < 1e-12) return {a, 0.0};
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return {a + t * ab, t};
}

std::array<double, 4> catmull_rom_weights(double t) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    // 0.5 * [2P1 + (-P0 + P2) t + (2P0 - 5P1 + 4P2 - P3) t^2 + (-P0 + 3P1 - 3P2 + P3) t^3]
    return {
        0.5 * (-t + 2.0 * t2 - t3),
        0.5 * (2.0 - 5.0 * t2 + 3.0 * t3),
        0.5 * (t + 4.0 * t2 - 3.0 * t3),
        0.5 * (-t2 + t3),
    };
}

Vec2 catmull_rom_eval(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double t) {
    const auto w = catmull_rom_weights(t);
    return w[0] * p0 + w[1] * p1 + w[2] * p2 + w[3] * p3;
}

std::vector<Vec2> spline_to_polyline(std::span<const Vec2> ctrl, int samples_per_span) {
    if (ctrl.size() < 4) throw ValidationError("Catmull-Rom spline needs at least 4 control points");
    if (samples_per_span < 1) throw ValidationError("samples_per_span must be >= 1");
    std::vector<Vec2> out;
    for (std::size_t s = 0; s + 3 < ctrl.size(); ++s) {
        for (int k = 0; k <= samples_per_span; ++k) {
            const double t = static_cast<double>(k) / samples_per_span;
            const Vec2 v = catmull_rom_eval(ctrl[s], ctrl[s + 1], ctrl[s + 2], ctrl[s + 3], t);
            if (out.empty() || !(out.back() == v)) out.push_back(v);
        }
    }
    return out;
}

std::array<Vec2, 4> catmull_rom_span_to_bezier(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3) {
    return {p1, p1 + (1.0 / 6.0) * (p2 - p0), p2 - (1.0 / 6.0) * (p3 - p1), p2};
}

}  // namespace sketchforge
