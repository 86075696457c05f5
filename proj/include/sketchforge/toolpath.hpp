#pragma once

#include <string_view>
#include <vector>

#include "sketchforge/geometry.hpp"
#include "sketchforge/primitives.hpp"

namespace sketchforge {

/// One pen-down polyline in bed millimetres. `polyline` keeps its original
/// direction; `reversed` says it is drawn from the last point to the first.
struct Stroke {
    std::vector<Vec2> polyline;
    bool reversed = false;
    int pen_id = 0;

    Vec2 entry() const { return reversed ? polyline.back() : polyline.front(); }
    Vec2 exit() const { return reversed ? polyline.front() : polyline.back(); }
    /// Points in drawing order.
    std::vector<Vec2> drawn() const;
    double length() const;
};

struct Toolpath {
    std::vector<Stroke> strokes;
    double bed_w_mm = 0.0;
    double bed_h_mm = 0.0;
    double margin_mm = 0.0;
};

struct PlotGeometry {
    double bed_w_mm = 200.0;
    double bed_h_mm = 200.0;
    double margin_mm = 10.0;
    double flatten_tol_mm = 0.1;
};

/// Maps the canvas onto the largest aspect-preserving rectangle inside the
/// margins, centred, with image top at the bed's max-y. Geometry is clipped to
/// the canvas; splines are flattened to within flatten_tol_mm; points become
/// single-point strokes.
Toolpath model_to_toolpath(const SketchModel& model, const PlotGeometry& plot);

/// Adaptive flattening of a Catmull-Rom curve (same frame as ctrl): each span
/// is split into 2^k equal-parameter chords until every chord's mid-parameter
/// sag is below tol.
std::vector<Vec2> flatten_catmull_rom(std::span<const Vec2> ctrl, double tol);

/// Pieces of the polyline inside [x0, x1] x [y0, y1].
std::vector<std::vector<Vec2>> clip_polyline(std::span<const Vec2> pts, double x0, double y0, double x1, double y1);

enum class OrderAlgorithm { identity, greedy_nn, greedy_2opt };

OrderAlgorithm order_algorithm_from_string(std::string_view name);
std::string_view to_string(OrderAlgorithm algo);

/// Euclidean pen-up distance from the origin through every stroke in order
/// (no return leg).
double pen_up_travel(const Toolpath& tp, Vec2 origin = {0.0, 0.0});

/// Reorders (and possibly reverses) strokes to cut pen-up travel.
/// greedy_2opt runs segment-reversal and chain-relocation moves until none
/// improves or 50 * N moves have been accepted; for up to 128 strokes it also
/// restarts from a greedy tour opening with each stroke and keeps the best.
Toolpath order_strokes(const Toolpath& tp, OrderAlgorithm algo);

}  // namespace sketchforge
