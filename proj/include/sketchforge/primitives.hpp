#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sketchforge/geometry.hpp"

namespace sketchforge {

enum class PrimitiveKind { point, segment, polyline, catmull_rom };

std::string_view to_string(PrimitiveKind kind);
PrimitiveKind primitive_kind_from_string(std::string_view name);

/// Lower and upper bound applied to normalised coordinates by unpack.
inline constexpr double kCoordMin = -0.25;
inline constexpr double kCoordMax = 1.25;
inline constexpr int kDefaultSamplesPerSpan = 8;

/// A drawable element. Control coordinates are normalised to the canvas
/// ([0,1]^2, x right, y down); a Catmull-Rom curve's first and last controls
/// are tangent-only.
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::point;
    std::vector<Vec2> points;
    double sigma = 1.0;               // soft-stroke radius, pixels
    std::vector<double> colour{0.0};  // 1 or 3 components
    bool learn_geo = true;
    bool learn_col = false;

    static Primitive point(Vec2 c, std::vector<double> colour = {0.0});
    static Primitive segment(Vec2 a, Vec2 b, std::vector<double> colour = {0.0});
    static Primitive polyline(std::vector<Vec2> pts, std::vector<double> colour = {0.0});
    static Primitive catmull_rom(std::vector<Vec2> ctrl, std::vector<double> colour = {0.0});
};

struct SketchModel {
    std::vector<Primitive> primitives;
    int canvas_w = 256;
    int canvas_h = 256;
    std::vector<double> background{1.0};

    int channels() const { return static_cast<int>(background.size()); }
};

/// Throws ValidationError naming the first broken invariant.
void validate(const Primitive& prim);
void validate(const SketchModel& model);

/// Index ranges of one primitive's learnable scalars inside a ParamVector.
struct ParamSlot {
    std::size_t geo_offset = 0;
    std::size_t geo_count = 0;
    std::size_t col_offset = 0;
    std::size_t col_count = 0;

    friend bool operator==(const ParamSlot&, const ParamSlot&) = default;
};

struct ParamVector {
    std::vector<double> values;
    std::vector<ParamSlot> layout;  // one per primitive

    std::size_t size() const { return values.size(); }
};

/// Deterministic layout for a model: primitives in order; per primitive the
/// geometry scalars (x, y per control) then colour scalars, each only if
/// learnable.
std::vector<ParamSlot> param_layout(const SketchModel& model);

ParamVector pack(const SketchModel& model);

/// Writes v into a copy of tmpl, clamping coordinates to [kCoordMin,
/// kCoordMax] and colours to [0, 1].
SketchModel unpack(const ParamVector& v, const SketchModel& tmpl);

/// Geometry of a primitive flattened to a polyline, with the linear map from
/// control points to each vertex. For points, segments and polylines a vertex
/// is its own control; for splines it is a 4-term basis combination.
struct StrokeGeometry {
    struct Vertex {
        Vec2 pos;
        std::array<int, 4> ctrl{0, 0, 0, 0};
        std::array<double, 4> weight{1.0, 0.0, 0.0, 0.0};
        int terms = 1;
    };
    std::vector<Vertex> vertices;
    std::size_t control_count = 0;

    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

/// Resolves prim with every control scaled by (sx, sy).
StrokeGeometry resolve_geometry(const Primitive& prim, double sx = 1.0, double sy = 1.0,
                                int samples_per_span = kDefaultSamplesPerSpan);

struct NearestHit {
    double d2 = 0.0;
    int segment = -1;  // -1 when the geometry is a single vertex
    double t = 0.0;
    Vec2 q;
};

/// Nearest point of the geometry to p. Ties between segments go to the lowest
/// segment index.
NearestHit nearest(const StrokeGeometry& geo, Vec2 p);

/// Adds scale * d(d2)/d(control coordinates) to grad, laid out (x0, y0, x1, y1, ...).
void accumulate_d2_grad(const StrokeGeometry& geo, const NearestHit& hit, Vec2 p, double scale,
                        std::span<double> grad);

struct DistanceGrad {
    double d2 = 0.0;
    std::vector<double> grad;  // d(d2)/d(control coords), (x0, y0, x1, y1, ...)
};

/// Squared distance from p to prim and its gradient with respect to the
/// control coordinates; p and prim share one coordinate frame.
DistanceGrad distance_and_grad(Vec2 p, const Primitive& prim, int samples_per_span = kDefaultSamplesPerSpan);

/// Returns prim with every control translated by delta.
Primitive translated(Primitive prim, Vec2 delta);

}  // namespace sketchforge
