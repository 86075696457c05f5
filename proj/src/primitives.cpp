#include "sketchforge/primitives.hpp"

#include <algorithm>
#include <cmath>

#include "sketchforge/errors.hpp"

namespace sketchforge {

std::string_view to_string(PrimitiveKind kind) {
    switch (kind) {
        case PrimitiveKind::point: return "point";
        case PrimitiveKind::segment: return "segment";
        case PrimitiveKind::polyline: return "polyline";
        case PrimitiveKind::catmull_rom: return "catmull_rom";
    }
    return "unknown";
}

PrimitiveKind primitive_kind_from_string(std::string_view name) {
    if (name == "point") return PrimitiveKind::point;
    if (name == "segment") return PrimitiveKind::segment;
    if (name == "polyline") return PrimitiveKind::polyline;
    if (name == "catmull_rom") return PrimitiveKind::catmull_rom;
    throw ValidationError("unknown primitive kind '" + std::string(name) + "'");
}

Primitive Primitive::point(Vec2 c, std::vector<double> colour) {
    return {PrimitiveKind::point, {c}, 1.0, std::move(colour)};
}

Primitive Primitive::segment(Vec2 a, Vec2 b, std::vector<double> colour) {
    return {PrimitiveKind::segment, {a, b}, 1.0, std::move(colour)};
}

Primitive Primitive::polyline(std::vector<Vec2> pts, std::vector<double> colour) {
    return {PrimitiveKind::polyline, std::move(pts), 1.0, std::move(colour)};
}

Primitive Primitive::catmull_rom(std::vector<Vec2> ctrl, std::vector<double> colour) {
    return {PrimitiveKind::catmull_rom, std::move(ctrl), 1.0, std::move(colour)};
}

void validate(const Primitive& prim) {
    const std::size_t n = prim.points.size();
    switch (prim.kind) {
        case PrimitiveKind::point:
            if (n != 1) throw ValidationError("point primitive needs exactly 1 control point");
            break;
        case PrimitiveKind::segment:
            if (n != 2) throw ValidationError("segment primitive needs exactly 2 control points");
            break;
        case PrimitiveKind::polyline:
            if (n < 2) throw ValidationError("polyline primitive needs at least 2 control points");
            break;
        case PrimitiveKind::catmull_rom:
            if (n < 4) throw ValidationError("Catmull-Rom primitive needs at least 4 control points");
            break;
    }
    for (const auto& p : prim.points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ValidationError("non-finite control coordinate");
    }
    if (!(prim.sigma > 0.0) || !std::isfinite(prim.sigma)) throw ValidationError("primitive sigma must be > 0");
    if (prim.colour.size() != 1 && prim.colour.size() != 3) {
        throw ValidationError("primitive colour must have 1 or 3 components");
    }
    for (double c : prim.colour) {
        if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("primitive colour outside [0, 1]");
    }
}

void validate(const SketchModel& model) {
    if (model.canvas_w < 1 || model.canvas_h < 1) throw ValidationError("canvas dimensions must be >= 1");
    if (model.background.size() != 1 && model.background.size() != 3) {
        throw ValidationError("background must have 1 or 3 components");
    }
    for (double c : model.background) {
        if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("background colour outside [0, 1]");
    }
    for (std::size_t i = 0; i < model.primitives.size(); ++i) {
        try {
            validate(model.primitives[i]);
        } catch (const ValidationError& e) {
            throw ValidationError("primitive " + std::to_string(i) + ": " + e.what());
        }
        if (model.primitives[i].colour.size() != model.background.size()) {
            throw ValidationError("primitive " + std::to_string(i) + ": colour channels differ from the model");
        }
    }
}

std::vector<ParamSlot> param_layout(const SketchModel& model) {
    std::vector<ParamSlot> layout;
    layout.reserve(model.primitives.size());
    std::size_t offset = 0;
    for (const auto& prim : model.primitives) {
        ParamSlot slot;
        slot.geo_offset = offset;
        slot.geo_count = prim.learn_geo ? 2 * prim.points.size() : 0;
        offset += slot.geo_count;
        slot.col_offset = offset;
        slot.col_count = prim.learn_col ? prim.colour.size() : 0;
        offset += slot.col_count;
        layout.push_back(slot);
    }
    return layout;
}

ParamVector pack(const SketchModel& model) {
    ParamVector v;
    v.layout = param_layout(model);
    for (const auto& prim : model.primitives) {
        if (prim.learn_geo) {
            for (const auto& p : prim.points) {
                v.values.push_back(p.x);
                v.values.push_back(p.y);
            }
        }
        if (prim.learn_col) v.values.insert(v.values.end(), prim.colour.begin(), prim.colour.end());
    }
    return v;
}

SketchModel unpack(const ParamVector& v, const SketchModel& tmpl) {
    const auto expected = param_layout(tmpl);
    if (v.layout != expected) throw ValidationError("parameter layout does not match the model template");
    const std::size_t total = expected.empty() ? 0 : expected.back().col_offset + expected.back().col_count;
    if (v.values.size() != total) {
        throw ValidationError("parameter vector has " + std::to_string(v.values.size()) + " values, expected " +
                              std::to_string(total));
    }
    SketchModel out = tmpl;
    for (std::size_t i = 0; i < out.primitives.size(); ++i) {
        auto& prim = out.primitives[i];
        const auto& slot = expected[i];
        if (prim.learn_geo) {
            for (std::size_t k = 0; k < prim.points.size(); ++k) {
                prim.points[k].x = std::clamp(v.values[slot.geo_offset + 2 * k], kCoordMin, kCoordMax);
                prim.points[k].y = std::clamp(v.values[slot.geo_offset + 2 * k + 1], kCoordMin, kCoordMax);
            }
        }
        if (prim.learn_col) {
            for (std::size_t c = 0; c < prim.colour.size(); ++c) {
                prim.colour[c] = std::clamp(v.values[slot.col_offset + c], 0.0, 1.0);
            }
        }
    }
    return out;
}

StrokeGeometry resolve_geometry(const Primitive& prim, double sx, double sy, int samples_per_span) {
    StrokeGeometry geo;
    geo.control_count = prim.points.size();
    auto scaled = [&](std::size_t i) { return Vec2{prim.points[i].x * sx, prim.points[i].y * sy}; };

    if (prim.kind == PrimitiveKind::catmull_rom) {
        if (prim.points.size() < 4) throw ValidationError("Catmull-Rom primitive needs at least 4 control points");
        if (samples_per_span < 1) throw ValidationError("samples_per_span must be >= 1");
        for (std::size_t s = 0; s + 3 < prim.points.size(); ++s) {
            const Vec2 p0 = scaled(s), p1 = scaled(s + 1), p2 = scaled(s + 2), p3 = scaled(s + 3);
            for (int k = 0; k <= samples_per_span; ++k) {
                const double t = static_cast<double>(k) / samples_per_span;
                const auto w = catmull_rom_weights(t);
                const Vec2 pos = w[0] * p0 + w[1] * p1 + w[2] * p2 + w[3] * p3;
                if (!geo.vertices.empty() && geo.vertices.back().pos == pos) continue;
                StrokeGeometry::Vertex v;
                v.pos = pos;
                v.terms = 4;
                for (int j = 0; j < 4; ++j) {
                    v.ctrl[j] = static_cast<int>(s) + j;
                    v.weight[j] = w[j];
                }
                geo.vertices.push_back(v);
            }
        }
    } else {
        for (std::size_t i = 0; i < prim.points.size(); ++i) {
            StrokeGeometry::Vertex v;
            v.pos = scaled(i);
            v.ctrl[0] = static_cast<int>(i);
            geo.vertices.push_back(v);
        }
    }

    geo.min_x = geo.max_x = geo.vertices.front().pos.x;
    geo.min_y = geo.max_y = geo.vertices.front().pos.y;
    for (const auto& v : geo.vertices) {
        geo.min_x = std::min(geo.min_x, v.pos.x);
        geo.max_x = std::max(geo.max_x, v.pos.x);
        geo.min_y = std::min(geo.min_y, v.pos.y);
        geo.max_y = std::max(geo.max_y, v.pos.y);
    }
    return geo;
}

NearestHit nearest(const StrokeGeometry& geo, Vec2 p) {
    NearestHit best;
    if (geo.vertices.size() == 1) {
        best.q = geo.vertices[0].pos;
        best.d2 = norm2(p - best.q);
        return best;
    }
    for (std::size_t s = 0; s + 1 < geo.vertices.size(); ++s) {
        const auto proj = closest_point_segment(p, geo.vertices[s].pos, geo.vertices[s + 1].pos);
        const double d2 = norm2(p - proj.q);
        if (best.segment < 0 || d2 < best.d2) {
            best.d2 = d2;
            best.segment = static_cast<int>(s);
            best.t = proj.t;
            best.q = proj.q;
        }
    }
    return best;
}

void accumulate_d2_grad(const StrokeGeometry& geo, const NearestHit& hit, Vec2 p, double scale,
                        std::span<double> grad) {
    // d(d2)/dq = -2 (p - q); q = (1 - t) v_s + t v_{s+1} with t held at its
    // optimum (envelope theorem), so the vertex sensitivities are (1 - t), t.
    const Vec2 g = -2.0 * (p - hit.q);
    auto push = [&](const StrokeGeometry::Vertex& v, double share) {
        for (int j = 0; j < v.terms; ++j) {
            const double w = scale * share * v.weight[j];
            grad[2 * v.ctrl[j]] += w * g.x;
            grad[2 * v.ctrl[j] + 1] += w * g.y;
        }
    };
    if (hit.segment < 0) {
        push(geo.vertices[0], 1.0);
        return;
    }
    const auto& a = geo.vertices[hit.segment];
    const auto& b = geo.vertices[hit.segment + 1];
    if (hit.t < 1.0) push(a, 1.0 - hit.t);
    if (hit.t > 0.0) push(b, hit.t);
}

DistanceGrad distance_and_grad(Vec2 p, const Primitive& prim, int samples_per_span) {
    const auto geo = resolve_geometry(prim, 1.0, 1.0, samples_per_span);
    const auto hit = nearest(geo, p);
    DistanceGrad out;
    out.d2 = hit.d2;
    out.grad.assign(2 * geo.control_count, 0.0);
    accumulate_d2_grad(geo, hit, p, 1.0, out.grad);
    return out;
}

Primitive translated(Primitive prim, Vec2 delta) {
    for (auto& p : prim.points) p = p + delta;
    return prim;
}

}  // namespace sketchforge
