#include "sketchforge/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace sketchforge {

namespace {

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    std::string s = buf;
    if (s == "-0.000") s = "0.000";
    return s;
}

std::string rgb(const std::vector<double>& c) {
    auto byte = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    const int r = byte(c[0]);
    const int g = byte(c.size() == 3 ? c[1] : c[0]);
    const int b = byte(c.size() == 3 ? c[2] : c[0]);
    char buf[32];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

std::string header(double w, double h) {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
           "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
           num(w) + "mm\" height=\"" + num(h) + "mm\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n";
}

}  // namespace

std::string model_to_svg(const SketchModel& model, double width_mm, double height_mm) {
    const double sx = width_mm;
    const double sy = height_mm;
    const double px_to_mm = std::min(width_mm / model.canvas_w, height_mm / model.canvas_h);
    auto xy = [&](Vec2 p) { return num(p.x * sx) + " " + num(p.y * sy); };

    std::string out = header(width_mm, height_mm);
    for (const auto& prim : model.primitives) {
        const std::string colour = rgb(prim.colour);
        if (prim.kind == PrimitiveKind::point) {
            const Vec2 c = prim.points.front();
            out += "  <circle cx=\"" + num(c.x * sx) + "\" cy=\"" + num(c.y * sy) + "\" r=\"" +
                   num(prim.sigma * px_to_mm) + "\" fill=\"" + colour + "\"/>\n";
            continue;
        }
        std::string d;
        if (prim.kind == PrimitiveKind::catmull_rom) {
            const auto& P = prim.points;
            d = "M " + xy(P[1]);
            for (std::size_t s = 0; s + 3 < P.size(); ++s) {
                const auto bz = catmull_rom_span_to_bezier(P[s], P[s + 1], P[s + 2], P[s + 3]);
                d += " C " + xy(bz[1]) + " " + xy(bz[2]) + " " + xy(bz[3]);
            }
        } else {
            d = "M " + xy(prim.points.front());
            for (std::size_t i = 1; i < prim.points.size(); ++i) d += " L " + xy(prim.points[i]);
        }
        out += "  <path d=\"" + d + "\" fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"" +
               num(2.0 * prim.sigma * px_to_mm) + "\" stroke-linecap=\"round\" stroke-linejoin=\"round\"/>\n";
    }
    out += "</svg>\n";
    return out;
}

std::string toolpath_to_svg(const Toolpath& tp, double pen_width_mm) {
    auto xy = [&](Vec2 p) { return num(p.x) + " " + num(tp.bed_h_mm - p.y); };
    std::string out = header(tp.bed_w_mm, tp.bed_h_mm);
    for (const auto& s : tp.strokes) {
        const auto pts = s.drawn();
        if (pts.size() == 1) {
            out += "  <circle cx=\"" + num(pts[0].x) + "\" cy=\"" + num(tp.bed_h_mm - pts[0].y) + "\" r=\"" +
                   num(0.5 * pen_width_mm) + "\" fill=\"#000000\"/>\n";
            continue;
        }
        std::string d = "M " + xy(pts.front());
        for (std::size_t i = 1; i < pts.size(); ++i) d += " L " + xy(pts[i]);
        out += "  <path d=\"" + d + "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"" + num(pen_width_mm) +
               "\" stroke-linecap=\"round\"/>\n";
    }
    out += "</svg>\n";
    return out;
}

}  // namespace sketchforge
