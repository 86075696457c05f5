#include "sketchforge/gcode.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

#include "sketchforge/errors.hpp"

namespace sketchforge {

namespace {

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    std::string s = buf;
    if (s == "-0.000") s = "0.000";
    return s;
}

double quantise(double v) { return std::strtod(num(v).c_str(), nullptr); }

}  // namespace

std::string GcodeProgram::text() const {
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

GcodeProgram toolpath_to_gcode(const Toolpath& tp, const GcodeOptions& opts) {
    if (!(opts.feed_draw_mm_min > 0.0) || !(opts.feed_travel_mm_min > 0.0) || !(opts.plunge_feed_mm_min > 0.0)) {
        throw ValidationError("feed rates must be > 0");
    }
    if (!(opts.pen_up_z > opts.pen_down_z)) throw ValidationError("pen_up_z must be above pen_down_z");

    GcodeProgram prog;
    auto& L = prog.lines;
    const std::string lift = "G0 Z" + num(opts.pen_up_z);
    const std::string plunge = "G1 Z" + num(opts.pen_down_z) + " F" + num(opts.plunge_feed_mm_min);
    const std::string draw_feed = " F" + num(opts.feed_draw_mm_min);

    Vec2 pos{0.0, 0.0};
    auto checked = [&](Vec2 p) {
        const Vec2 q{quantise(p.x), quantise(p.y)};
        if (q.x < 0.0 || q.x > tp.bed_w_mm || q.y < 0.0 || q.y > tp.bed_h_mm) {
            throw ValidationError("coordinate (" + num(p.x) + ", " + num(p.y) + ") lies outside the " +
                                  num(tp.bed_w_mm) + " x " + num(tp.bed_h_mm) + " mm bed");
        }
        return q;
    };

    L.push_back("G21");
    L.push_back("G90");
    L.push_back(lift);
    for (const auto& stroke : tp.strokes) {
        const auto pts = stroke.drawn();
        if (pts.empty()) throw ValidationError("stroke with no points");
        const Vec2 start = checked(pts.front());
        L.push_back("G0 X" + num(start.x) + " Y" + num(start.y));
        prog.stats.pen_up_mm += distance(pos, start);
        pos = start;
        L.push_back(plunge);
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const Vec2 q = checked(pts[i]);
            L.push_back("G1 X" + num(q.x) + " Y" + num(q.y) + draw_feed);
            prog.stats.pen_down_mm += distance(pos, q);
            pos = q;
        }
        L.push_back(lift);
    }
    L.push_back(lift);
    L.push_back("G0 X" + num(0.0) + " Y" + num(0.0));
    prog.stats.pen_up_mm += distance(pos, {0.0, 0.0});
    prog.stats.command_count = L.size();
    prog.stats.estimated_minutes =
        prog.stats.pen_down_mm / opts.feed_draw_mm_min + prog.stats.pen_up_mm / opts.feed_travel_mm_min;
    return prog;
}

GcodeProgram parse_gcode(std::string_view text) {
    GcodeProgram prog;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        prog.lines.emplace_back(line);
        start = end + 1;
    }
    prog.stats.command_count = prog.lines.size();
    return prog;
}

Toolpath simulate_gcode(const GcodeProgram& prog) {
    Toolpath tp;
    double x = 0.0, y = 0.0;
    std::optional<double> z;
    std::optional<double> up_z;
    bool down = false;
    Stroke current;

    auto finish = [&] {
        if (!current.polyline.empty()) tp.strokes.push_back(std::move(current));
        current = Stroke{};
    };

    for (std::size_t n = 0; n < prog.lines.size(); ++n) {
        const std::size_t line_no = n + 1;
        std::string_view line = prog.lines[n];
        if (const auto c = line.find(';'); c != std::string_view::npos) line = line.substr(0, c);

        std::istringstream words{std::string(line)};
        std::string cmd;
        if (!(words >> cmd)) continue;
        if (cmd == "G21" || cmd == "G90") {
            std::string extra;
            if (words >> extra) throw ParseError(line_no, "unexpected argument '" + extra + "' to " + cmd);
            continue;
        }
        if (cmd != "G0" && cmd != "G1") throw ParseError(line_no, "unsupported command '" + cmd + "'");

        std::optional<double> nx, ny, nz;
        std::string word;
        while (words >> word) {
            if (word.size() < 2) throw ParseError(line_no, "malformed token '" + word + "'");
            double v = 0.0;
            const char* first = word.data() + 1;
            const char* last = word.data() + word.size();
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
                throw ParseError(line_no, "malformed coordinate token '" + word + "'");
            }
            switch (word[0]) {
                case 'X': nx = v; break;
                case 'Y': ny = v; break;
                case 'Z': nz = v; break;
                case 'F':
                    if (v <= 0.0) throw ParseError(line_no, "feed must be positive");
                    break;
                default: throw ParseError(line_no, "unknown parameter '" + word + "'");
            }
        }

        if (nz) {
            if (!up_z) up_z = *nz;
            z = *nz;
            const bool now_down = *z < *up_z;
            if (now_down && !down) current.polyline.push_back({x, y});
            if (!now_down && down) finish();
            down = now_down;
        }
        if (nx || ny) {
            x = nx.value_or(x);
            y = ny.value_or(y);
            if (down) current.polyline.push_back({x, y});
        }
    }
    finish();
    return tp;
}

}  // namespace sketchforge
