#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "sketchforge/toolpath.hpp"

namespace sketchforge {

struct GcodeOptions {
    double feed_draw_mm_min = 1500.0;
    double feed_travel_mm_min = 3000.0;
    double pen_up_z = 5.0;
    double pen_down_z = 0.0;
    double plunge_feed_mm_min = 500.0;
};

struct GcodeStats {
    double pen_down_mm = 0.0;
    double pen_up_mm = 0.0;  // every emitted XY rapid, including the return home
    std::size_t command_count = 0;
    double estimated_minutes = 0.0;
};

struct GcodeProgram {
    std::vector<std::string> lines;
    GcodeStats stats;

    /// LF-terminated lines.
    std::string text() const;
};

/// Dialect: G21/G90 preamble, Z pen lift, G0 travel, G1 draw, 3-decimal
/// numbers. Throws ValidationError when a formatted coordinate leaves the bed.
GcodeProgram toolpath_to_gcode(const Toolpath& tp, const GcodeOptions& opts);

/// Splits program text into lines; stats are left empty.
GcodeProgram parse_gcode(std::string_view text);

/// Replays the program and returns the pen-down polylines in drawing order.
/// The pen-up height is the first Z the program sets; the pen is down below
/// it. Throws ParseError for anything outside the emitted subset.
Toolpath simulate_gcode(const GcodeProgram& prog);

}  // namespace sketchforge
