#pragma once

#include <string>

#include "sketchforge/primitives.hpp"
#include "sketchforge/toolpath.hpp"

namespace sketchforge {

/// SVG 1.1 with a millimetre viewBox. One element per primitive: points are
/// filled circles of radius sigma, everything else a stroked path of width
/// 2 * sigma (both scaled from pixels to mm). Splines are written as exact
/// cubic Bezier spans.
std::string model_to_svg(const SketchModel& model, double width_mm, double height_mm);

/// Pen-down strokes of a toolpath, y flipped back to SVG's downward axis.
std::string toolpath_to_svg(const Toolpath& tp, double pen_width_mm = 0.3);

}  // namespace sketchforge
