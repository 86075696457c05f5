#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sketchforge/canvas.hpp"
#include "sketchforge/parallel.hpp"
#include "sketchforge/primitives.hpp"

namespace sketchforge {

enum class Compose {
    darken_min,  // darkest single-stroke value wins (ink on paper)
    soft_over,   // front-to-back "over" in list order
};

struct RasterConfig {
    double sigma_px = 1.0;
    Compose compose = Compose::darken_min;
    /// Coverage is exactly zero beyond this distance; <= 0 selects 4 * sigma_px.
    double aa_truncate_px = 0.0;
    int samples_per_span = kDefaultSamplesPerSpan;
    ExecPolicy exec;

    double truncate_px() const { return aa_truncate_px > 0.0 ? aa_truncate_px : 4.0 * sigma_px; }
};

/// Per-pixel record of every primitive that covers the pixel, in primitive
/// order. Enough to composite again and to run the backward pass without
/// another geometric search.
struct RasterTape {
    struct Contribution {
        std::uint32_t prim = 0;
        std::int32_t segment = -1;  // active segment of the flattened geometry
        double t = 0.0;             // parameter on that segment
        double d2 = 0.0;            // squared distance, px^2
        double alpha = 0.0;         // coverage
    };

    SketchModel model;
    RasterConfig cfg;
    std::vector<StrokeGeometry> geometry;  // pixel-space, one per primitive
    std::vector<std::uint32_t> offsets;    // width * height + 1, CSR into contributions
    std::vector<Contribution> contributions;

    int width() const { return model.canvas_w; }
    int height() const { return model.canvas_h; }
};

/// Coverage exp(-d2 / (2 sigma^2)), zero beyond the truncation radius.
inline double coverage(double d2, double sigma_px, double truncate_px) {
    if (d2 > truncate_px * truncate_px) return 0.0;
    return std::exp(-d2 / (2.0 * sigma_px * sigma_px));
}

struct RasterResult {
    Canvas image;
    RasterTape tape;
};

/// Soft forward rasterisation at the model's canvas size. The model must be
/// valid and non-empty.
RasterResult rasterize(const SketchModel& model, const RasterConfig& cfg);

/// Composites the tape again; bit-identical to the forward image.
Canvas replay(const RasterTape& tape);

/// Chain rule from an image-shaped upstream gradient to the model's
/// ParamVector layout.
ParamVector rasterize_backward(const RasterTape& tape, const Canvas& dL_dimage);

/// Convenience forward pass without keeping the tape.
Canvas render(const SketchModel& model, const RasterConfig& cfg);

}  // namespace sketchforge

