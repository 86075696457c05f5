#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "sketchforge/canvas.hpp"
#include "sketchforge/encoder.hpp"

namespace sketchforge {

enum class LossKind { mse, pyramid_mse, feature };

struct LossSpec {
    LossKind kind = LossKind::mse;
    int pyramid_levels = 3;
    std::shared_ptr<const EncoderNet> feature_encoder;
    std::vector<double> feature_weights;  // per tap; empty means 1 for every tap
    bool lpips_normalise = true;
    /// Optional pixel-MSE term added to a pyramid or feature loss.
    double mse_weight = 0.0;
};

struct LossValue {
    double value = 0.0;
    Canvas grad;  // dL/d(render)
};

/// mean((render - target)^2) over every scalar.
LossValue loss_mse(const Canvas& render, const Canvas& target);

/// Mean of loss_mse over `levels` downsample_avg2 levels (level 0 = full res).
LossValue loss_pyramid(const Canvas& render, const Canvas& target, int levels);

/// Per tap: weight * mean((f_render - f_target)^2), features optionally
/// unit-normalised per pixel. Grayscale canvases are replicated when the
/// encoder takes RGB.
LossValue loss_feature(const Canvas& render, const Canvas& target, const LossSpec& spec,
                       const ExecPolicy& exec = {});

/// Objective bound to a fixed target; encoder features of the target are
/// computed once at construction.
class Objective {
public:
    Objective(LossSpec spec, Canvas target, ExecPolicy exec = {});

    LossValue operator()(const Canvas& render) const;

    const LossSpec& spec() const { return spec_; }
    const Canvas& target() const { return target_; }

private:
    LossSpec spec_;
    Canvas target_;
    ExecPolicy exec_;
    std::optional<FeatureSet> target_features_;  // normalised if lpips_normalise
};

}  // namespace sketchforge
