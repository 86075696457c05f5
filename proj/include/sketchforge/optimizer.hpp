#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "sketchforge/canvas.hpp"
#include "sketchforge/losses.hpp"
#include "sketchforge/parallel.hpp"
#include "sketchforge/primitives.hpp"
#include "sketchforge/rasterizer.hpp"

namespace sketchforge {

enum class InitKind { random_uniform, grid, saliency };

/// Exponential decay from start_px at the first iteration to end_px at the last.
struct SigmaSchedule {
    double start_px = 8.0;
    double end_px = 1.0;

    double at(int iteration, int iterations) const;
};

struct OptimConfig {
    int iterations = 2000;
    double lr = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    SigmaSchedule sigma;
    std::uint64_t seed = 0;
    int snapshot_every = 0;  // 0 disables snapshots
    std::filesystem::path snapshot_dir;
    InitKind init = InitKind::random_uniform;
    bool learn_colour = true;  // used by init_model
    Compose compose = Compose::darken_min;
    ExecPolicy exec;
};

void validate(const OptimConfig& cfg);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
};

struct RunReport {
    std::vector<std::pair<int, double>> loss_history;  // (iteration, loss before the step)
    SketchModel final_model;
    double final_loss = 0.0;  // final model rendered at sigma end_px
    double wall_time_s = 0.0;
    OptimConfig config;
};

/// Initial primitives: points first, then segments, then 4-control splines.
/// Colours are sampled from the target at each primitive's first control.
SketchModel init_model(const TargetImage& target, int n_points, int n_lines, int n_splines, const OptimConfig& cfg);

/// Clamps geometry entries to [kCoordMin, kCoordMax] and colour entries to [0, 1].
void project(ParamVector& v);

/// One bias-corrected Adam update followed by projection. Advances state.
/// Throws NumericError naming the first non-finite gradient entry.
ParamVector adam_step(const ParamVector& params, const ParamVector& grad, AdamState& state, const OptimConfig& cfg);

/// The gradient-descent loop: anneal sigma, rasterise, evaluate the loss,
/// back-propagate and step.
RunReport optimise(const TargetImage& target, const SketchModel& model, const LossSpec& loss, const OptimConfig& cfg);

/// Raster configuration the loop uses at a given sigma.
RasterConfig raster_config_for(const OptimConfig& cfg, double sigma_px);

/// Sets every primitive's width to sigma_px.
void set_sigma(SketchModel& model, double sigma_px);

}  // namespace sketchforge
