#include "sketchforge/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "sketchforge/errors.hpp"
#include "sketchforge/model_io.hpp"
#include "sketchforge/rng.hpp"

namespace sketchforge {

double SigmaSchedule::at(int iteration, int iterations) const {
    if (iterations <= 1) return start_px;
    const double frac = static_cast<double>(iteration) / (iterations - 1);
    if (iteration == iterations - 1) return end_px;
    return start_px * std::pow(end_px / start_px, frac);
}

void validate(const OptimConfig& cfg) {
    if (cfg.iterations < 1) throw ValidationError("iterations must be >= 1");
    if (!(cfg.lr > 0.0)) throw ValidationError("learning rate must be > 0");
    if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0) || !(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0)) {
        throw ValidationError("Adam betas must lie in [0, 1)");
    }
    if (!(cfg.adam_eps > 0.0)) throw ValidationError("Adam epsilon must be > 0");
    if (!(cfg.sigma.end_px > 0.0) || !(cfg.sigma.end_px <= cfg.sigma.start_px)) {
        throw ValidationError("sigma schedule needs 0 < end <= start");
    }
    if (cfg.snapshot_every < 0) throw ValidationError("snapshot_every must be >= 0");
}

RasterConfig raster_config_for(const OptimConfig& cfg, double sigma_px) {
    RasterConfig rc;
    rc.sigma_px = sigma_px;
    rc.compose = cfg.compose;
    rc.exec = cfg.exec;
    return rc;
}

void set_sigma(SketchModel& model, double sigma_px) {
    for (auto& p : model.primitives) p.sigma = sigma_px;
}

namespace {

std::vector<double> sample_colour(const Canvas& img, Vec2 at) {
    const int c = std::clamp(static_cast<int>(std::floor(at.x * img.width)), 0, img.width - 1);
    const int r = std::clamp(static_cast<int>(std::floor(at.y * img.height)), 0, img.height - 1);
    std::vector<double> col(static_cast<std::size_t>(img.channels));
    for (int ch = 0; ch < img.channels; ++ch) col[ch] = std::clamp(img.at(r, c, ch), 0.0, 1.0);
    return col;
}

Vec2 clamp_unit(Vec2 p) { return {std::clamp(p.x, 0.0, 1.0), std::clamp(p.y, 0.0, 1.0)}; }

bool inside_unit(Vec2 p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

Vec2 unit_dir(double angle) { return {std::cos(angle), std::sin(angle)}; }

// Draws anchor positions according to the init strategy.
class AnchorSampler {
public:
    AnchorSampler(const Canvas& target, InitKind kind, Rng& rng) : kind_(kind), rng_(rng), w_(target.width), h_(target.height) {
        if (kind_ != InitKind::saliency) return;
        const Canvas gray = to_grayscale(target);
        magnitude_.resize(static_cast<std::size_t>(w_) * h_);
        for (int r = 0; r < h_; ++r) {
            for (int c = 0; c < w_; ++c) {
                const double gx = 0.5 * (gray.at(r, std::min(c + 1, w_ - 1)) - gray.at(r, std::max(c - 1, 0)));
                const double gy = 0.5 * (gray.at(std::min(r + 1, h_ - 1), c) - gray.at(std::max(r - 1, 0), c));
                const double m = std::sqrt(gx * gx + gy * gy);
                magnitude_[static_cast<std::size_t>(r) * w_ + c] = m;
                max_mag_ = std::max(max_mag_, m);
            }
        }
    }

    // Anchor for element `index` of a group of `count`.
    Vec2 next(int index, int count) {
        switch (kind_) {
            case InitKind::random_uniform:
                return uniform();
            case InitKind::grid: {
                const int g = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count)))));
                const double jitter = 0.5 / g;
                const Vec2 centre{((index % g) + 0.5) / g, ((index / g) + 0.5) / g};
                return clamp_unit({centre.x + rng_.uniform(-jitter, jitter), centre.y + rng_.uniform(-jitter, jitter)});
            }
            case InitKind::saliency:
                return salient();
        }
        return uniform();
    }

private:
    Vec2 uniform() {
        const double x = rng_.uniform();
        return {x, rng_.uniform()};
    }

    Vec2 salient() {
        if (max_mag_ <= 0.0) return uniform();
        const std::size_t npix = magnitude_.size();
        for (int attempt = 0; attempt < 10'000'000; ++attempt) {
            const std::size_t p = static_cast<std::size_t>(rng_.below(npix));
            if (rng_.uniform() * max_mag_ < magnitude_[p]) {
                const double x = (static_cast<double>(p % static_cast<std::size_t>(w_)) + rng_.uniform()) / w_;
                const double y = (static_cast<double>(p / static_cast<std::size_t>(w_)) + rng_.uniform()) / h_;
                return {x, y};
            }
        }
        return uniform();
    }

    InitKind kind_;
    Rng& rng_;
    int w_;
    int h_;
    std::vector<double> magnitude_;
    double max_mag_ = 0.0;
};

constexpr double kMaxSegmentLength = 0.2;
constexpr double kMinSegmentLength = 0.05;

// Direction resampled until the far end lands on the canvas.
Vec2 far_end(Vec2 start, double length, Rng& rng) {
    Vec2 end = start;
    for (int tries = 0; tries < 32; ++tries) {
        end = start + length * unit_dir(rng.uniform(0.0, 2.0 * std::numbers::pi));
        if (inside_unit(end)) return end;
    }
    return clamp_unit(end);
}

}  // namespace

SketchModel init_model(const TargetImage& target, int n_points, int n_lines, int n_splines, const OptimConfig& cfg) {
    if (n_points < 0 || n_lines < 0 || n_splines < 0) throw ValidationError("primitive counts must be >= 0");
    if (n_points + n_lines + n_splines == 0) throw ValidationError("at least one primitive count must be > 0");
    validate(cfg);

    const Canvas& img = target.canvas;
    Rng rng(cfg.seed);
    AnchorSampler anchors(img, cfg.init, rng);

    SketchModel model;
    model.canvas_w = img.width;
    model.canvas_h = img.height;
    model.background.assign(static_cast<std::size_t>(img.channels), 1.0);

    auto finish = [&](Primitive p) {
        p.colour = sample_colour(img, p.points.front());
        p.sigma = cfg.sigma.start_px;
        p.learn_geo = true;
        p.learn_col = cfg.learn_colour;
        model.primitives.push_back(std::move(p));
    };

    for (int i = 0; i < n_points; ++i) finish(Primitive::point(anchors.next(i, n_points)));
    for (int i = 0; i < n_lines; ++i) {
        const Vec2 a = anchors.next(i, n_lines);
        const double len = rng.uniform(kMinSegmentLength, kMaxSegmentLength);
        finish(Primitive::segment(a, far_end(a, len, rng)));
    }
    for (int i = 0; i < n_splines; ++i) {
        const Vec2 a = anchors.next(i, n_splines);
        const double step = kMaxSegmentLength / 3.0;
        const Vec2 dir = unit_dir(rng.uniform(0.0, 2.0 * std::numbers::pi));
        std::vector<Vec2> ctrl;
        for (int k = 0; k < 4; ++k) {
            const Vec2 jitter{rng.uniform(-0.25, 0.25) * step, rng.uniform(-0.25, 0.25) * step};
            ctrl.push_back(clamp_unit(a + (k * step) * dir + jitter));
        }
        finish(Primitive::catmull_rom(std::move(ctrl)));
    }
    return model;
}

void project(ParamVector& v) {
    for (const auto& slot : v.layout) {
        for (std::size_t i = 0; i < slot.geo_count; ++i) {
            auto& x = v.values[slot.geo_offset + i];
            x = std::clamp(x, kCoordMin, kCoordMax);
        }
        for (std::size_t i = 0; i < slot.col_count; ++i) {
            auto& c = v.values[slot.col_offset + i];
            c = std::clamp(c, 0.0, 1.0);
        }
    }
}

ParamVector adam_step(const ParamVector& params, const ParamVector& grad, AdamState& state, const OptimConfig& cfg) {
    const std::size_t n = params.values.size();
    if (grad.values.size() != n) throw ValidationError("gradient and parameter sizes differ");
    if (state.t == 0 && state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    if (state.m.size() != n || state.v.size() != n) throw ValidationError("Adam state does not match the parameters");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grad.values[i])) {
            throw NumericError("non-finite gradient at parameter index " + std::to_string(i));
        }
    }

    state.t += 1;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));

    ParamVector out = params;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad.values[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        out.values[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
    project(out);
    return out;
}

RunReport optimise(const TargetImage& target, const SketchModel& model, const LossSpec& loss, const OptimConfig& cfg) {
    validate(cfg);
    validate(model);
    if (model.primitives.empty()) throw ValidationError("model has no primitives");
    const Canvas& tgt = target.canvas;
    if (tgt.width != model.canvas_w || tgt.height != model.canvas_h || tgt.channels != model.channels()) {
        throw ValidationError("target is " + std::to_string(tgt.width) + "x" + std::to_string(tgt.height) + "x" +
                              std::to_string(tgt.channels) + " but the model canvas is " +
                              std::to_string(model.canvas_w) + "x" + std::to_string(model.canvas_h) + "x" +
                              std::to_string(model.channels()));
    }
    if (cfg.snapshot_every > 0 && !cfg.snapshot_dir.empty()) std::filesystem::create_directories(cfg.snapshot_dir);

    const auto t0 = std::chrono::steady_clock::now();
    const Objective objective(loss, tgt, cfg.exec);

    RunReport report;
    report.config = cfg;
    SketchModel current = model;
    ParamVector params = pack(current);
    AdamState adam;

    for (int it = 0; it < cfg.iterations; ++it) {
        const double sigma = cfg.sigma.at(it, cfg.iterations);
        set_sigma(current, sigma);
        const auto raster = rasterize(current, raster_config_for(cfg, sigma));
        const auto lv = objective(raster.image);
        if (!std::isfinite(lv.value)) throw NumericError("non-finite loss at iteration " + std::to_string(it));
        report.loss_history.emplace_back(it, lv.value);

        const ParamVector grad = rasterize_backward(raster.tape, lv.grad);
        params = adam_step(params, grad, adam, cfg);
        current = unpack(params, current);

        if (cfg.snapshot_every > 0 && !cfg.snapshot_dir.empty() && (it + 1) % cfg.snapshot_every == 0) {
            char stem[32];
            std::snprintf(stem, sizeof stem, "snap_%06d", it + 1);
            save_model(current, cfg.snapshot_dir / (std::string(stem) + ".json"));
            save_ppm(render(current, raster_config_for(cfg, sigma)), cfg.snapshot_dir / (std::string(stem) + ".ppm"));
        }
    }

    set_sigma(current, cfg.sigma.end_px);
    report.final_loss = objective(render(current, raster_config_for(cfg, cfg.sigma.end_px))).value;
    report.final_model = std::move(current);
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace sketchforge
