#include "sketchforge/losses.hpp"

#include <cmath>

#include "sketchforge/errors.hpp"

namespace sketchforge {

namespace {

constexpr double kNormEps = 1e-10;

void check_shapes(const Canvas& a, const Canvas& b) {
    if (!a.same_shape(b)) {
        throw ValidationError("loss inputs differ in shape: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                              "x" + std::to_string(a.channels) + " vs " + std::to_string(b.width) + "x" +
                              std::to_string(b.height) + "x" + std::to_string(b.channels));
    }
}

Canvas to_encoder_input(const Canvas& img, const EncoderNet& net) {
    if (img.channels == net.in_channels()) return img;
    if (img.channels == 1 && net.in_channels() == 3) {
        Canvas rgb(img.width, img.height, 3);
        for (std::size_t i = 0; i < img.data.size(); ++i) {
            for (int ch = 0; ch < 3; ++ch) rgb.data[3 * i + ch] = img.data[i];
        }
        return rgb;
    }
    throw ValidationError("canvas has " + std::to_string(img.channels) + " channels, encoder expects " +
                          std::to_string(net.in_channels()));
}

Canvas from_encoder_grad(const Canvas& g, int channels) {
    if (g.channels == channels) return g;
    Canvas out(g.width, g.height, 1);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = g.data[3 * i] + g.data[3 * i + 1] + g.data[3 * i + 2];
    return out;
}

void normalise_pixels(Tensor& t) {
    for (std::size_t p = 0; p < static_cast<std::size_t>(t.h) * t.w; ++p) {
        double* v = &t.data[p * t.c];
        double r2 = 0.0;
        for (int c = 0; c < t.c; ++c) r2 += v[c] * v[c];
        const double denom = std::sqrt(r2) + kNormEps;
        for (int c = 0; c < t.c; ++c) v[c] /= denom;
    }
}

// dL/df given dL/dn for n = f / (|f| + eps), per pixel.
void normalise_backward(const Tensor& f, Tensor& grad) {
    for (std::size_t p = 0; p < static_cast<std::size_t>(f.h) * f.w; ++p) {
        const double* v = &f.data[p * f.c];
        double* g = &grad.data[p * f.c];
        double r2 = 0.0, fg = 0.0;
        for (int c = 0; c < f.c; ++c) {
            r2 += v[c] * v[c];
            fg += v[c] * g[c];
        }
        const double r = std::sqrt(r2);
        const double denom = r + kNormEps;
        const double radial = r > 0.0 ? fg / (denom * denom * r) : 0.0;
        for (int c = 0; c < f.c; ++c) g[c] = g[c] / denom - v[c] * radial;
    }
}

std::vector<double> tap_weights(const LossSpec& spec, const EncoderNet& net) {
    if (spec.feature_weights.empty()) return std::vector<double>(net.taps.size(), 1.0);
    if (spec.feature_weights.size() != net.taps.size()) {
        throw ValidationError("feature_weights has " + std::to_string(spec.feature_weights.size()) +
                              " entries, encoder has " + std::to_string(net.taps.size()) + " taps");
    }
    for (double w : spec.feature_weights) {
        if (!(w > 0.0)) throw ValidationError("feature weights must be positive");
    }
    return spec.feature_weights;
}

FeatureSet target_features(const Canvas& target, const LossSpec& spec, const ExecPolicy& exec) {
    auto out = forward(*spec.feature_encoder, to_encoder_input(target, *spec.feature_encoder), exec);
    if (spec.lpips_normalise) {
        for (auto& f : out.features) normalise_pixels(f.act);
    }
    return std::move(out.features);
}

LossValue feature_with_cached_target(const Canvas& render, const FeatureSet& tgt, const LossSpec& spec,
                                     const ExecPolicy& exec) {
    const auto& net = *spec.feature_encoder;
    const auto weights = tap_weights(spec, net);
    auto fwd = forward(net, to_encoder_input(render, net), exec);

    LossValue out;
    FeatureSet grads;
    for (std::size_t i = 0; i < fwd.features.size(); ++i) {
        const Tensor& raw = fwd.features[i].act;
        Tensor f = raw;
        if (spec.lpips_normalise) normalise_pixels(f);
        const Tensor& t = tgt[i].act;
        Tensor g(f.h, f.w, f.c);
        const double n = static_cast<double>(f.data.size());
        double sum = 0.0;
        for (std::size_t j = 0; j < f.data.size(); ++j) {
            const double d = f.data[j] - t.data[j];
            sum += d * d;
            g.data[j] = 2.0 * weights[i] * d / n;
        }
        out.value += weights[i] * sum / n;
        if (spec.lpips_normalise) normalise_backward(raw, g);
        grads.push_back({fwd.features[i].layer, std::move(g)});
    }
    out.grad = from_encoder_grad(backward(fwd.tape, grads), render.channels);
    return out;
}

void add_scaled(LossValue& acc, const LossValue& term, double w) {
    acc.value += w * term.value;
    for (std::size_t i = 0; i < acc.grad.data.size(); ++i) acc.grad.data[i] += w * term.grad.data[i];
}

}  // namespace

LossValue loss_mse(const Canvas& render, const Canvas& target) {
    check_shapes(render, target);
    LossValue out;
    out.grad = Canvas(render.width, render.height, render.channels);
    const double n = static_cast<double>(render.data.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < render.data.size(); ++i) {
        const double d = render.data[i] - target.data[i];
        sum += d * d;
        out.grad.data[i] = 2.0 * d / n;
    }
    out.value = sum / n;
    return out;
}

LossValue loss_pyramid(const Canvas& render, const Canvas& target, int levels) {
    check_shapes(render, target);
    if (levels < 1) throw ValidationError("pyramid needs at least one level");
    const long need = 1L << (levels - 1);
    if (render.width < need || render.height < need) {
        throw ValidationError(std::to_string(levels) + " pyramid levels need an image of at least " +
                              std::to_string(need) + "x" + std::to_string(need));
    }

    std::vector<Canvas> r{render}, t{target};
    for (int l = 1; l < levels; ++l) {
        r.push_back(downsample_avg2(r.back()));
        t.push_back(downsample_avg2(t.back()));
    }
    LossValue out;
    Canvas carry;  // gradient flowing down from coarser levels
    for (int l = levels - 1; l >= 0; --l) {
        auto term = loss_mse(r[l], t[l]);
        out.value += term.value / levels;
        for (auto& g : term.grad.data) g /= levels;
        if (!carry.data.empty()) {
            const Canvas up = downsample_avg2_backward(carry, r[l].width, r[l].height);
            for (std::size_t i = 0; i < term.grad.data.size(); ++i) term.grad.data[i] += up.data[i];
        }
        carry = std::move(term.grad);
    }
    out.grad = std::move(carry);
    return out;
}

LossValue loss_feature(const Canvas& render, const Canvas& target, const LossSpec& spec, const ExecPolicy& exec) {
    check_shapes(render, target);
    if (!spec.feature_encoder) throw ValidationError("feature loss needs an encoder");
    return feature_with_cached_target(render, target_features(target, spec, exec), spec, exec);
}

Objective::Objective(LossSpec spec, Canvas target, ExecPolicy exec)
    : spec_(std::move(spec)), target_(std::move(target)), exec_(exec) {
    if (spec_.kind == LossKind::feature) {
        if (!spec_.feature_encoder) throw ValidationError("feature loss needs an encoder");
        tap_weights(spec_, *spec_.feature_encoder);
        target_features_ = target_features(target_, spec_, exec_);
    }
    if (spec_.kind == LossKind::pyramid_mse) {
        const long need = 1L << (std::max(1, spec_.pyramid_levels) - 1);
        if (spec_.pyramid_levels < 1 || target_.width < need || target_.height < need) {
            throw ValidationError("too many pyramid levels for a " + std::to_string(target_.width) + "x" +
                                  std::to_string(target_.height) + " target");
        }
    }
    if (!(spec_.mse_weight >= 0.0)) throw ValidationError("mse_weight must be >= 0");
}

LossValue Objective::operator()(const Canvas& render) const {
    check_shapes(render, target_);
    LossValue out;
    switch (spec_.kind) {
        case LossKind::mse:
            return loss_mse(render, target_);
        case LossKind::pyramid_mse:
            out = loss_pyramid(render, target_, spec_.pyramid_levels);
            break;
        case LossKind::feature:
            out = feature_with_cached_target(render, *target_features_, spec_, exec_);
            break;
    }
    if (spec_.mse_weight > 0.0) add_scaled(out, loss_mse(render, target_), spec_.mse_weight);
    return out;
}

}  // namespace sketchforge
