#include "sketchforge/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "sketchforge/errors.hpp"

namespace sketchforge {

namespace {

struct PendingHit {
    std::uint32_t pixel;
    RasterTape::Contribution c;
};

void check_config(const RasterConfig& cfg) {
    if (!(cfg.sigma_px > 0.0) || !std::isfinite(cfg.sigma_px)) throw ValidationError("sigma_px must be > 0");
    if (cfg.truncate_px() < cfg.sigma_px) throw ValidationError("aa_truncate_px must be >= sigma_px");
}

// Composites one pixel's contributions into out[0..channels).
void composite_pixel(const RasterTape& tape, std::size_t pixel, double* out) {
    const auto& model = tape.model;
    const int channels = model.channels();
    const auto* begin = tape.contributions.data() + tape.offsets[pixel];
    const auto* end = tape.contributions.data() + tape.offsets[pixel + 1];

    if (tape.cfg.compose == Compose::darken_min) {
        for (int ch = 0; ch < channels; ++ch) {
            const double bg = model.background[ch];
            double best = bg;
            for (const auto* c = begin; c != end; ++c) {
                const double v = bg - c->alpha * (bg - model.primitives[c->prim].colour[ch]);
                best = std::min(best, v);
            }
            out[ch] = std::clamp(best, 0.0, 1.0);
        }
        return;
    }

    for (int ch = 0; ch < channels; ++ch) {
        double acc = 0.0;
        double transmit = 1.0;
        for (const auto* c = begin; c != end; ++c) {
            acc += c->alpha * transmit * model.primitives[c->prim].colour[ch];
            transmit *= 1.0 - c->alpha;
        }
        out[ch] = std::clamp(acc + transmit * model.background[ch], 0.0, 1.0);
    }
}

Canvas composite(const RasterTape& tape) {
    Canvas img(tape.width(), tape.height(), tape.model.channels());
    const std::size_t npix = static_cast<std::size_t>(tape.width()) * tape.height();
    parallel_chunks(npix, tape.cfg.exec.threads, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p) composite_pixel(tape, p, img.data.data() + p * img.channels);
    });
    return img;
}

}  // namespace

RasterResult rasterize(const SketchModel& model, const RasterConfig& cfg) {
    check_config(cfg);
    validate(model);
    if (model.primitives.empty()) throw ValidationError("cannot rasterise a model with no primitives");

    RasterResult res;
    RasterTape& tape = res.tape;
    tape.model = model;
    tape.cfg = cfg;

    const int w = model.canvas_w;
    const int h = model.canvas_h;
    const double radius = cfg.truncate_px();
    const std::size_t nprim = model.primitives.size();

    tape.geometry.resize(nprim);
    std::vector<std::vector<PendingHit>> hits(nprim);

    // Per-pixel work is independent, so any thread count yields the same hits.
    parallel_chunks(nprim, cfg.exec.threads, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) {
            tape.geometry[k] = resolve_geometry(model.primitives[k], w, h, cfg.samples_per_span);
            const auto& geo = tape.geometry[k];
            // Pixel centres at (col + 0.5, row + 0.5) inside the inflated bbox.
            const int c0 = std::max(0, static_cast<int>(std::ceil(geo.min_x - radius - 0.5)));
            const int c1 = std::min(w - 1, static_cast<int>(std::floor(geo.max_x + radius - 0.5)));
            const int r0 = std::max(0, static_cast<int>(std::ceil(geo.min_y - radius - 0.5)));
            const int r1 = std::min(h - 1, static_cast<int>(std::floor(geo.max_y + radius - 0.5)));
            for (int r = r0; r <= r1; ++r) {
                for (int c = c0; c <= c1; ++c) {
                    const Vec2 p{c + 0.5, r + 0.5};
                    const auto hit = nearest(geo, p);
                    if (hit.d2 > radius * radius) continue;
                    RasterTape::Contribution con;
                    con.prim = static_cast<std::uint32_t>(k);
                    con.segment = hit.segment;
                    con.t = hit.t;
                    con.d2 = hit.d2;
                    con.alpha = coverage(hit.d2, cfg.sigma_px, radius);
                    hits[k].push_back({static_cast<std::uint32_t>(r * w + c), con});
                }
            }
        }
    });

    // Stable counting sort by pixel keeps primitive order inside each pixel.
    const std::size_t npix = static_cast<std::size_t>(w) * h;
    tape.offsets.assign(npix + 1, 0);
    for (const auto& list : hits) {
        for (const auto& hp : list) ++tape.offsets[hp.pixel + 1];
    }
    for (std::size_t p = 0; p < npix; ++p) tape.offsets[p + 1] += tape.offsets[p];
    tape.contributions.resize(tape.offsets[npix]);
    std::vector<std::uint32_t> cursor(tape.offsets.begin(), tape.offsets.end() - 1);
    for (const auto& list : hits) {
        for (const auto& hp : list) tape.contributions[cursor[hp.pixel]++] = hp.c;
    }

    res.image = composite(tape);
    return res;
}

Canvas replay(const RasterTape& tape) { return composite(tape); }

Canvas render(const SketchModel& model, const RasterConfig& cfg) { return rasterize(model, cfg).image; }

ParamVector rasterize_backward(const RasterTape& tape, const Canvas& dL_dimage) {
    const auto& model = tape.model;
    const int channels = model.channels();
    if (dL_dimage.width != tape.width() || dL_dimage.height != tape.height() || dL_dimage.channels != channels) {
        throw ValidationError("image gradient shape does not match the raster tape");
    }
    if (tape.offsets.size() != static_cast<std::size_t>(tape.width()) * tape.height() + 1 ||
        tape.geometry.size() != model.primitives.size()) {
        throw ValidationError("raster tape is inconsistent with its model");
    }
    for (double g : dL_dimage.data) {
        if (!std::isfinite(g)) throw ValidationError("non-finite image gradient");
    }

    // Dense per-primitive gradient: 2 * controls (px) then colour components.
    const std::size_t nprim = model.primitives.size();
    std::vector<std::size_t> base(nprim + 1, 0);
    for (std::size_t k = 0; k < nprim; ++k) {
        base[k + 1] = base[k] + 2 * model.primitives[k].points.size() + model.primitives[k].colour.size();
    }

    const double inv_two_sigma2 = 1.0 / (2.0 * tape.cfg.sigma_px * tape.cfg.sigma_px);
    const std::size_t npix = static_cast<std::size_t>(tape.width()) * tape.height();
    const int workers = tape.cfg.exec.workers();
    const std::size_t nchunks = chunk_count(npix, workers);
    std::vector<std::vector<double>> partial(nchunks, std::vector<double>(base[nprim], 0.0));

    parallel_chunks(npix, workers, [&](std::size_t chunk, std::size_t b, std::size_t e) {
        auto& grad = partial[chunk];
        std::vector<double> dalpha;
        std::vector<double> suffix;
        for (std::size_t p = b; p < e; ++p) {
            const auto* begin = tape.contributions.data() + tape.offsets[p];
            const std::size_t n = tape.offsets[p + 1] - tape.offsets[p];
            if (n == 0) continue;
            const double* g = dL_dimage.data.data() + p * channels;
            dalpha.assign(n, 0.0);

            if (tape.cfg.compose == Compose::darken_min) {
                for (int ch = 0; ch < channels; ++ch) {
                    if (g[ch] == 0.0) continue;
                    const double bg = model.background[ch];
                    double best = bg;
                    std::size_t winner = n;  // n: background wins
                    for (std::size_t i = 0; i < n; ++i) {
                        const double v = bg - begin[i].alpha * (bg - model.primitives[begin[i].prim].colour[ch]);
                        if (v < best) {
                            best = v;
                            winner = i;
                        }
                    }
                    if (winner == n) continue;
                    const auto& c = begin[winner];
                    const double col = model.primitives[c.prim].colour[ch];
                    dalpha[winner] += g[ch] * (col - bg);
                    grad[base[c.prim] + 2 * model.primitives[c.prim].points.size() + ch] += g[ch] * c.alpha;
                }
            } else {
                for (int ch = 0; ch < channels; ++ch) {
                    if (g[ch] == 0.0) continue;
                    // suffix[i]: layers after i composited over the background.
                    suffix.assign(n + 1, model.background[ch]);
                    for (std::size_t i = n; i-- > 0;) {
                        const double col = model.primitives[begin[i].prim].colour[ch];
                        suffix[i] = begin[i].alpha * col + (1.0 - begin[i].alpha) * suffix[i + 1];
                    }
                    double transmit = 1.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const auto& c = begin[i];
                        const double col = model.primitives[c.prim].colour[ch];
                        dalpha[i] += g[ch] * transmit * (col - suffix[i + 1]);
                        grad[base[c.prim] + 2 * model.primitives[c.prim].points.size() + ch] +=
                            g[ch] * c.alpha * transmit;
                        transmit *= 1.0 - c.alpha;
                    }
                }
            }

            const Vec2 centre{static_cast<double>(p % tape.width()) + 0.5,
                              static_cast<double>(p / tape.width()) + 0.5};
            for (std::size_t i = 0; i < n; ++i) {
                if (dalpha[i] == 0.0) continue;
                const auto& c = begin[i];
                const auto& geo = tape.geometry[c.prim];
                NearestHit hit;
                hit.d2 = c.d2;
                hit.segment = c.segment;
                hit.t = c.t;
                if (c.segment < 0) {
                    hit.q = geo.vertices[0].pos;
                } else {
                    const Vec2 a = geo.vertices[c.segment].pos;
                    const Vec2 bb = geo.vertices[c.segment + 1].pos;
                    hit.q = closest_point_segment(centre, a, bb).q;
                }
                const double dd2 = -dalpha[i] * c.alpha * inv_two_sigma2;
                accumulate_d2_grad(geo, hit, centre, dd2,
                                   std::span<double>(grad.data() + base[c.prim], 2 * geo.control_count));
            }
        }
    });

    for (std::size_t k = 1; k < nchunks; ++k) {
        for (std::size_t i = 0; i < base[nprim]; ++i) partial[0][i] += partial[k][i];
    }
    const auto& dense = partial[0];

    ParamVector out;
    out.layout = param_layout(model);
    out.values.assign(out.layout.empty() ? 0 : out.layout.back().col_offset + out.layout.back().col_count, 0.0);
    const double sx = tape.width();
    const double sy = tape.height();
    for (std::size_t k = 0; k < nprim; ++k) {
        const auto& prim = model.primitives[k];
        const auto& slot = out.layout[k];
        if (prim.learn_geo) {
            for (std::size_t j = 0; j < prim.points.size(); ++j) {
                out.values[slot.geo_offset + 2 * j] = dense[base[k] + 2 * j] * sx;
                out.values[slot.geo_offset + 2 * j + 1] = dense[base[k] + 2 * j + 1] * sy;
            }
        }
        if (prim.learn_col) {
            for (std::size_t ch = 0; ch < prim.colour.size(); ++ch) {
                out.values[slot.col_offset + ch] = dense[base[k] + 2 * prim.points.size() + ch];
            }
        }
    }
    return out;
}

}  // namespace sketchforge
