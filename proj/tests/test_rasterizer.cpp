#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sketchforge/errors.hpp"
#include "sketchforge/rasterizer.hpp"
#include "test_support.hpp"

using namespace sketchforge;
using sketchforge::testing::ModelRecipe;
using sketchforge::testing::random_model;
using sketchforge::testing::relative_error;

namespace {

SketchModel single(Primitive p, int w, int h, std::vector<double> bg = {1.0}) {
    SketchModel m;
    m.canvas_w = w;
    m.canvas_h = h;
    m.background = std::move(bg);
    m.primitives.push_back(std::move(p));
    return m;
}

double weighted_sum(const Canvas& img, const Canvas& w) {
    return std::inner_product(img.data.begin(), img.data.end(), w.data.begin(), 0.0);
}

double max_abs_diff(const Canvas& a, const Canvas& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

/// Fraction of parameter coordinates whose analytic gradient of sum(w * render)
/// agrees with a central difference of step h_px pixels.
double gradient_agreement(const SketchModel& m, const RasterConfig& cfg, std::uint64_t seed, double h_px, double tol) {
    Rng rng(seed);
    Canvas w(m.canvas_w, m.canvas_h, m.channels());
    for (auto& v : w.data) v = rng.uniform(-1, 1);
    const RasterResult fwd = rasterize(m, cfg);
    const ParamVector grad = rasterize_backward(fwd.tape, w);
    ParamVector v = pack(m);
    int good = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        bool is_colour = false;
        for (const auto& s : v.layout) is_colour |= (i >= s.col_offset && i < s.col_offset + s.col_count);
        const double h = is_colour ? h_px : h_px / m.canvas_w;
        const double x0 = v.values[i];
        v.values[i] = x0 + h;
        const double fp = weighted_sum(render(unpack(v, m), cfg), w);
        v.values[i] = x0 - h;
        const double fm = weighted_sum(render(unpack(v, m), cfg), w);
        v.values[i] = x0;
        if (relative_error(grad.values[i], (fp - fm) / (2 * h)) < tol) ++good;
    }
    return static_cast<double>(good) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("black point on a pixel centre paints that pixel black") {
    // Pixel (row 3, col 5) of a 10x8 canvas has its centre at (5.5, 3.5).
    const SketchModel m = single(Primitive::point({5.5 / 10, 3.5 / 8}), 10, 8);
    const Canvas img = render(m, {});
    CHECK(img.at(3, 5) == 0.0);
}

TEST_CASE("coverage two sigma away is exp(-2)") {
    RasterConfig cfg;
    cfg.sigma_px = 1.5;
    const SketchModel m = single(Primitive::point({8.5 / 16, 8.5 / 16}), 16, 16);
    const Canvas img = render(m, cfg);
    CHECK(img.at(8, 11) == doctest::Approx(1.0 - std::exp(-2.0)).epsilon(1e-14));
    CHECK(coverage(4 * 1.5 * 1.5, 1.5, 6.0) == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("uncovered pixels keep the background exactly") {
    const SketchModel m = single(Primitive::point({0.1, 0.1}, {0.2, 0.4, 0.6}), 40, 40, {0.9, 0.8, 0.7});
    const Canvas img = render(m, {});
    CHECK(img.at(39, 39, 0) == 0.9);
    CHECK(img.at(39, 39, 1) == 0.8);
    CHECK(img.at(39, 39, 2) == 0.7);
    RasterConfig over;
    over.compose = Compose::soft_over;
    CHECK(render(m, over).at(30, 30, 2) == 0.7);
}

TEST_CASE("darken_min equals the per-pixel min of single-stroke renders") {
    SketchModel m;
    m.canvas_w = 24;
    m.canvas_h = 20;
    m.primitives = {Primitive::segment({0.1, 0.2}, {0.9, 0.7}, {0.1}), Primitive::segment({0.2, 0.8}, {0.8, 0.1}, {0.4}),
                    Primitive::segment({0.5, 0.05}, {0.45, 0.95}, {0.25})};
    RasterConfig cfg;
    cfg.sigma_px = 1.7;
    const Canvas all = render(m, cfg);
    Canvas oracle(24, 20, 1, 1.0);
    for (const auto& p : m.primitives) {
        const Canvas one = render(single(p, 24, 20), cfg);
        for (std::size_t i = 0; i < one.size(); ++i) oracle.data[i] = std::min(oracle.data[i], one.data[i]);
    }
    CHECK(all.data == oracle.data);
}

TEST_CASE("soft_over composites front to back") {
    // Two points on the same pixel centre, alpha = 1 each: the first one hides the second.
    SketchModel m = single(Primitive::point({0.5, 0.5}, {0.2}), 1, 1);
    m.primitives.push_back(Primitive::point({0.5, 0.5}, {0.7}));
    RasterConfig cfg;
    cfg.compose = Compose::soft_over;
    CHECK(render(m, cfg).data[0] == doctest::Approx(0.2));

    // Half-covering first stroke: 0.5 * c0 + 0.5 * (1 * c1).
    m.canvas_w = 3;
    m.primitives[0].points[0] = {0.5 + std::sqrt(2 * std::log(2.0)) / 3, 0.5};
    m.primitives[1].points[0] = {0.5, 0.5};
    const Canvas img = render(m, cfg);
    CHECK(img.at(0, 1) == doctest::Approx(0.5 * 0.2 + 0.5 * 0.7).epsilon(1e-12));
}

TEST_CASE("rasterizer rejects invalid input") {
    SketchModel empty;
    CHECK_THROWS_AS(render(empty, {}), ValidationError);
    RasterConfig cfg;
    cfg.sigma_px = 0.0;
    CHECK_THROWS_AS(render(single(Primitive::point({0.5, 0.5}), 4, 4), cfg), ValidationError);
    cfg.sigma_px = 2.0;
    cfg.aa_truncate_px = 1.0;
    CHECK_THROWS_AS(render(single(Primitive::point({0.5, 0.5}), 4, 4), cfg), ValidationError);
}

TEST_CASE("replaying the tape is bit-exact") {
    Rng rng(31);
    for (Compose c : {Compose::darken_min, Compose::soft_over}) {
        ModelRecipe r;
        r.points = 5;
        r.segments = 5;
        r.splines = 3;
        r.channels = c == Compose::soft_over ? 3 : 1;
        const SketchModel m = random_model(rng, r);
        RasterConfig cfg;
        cfg.compose = c;
        cfg.sigma_px = 1.3;
        const RasterResult res = rasterize(m, cfg);
        CHECK(replay(res.tape).data == res.image.data);
    }
}

TEST_CASE("zero upstream gradient gives zero parameter gradient") {
    Rng rng(32);
    ModelRecipe r;
    r.points = 3;
    r.segments = 3;
    r.learn_colour = true;
    const SketchModel m = random_model(rng, r);
    const RasterResult res = rasterize(m, {});
    const ParamVector g = rasterize_backward(res.tape, Canvas(32, 32, 1, 0.0));
    CHECK(g.size() == pack(m).size());
    for (double v : g.values) CHECK(v == 0.0);
}

TEST_CASE("single point, loss = one pixel value: analytic matches FD") {
    const SketchModel m = single(Primitive::point({0.43, 0.57}), 16, 16);
    RasterConfig cfg;
    cfg.sigma_px = 1.5;
    Canvas w(16, 16, 1, 0.0);
    w.at(9, 7) = 1.0;
    const ParamVector g = rasterize_backward(rasterize(m, cfg).tape, w);
    ParamVector v = pack(m);
    const double h = 1e-4 / 16;
    for (std::size_t i = 0; i < 2; ++i) {
        const double x0 = v.values[i];
        v.values[i] = x0 + h;
        const double fp = render(unpack(v, m), cfg).at(9, 7);
        v.values[i] = x0 - h;
        const double fm = render(unpack(v, m), cfg).at(9, 7);
        v.values[i] = x0;
        CHECK(relative_error(g.values[i], (fp - fm) / (2 * h)) < 1e-4);
    }
}

TEST_CASE("soft_over colour gradient of a fully covering stroke sums the upstream gradient") {
    // A horizontal segment through both pixel centres of a 2x1 canvas has alpha 1 everywhere.
    Primitive seg = Primitive::segment({0.25, 0.5}, {0.75, 0.5}, {0.3, 0.6, 0.9});
    seg.learn_col = true;
    const SketchModel m = single(seg, 2, 1, {1, 1, 1});
    RasterConfig cfg;
    cfg.compose = Compose::soft_over;
    const RasterResult res = rasterize(m, cfg);
    CHECK(res.image.data == std::vector<double>{0.3, 0.6, 0.9, 0.3, 0.6, 0.9});
    Canvas up(2, 1, 3);
    up.data = {0.1, -0.2, 0.3, 0.5, 0.25, -1.0};
    const ParamVector g = rasterize_backward(res.tape, up);
    const auto& slot = g.layout[0];
    REQUIRE(slot.col_count == 3);
    for (int c = 0; c < 3; ++c) {
        CHECK(g.values[slot.col_offset + c] == doctest::Approx(up.data[c] + up.data[3 + c]).epsilon(1e-14));
    }
}

TEST_CASE("backward matches finite differences on mixed random models") {
    Rng rng(33);
    for (Compose c : {Compose::darken_min, Compose::soft_over}) {
        for (int trial = 0; trial < 3; ++trial) {
            ModelRecipe r;
            r.width = 24;
            r.height = 20;
            r.points = 2;
            r.segments = 2;
            r.splines = 1;
            r.channels = c == Compose::soft_over ? 3 : 1;
            r.learn_colour = true;
            r.sigma = 1.5;
            const SketchModel m = random_model(rng, r);
            RasterConfig cfg;
            cfg.compose = c;
            cfg.sigma_px = 1.5;
            CHECK(gradient_agreement(m, cfg, 100 + trial, 1e-3, 1e-3) >= 0.95);
        }
    }
}

TEST_CASE("output stays in [0, 1]") {
    Rng rng(34);
    for (Compose c : {Compose::darken_min, Compose::soft_over}) {
        ModelRecipe r;
        r.points = 10;
        r.segments = 10;
        r.splines = 5;
        r.channels = 3;
        const SketchModel m = random_model(rng, r);
        RasterConfig cfg;
        cfg.compose = c;
        cfg.sigma_px = 2.0;
        for (double v : render(m, cfg).data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("one-pixel translation shifts the interior by one pixel") {
    Rng rng(35);
    ModelRecipe r;
    r.width = 40;
    r.height = 40;
    r.points = 3;
    r.segments = 3;
    r.splines = 2;
    r.lo = 0.3;
    r.hi = 0.7;
    const SketchModel m = random_model(rng, r);
    SketchModel shifted = m;
    for (auto& p : shifted.primitives) p = translated(p, {1.0 / 40, 1.0 / 40});
    RasterConfig cfg;
    cfg.sigma_px = 1.0;
    const Canvas a = render(m, cfg);
    const Canvas b = render(shifted, cfg);
    double worst = 0;
    for (int y = 4; y < 35; ++y) {
        for (int x = 4; x < 35; ++x) worst = std::max(worst, std::abs(b.at(y + 1, x + 1) - a.at(y, x)));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("darken_min ignores primitive order") {
    Rng rng(36);
    ModelRecipe r;
    r.points = 4;
    r.segments = 4;
    r.splines = 2;
    SketchModel m = random_model(rng, r);
    const Canvas base = render(m, {});
    std::reverse(m.primitives.begin(), m.primitives.end());
    CHECK(render(m, {}).data == base.data);
    std::rotate(m.primitives.begin(), m.primitives.begin() + 3, m.primitives.end());
    CHECK(render(m, {}).data == base.data);
}

TEST_CASE("widening the truncation radius is bounded by the tail coverage") {
    // Pixels between 4 sigma and 8 sigma gain at most exp(-8) of ink.
    Rng rng(37);
    ModelRecipe r;
    r.points = 4;
    r.segments = 4;
    r.splines = 2;
    const SketchModel m = random_model(rng, r);
    RasterConfig narrow;
    narrow.sigma_px = 1.2;
    RasterConfig wide = narrow;
    wide.aa_truncate_px = 8 * narrow.sigma_px;
    const double diff = max_abs_diff(render(m, narrow), render(m, wide));
    CHECK(diff > 0.0);
    CHECK(diff <= std::exp(-8.0) + 1e-15);
}

TEST_CASE("threaded forward and backward agree with the serial path") {
    Rng rng(38);
    ModelRecipe r;
    r.width = 48;
    r.height = 40;
    r.points = 20;
    r.segments = 20;
    r.splines = 10;
    r.channels = 3;
    r.learn_colour = true;
    const SketchModel m = random_model(rng, r);
    for (Compose c : {Compose::darken_min, Compose::soft_over}) {
        RasterConfig serial;
        serial.compose = c;
        serial.sigma_px = 1.5;
        RasterConfig threaded = serial;
        threaded.exec = {4, false};
        const RasterResult a = rasterize(m, serial);
        const RasterResult b = rasterize(m, threaded);
        CHECK(max_abs_diff(a.image, b.image) <= 1e-6);
        Canvas up(48, 40, 3);
        for (auto& v : up.data) v = rng.uniform(-1, 1);
        const ParamVector ga = rasterize_backward(a.tape, up);
        const ParamVector gb = rasterize_backward(b.tape, up);
        for (std::size_t i = 0; i < ga.size(); ++i) CHECK(std::abs(ga.values[i] - gb.values[i]) <= 1e-6 * (1 + std::abs(ga.values[i])));
    }
}
