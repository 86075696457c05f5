#include "sketchforge/toolpath.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "sketchforge/errors.hpp"

namespace sketchforge {

std::vector<Vec2> Stroke::drawn() const {
    std::vector<Vec2> pts = polyline;
    if (reversed) std::reverse(pts.begin(), pts.end());
    return pts;
}

double Stroke::length() const {
    double len = 0.0;
    for (std::size_t i = 1; i < polyline.size(); ++i) len += distance(polyline[i - 1], polyline[i]);
    return len;
}

std::vector<Vec2> flatten_catmull_rom(std::span<const Vec2> ctrl, double tol) {
    if (ctrl.size() < 4) throw ValidationError("Catmull-Rom curve needs at least 4 control points");
    if (!(tol > 0.0)) throw ValidationError("flatten tolerance must be > 0");
    constexpr int kMaxChords = 1 << 14;
    std::vector<Vec2> out;
    for (std::size_t s = 0; s + 3 < ctrl.size(); ++s) {
        auto at = [&](double t) { return catmull_rom_eval(ctrl[s], ctrl[s + 1], ctrl[s + 2], ctrl[s + 3], t); };
        int n = 1;
        for (; n < kMaxChords; n *= 2) {
            bool ok = true;
            for (int k = 0; k < n && ok; ++k) {
                const Vec2 a = at(static_cast<double>(k) / n);
                const Vec2 b = at(static_cast<double>(k + 1) / n);
                const Vec2 mid = at((k + 0.5) / n);
                ok = distance(mid, 0.5 * (a + b)) < tol;
            }
            if (ok) break;
        }
        for (int k = 0; k <= n; ++k) {
            const Vec2 v = at(static_cast<double>(k) / n);
            if (out.empty() || !(out.back() == v)) out.push_back(v);
        }
    }
    return out;
}

namespace {

// Liang-Barsky; returns false when the segment misses the box.
bool clip_segment(Vec2 a, Vec2 b, double x0, double y0, double x1, double y1, double& t0, double& t1) {
    t0 = 0.0;
    t1 = 1.0;
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {a.x - x0, x1 - a.x, a.y - y0, y1 - a.y};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
            continue;
        }
        const double r = q[i] / p[i];
        if (p[i] < 0.0) {
            if (r > t1) return false;
            t0 = std::max(t0, r);
        } else {
            if (r < t0) return false;
            t1 = std::min(t1, r);
        }
    }
    return true;
}

}  // namespace

std::vector<std::vector<Vec2>> clip_polyline(std::span<const Vec2> pts, double x0, double y0, double x1, double y1) {
    std::vector<std::vector<Vec2>> pieces;
    std::vector<Vec2> cur;
    auto flush = [&] {
        if (!cur.empty()) pieces.push_back(std::move(cur));
        cur.clear();
    };
    auto inside = [&](Vec2 p) { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; };

    if (pts.size() == 1) {
        if (inside(pts[0])) pieces.push_back({pts[0]});
        return pieces;
    }
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        double t0 = 0.0, t1 = 1.0;
        if (!clip_segment(pts[i], pts[i + 1], x0, y0, x1, y1, t0, t1)) {
            flush();
            continue;
        }
        const Vec2 d = pts[i + 1] - pts[i];
        const Vec2 p = t0 > 0.0 ? pts[i] + t0 * d : pts[i];
        const Vec2 q = t1 < 1.0 ? pts[i] + t1 * d : pts[i + 1];
        if (cur.empty() || !(cur.back() == p)) {
            flush();
            cur.push_back(p);
        }
        if (!(cur.back() == q)) cur.push_back(q);
        if (t1 < 1.0) flush();
    }
    flush();
    return pieces;
}

Toolpath model_to_toolpath(const SketchModel& model, const PlotGeometry& plot) {
    validate(model);
    if (!(plot.margin_mm >= 0.0)) throw ValidationError("margin must be >= 0");
    if (!(plot.bed_w_mm > 2.0 * plot.margin_mm) || !(plot.bed_h_mm > 2.0 * plot.margin_mm)) {
        throw ValidationError("bed must be larger than twice the margin on both axes");
    }
    if (!(plot.flatten_tol_mm > 0.0)) throw ValidationError("flatten tolerance must be > 0");

    const double avail_w = plot.bed_w_mm - 2.0 * plot.margin_mm;
    const double avail_h = plot.bed_h_mm - 2.0 * plot.margin_mm;
    const double aspect = static_cast<double>(model.canvas_w) / model.canvas_h;
    double rect_w = avail_w;
    double rect_h = avail_w / aspect;
    if (rect_h > avail_h) {
        rect_h = avail_h;
        rect_w = avail_h * aspect;
    }
    const double ox = plot.margin_mm + 0.5 * (avail_w - rect_w);
    const double oy = plot.margin_mm + 0.5 * (avail_h - rect_h);
    auto to_bed = [&](Vec2 p) { return Vec2{ox + p.x * rect_w, oy + (1.0 - p.y) * rect_h}; };
    auto pin = [&](Vec2 p) {
        return Vec2{std::clamp(p.x, plot.margin_mm, plot.bed_w_mm - plot.margin_mm),
                    std::clamp(p.y, plot.margin_mm, plot.bed_h_mm - plot.margin_mm)};
    };

    Toolpath tp;
    tp.bed_w_mm = plot.bed_w_mm;
    tp.bed_h_mm = plot.bed_h_mm;
    tp.margin_mm = plot.margin_mm;

    for (const auto& prim : model.primitives) {
        std::vector<Vec2> mm;
        for (const auto& p : prim.points) mm.push_back(to_bed(p));
        if (prim.kind == PrimitiveKind::catmull_rom) mm = flatten_catmull_rom(mm, plot.flatten_tol_mm);
        if (prim.kind == PrimitiveKind::point) mm.resize(1);
        for (auto& piece : clip_polyline(mm, ox, oy, ox + rect_w, oy + rect_h)) {
            Stroke s;
            for (const auto& p : piece) s.polyline.push_back(pin(p));
            tp.strokes.push_back(std::move(s));
        }
    }
    return tp;
}

OrderAlgorithm order_algorithm_from_string(std::string_view name) {
    if (name == "identity") return OrderAlgorithm::identity;
    if (name == "greedy_nn") return OrderAlgorithm::greedy_nn;
    if (name == "greedy_2opt") return OrderAlgorithm::greedy_2opt;
    throw ValidationError("unknown order algorithm '" + std::string(name) +
                          "' (valid: identity, greedy_nn, greedy_2opt)");
}

std::string_view to_string(OrderAlgorithm algo) {
    switch (algo) {
        case OrderAlgorithm::identity: return "identity";
        case OrderAlgorithm::greedy_nn: return "greedy_nn";
        case OrderAlgorithm::greedy_2opt: return "greedy_2opt";
    }
    return "unknown";
}

double pen_up_travel(const Toolpath& tp, Vec2 origin) {
    double total = 0.0;
    Vec2 pos = origin;
    for (const auto& s : tp.strokes) {
        total += distance(pos, s.entry());
        pos = s.exit();
    }
    return total;
}

namespace {

struct Visit {
    std::size_t stroke;
    bool reversed;
};

class TourImprover {
public:
    TourImprover(const Toolpath& tp, std::vector<Visit> tour) : tp_(tp), tour_(std::move(tour)) {}

    std::vector<Visit> run(std::size_t move_budget) {
        std::size_t moves = 0;
        bool improved = true;
        while (improved && moves < move_budget) {
            improved = false;
            improved |= reversal_pass(moves, move_budget);
            improved |= relocation_pass(moves, move_budget);
        }
        return tour_;
    }

private:
    static constexpr double kMinGain = 1e-9;
    static constexpr std::size_t kMaxChain = 3;

    Vec2 entry(const Visit& v) const {
        const auto& s = tp_.strokes[v.stroke];
        return v.reversed ? s.polyline.back() : s.polyline.front();
    }
    Vec2 exit(const Visit& v) const {
        const auto& s = tp_.strokes[v.stroke];
        return v.reversed ? s.polyline.front() : s.polyline.back();
    }
    Vec2 exit_before(std::size_t i) const { return i == 0 ? Vec2{0.0, 0.0} : exit(tour_[i - 1]); }

    // Reverse tour_[i..j]; i == j flips a single stroke.
    bool reversal_pass(std::size_t& moves, std::size_t budget) {
        bool any = false;
        const std::size_t n = tour_.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) {
                const Vec2 prev = exit_before(i);
                double delta = distance(prev, exit(tour_[j])) - distance(prev, entry(tour_[i]));
                if (j + 1 < n) {
                    const Vec2 next = entry(tour_[j + 1]);
                    delta += distance(entry(tour_[i]), next) - distance(exit(tour_[j]), next);
                }
                if (delta < -kMinGain) {
                    std::reverse(tour_.begin() + static_cast<std::ptrdiff_t>(i),
                                 tour_.begin() + static_cast<std::ptrdiff_t>(j) + 1);
                    for (std::size_t k = i; k <= j; ++k) tour_[k].reversed = !tour_[k].reversed;
                    any = true;
                    if (++moves >= budget) return true;
                }
            }
        }
        return any;
    }

    // Or-opt: move a run of up to kMaxChain consecutive strokes, in either
    // direction, to another slot.
    bool relocation_pass(std::size_t& moves, std::size_t budget) {
        bool any = false;
        for (std::size_t len = 1; len <= kMaxChain; ++len) {
            for (std::size_t i = 0; i + len <= tour_.size(); ++i) {
                if (try_relocate(i, len)) {
                    any = true;
                    if (++moves >= budget) return true;
                }
            }
        }
        return any;
    }

    bool try_relocate(std::size_t i, std::size_t len) {
        const std::size_t n = tour_.size();
        if (len >= n) return false;
        const std::size_t last = i + len - 1;
        const Vec2 prev = exit_before(i);
        double removal = distance(prev, entry(tour_[i]));
        if (last + 1 < n) {
            const Vec2 next = entry(tour_[last + 1]);
            removal += distance(exit(tour_[last]), next) - distance(prev, next);
        }
        // The tour without the chain has m entries; slot k sits before reduced(k).
        const std::size_t m = n - len;
        auto reduced = [&](std::size_t k) -> const Visit& { return tour_[k < i ? k : k + len]; };
        double best = -kMinGain;
        std::size_t best_slot = m + 1;
        bool best_rev = false;
        for (std::size_t k = 0; k <= m; ++k) {
            const Vec2 before = k == 0 ? Vec2{0.0, 0.0} : exit(reduced(k - 1));
            for (int flip = 0; flip < 2; ++flip) {
                if (k == i && flip == 0) continue;
                const Vec2 in = flip ? exit(tour_[last]) : entry(tour_[i]);
                const Vec2 out = flip ? entry(tour_[i]) : exit(tour_[last]);
                double insert = distance(before, in);
                if (k < m) {
                    const Vec2 after = entry(reduced(k));
                    insert += distance(out, after) - distance(before, after);
                }
                if (insert - removal < best) {
                    best = insert - removal;
                    best_slot = k;
                    best_rev = flip == 1;
                }
            }
        }
        if (best_slot > m) return false;
        std::vector<Visit> chain(tour_.begin() + static_cast<std::ptrdiff_t>(i),
                                 tour_.begin() + static_cast<std::ptrdiff_t>(i + len));
        if (best_rev) {
            std::reverse(chain.begin(), chain.end());
            for (auto& v : chain) v.reversed = !v.reversed;
        }
        tour_.erase(tour_.begin() + static_cast<std::ptrdiff_t>(i), tour_.begin() + static_cast<std::ptrdiff_t>(i + len));
        tour_.insert(tour_.begin() + static_cast<std::ptrdiff_t>(best_slot), chain.begin(), chain.end());
        return true;
    }

    const Toolpath& tp_;
    std::vector<Visit> tour_;
};

// Nearest-neighbour tour from the origin; `first` optionally fixes the opening visit.
std::vector<Visit> greedy_tour(const Toolpath& tp, std::optional<Visit> first = std::nullopt) {
    const std::size_t n = tp.strokes.size();
    std::vector<bool> used(n, false);
    std::vector<Visit> tour;
    Vec2 pos{0.0, 0.0};
    auto take = [&](Visit v) {
        used[v.stroke] = true;
        tour.push_back(v);
        const auto& s = tp.strokes[v.stroke];
        pos = v.reversed ? s.polyline.front() : s.polyline.back();
    };
    if (first) take(*first);
    while (tour.size() < n) {
        double best = 0.0;
        Visit pick{n, false};
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            const auto& s = tp.strokes[i];
            const double df = distance(pos, s.polyline.front());
            const double db = distance(pos, s.polyline.back());
            if (pick.stroke == n || df < best) {
                best = df;
                pick = {i, false};
            }
            if (db < best) {
                best = db;
                pick = {i, true};
            }
        }
        take(pick);
    }
    return tour;
}

double tour_travel(const Toolpath& tp, const std::vector<Visit>& t) {
    double total = 0.0;
    Vec2 pos{0.0, 0.0};
    for (const auto& v : t) {
        const auto& s = tp.strokes[v.stroke];
        total += distance(pos, v.reversed ? s.polyline.back() : s.polyline.front());
        pos = v.reversed ? s.polyline.front() : s.polyline.back();
    }
    return total;
}

// Up to this many strokes, greedy_2opt also restarts the local search from a
// greedy tour opening with every stroke in both directions.
constexpr std::size_t kMultiStartMax = 128;

}  // namespace

Toolpath order_strokes(const Toolpath& tp, OrderAlgorithm algo) {
    for (const auto& s : tp.strokes) {
        if (s.polyline.empty()) throw ValidationError("stroke with no points");
    }
    if (algo == OrderAlgorithm::identity || tp.strokes.size() <= 1) return tp;

    auto tour = greedy_tour(tp);
    // Nearest-neighbour is not guaranteed to beat the incoming order; keep
    // whichever is shorter so the result never travels further than the input.
    std::vector<Visit> incoming;
    for (std::size_t i = 0; i < tp.strokes.size(); ++i) incoming.push_back({i, tp.strokes[i].reversed});
    if (tour_travel(tp, incoming) < tour_travel(tp, tour)) tour = std::move(incoming);

    if (algo == OrderAlgorithm::greedy_2opt) {
        const std::size_t n = tp.strokes.size();
        const std::size_t budget = 50 * n;
        tour = TourImprover(tp, std::move(tour)).run(budget);
        if (n <= kMultiStartMax) {
            double best = tour_travel(tp, tour);
            for (std::size_t s = 0; s < n; ++s) {
                for (bool rev : {false, true}) {
                    auto cand = TourImprover(tp, greedy_tour(tp, Visit{s, rev})).run(budget);
                    const double d = tour_travel(tp, cand);
                    if (d < best - 1e-9) {
                        best = d;
                        tour = std::move(cand);
                    }
                }
            }
        }
    }

    Toolpath out = tp;
    out.strokes.clear();
    for (const auto& v : tour) {
        Stroke s = tp.strokes[v.stroke];
        s.reversed = v.reversed;
        out.strokes.push_back(std::move(s));
    }
    return out;
}

}  // namespace sketchforge
