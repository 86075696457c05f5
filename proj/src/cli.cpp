#include "sketchforge/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "sketchforge/canvas.hpp"
#include "sketchforge/encoder.hpp"
#include "sketchforge/errors.hpp"
#include "sketchforge/gcode.hpp"
#include "sketchforge/losses.hpp"
#include "sketchforge/model_io.hpp"
#include "sketchforge/optimizer.hpp"
#include "sketchforge/rasterizer.hpp"
#include "sketchforge/svg.hpp"
#include "sketchforge/toolpath.hpp"

namespace sketchforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json manifest_to_json(const FitOptions& o) {
    return {{"version", kVersion},
            {"image", o.image},
            {"colour", o.colour},
            {"preset", o.preset},
            {"counts", {{"points", o.points}, {"lines", o.lines}, {"splines", o.splines}}},
            {"init", o.init},
            {"fixed_colour", o.fixed_colour},
            {"loss",
             {{"kind", o.loss},
              {"pyramid_levels", o.pyramid_levels},
              {"encoder", o.encoder},
              {"taps", o.taps},
              {"feature_weights", o.feature_weights},
              {"lpips_normalise", o.lpips_normalise},
              {"mse_weight", o.mse_weight}}},
            {"optimiser",
             {{"iterations", o.iters},
              {"lr", o.lr},
              {"adam_beta1", 0.9},
              {"adam_beta2", 0.999},
              {"adam_eps", 1e-8},
              {"sigma_start_px", o.sigma_start},
              {"sigma_end_px", o.sigma_end},
              {"seed", o.seed},
              {"snapshot_every", o.snapshot_every}}},
            {"raster", {{"width", o.width}, {"height", o.height}, {"compose", o.compose}}},
            {"out_dir", o.out_dir},
            {"deterministic", o.deterministic},
            {"threads", o.threads}};
}

FitOptions manifest_from_json(const nlohmann::json& j) {
    FitOptions o;
    try {
        o.image = j.at("image").get<std::string>();
        o.colour = j.at("colour").get<std::string>();
        o.preset = j.value("preset", "");
        o.points = j.at("counts").at("points").get<int>();
        o.lines = j.at("counts").at("lines").get<int>();
        o.splines = j.at("counts").at("splines").get<int>();
        o.init = j.at("init").get<std::string>();
        o.fixed_colour = j.value("fixed_colour", false);
        const auto& l = j.at("loss");
        o.loss = l.at("kind").get<std::string>();
        o.pyramid_levels = l.at("pyramid_levels").get<int>();
        o.encoder = l.at("encoder").get<std::string>();
        o.taps = l.at("taps").get<std::vector<int>>();
        o.feature_weights = l.at("feature_weights").get<std::vector<double>>();
        o.lpips_normalise = l.at("lpips_normalise").get<bool>();
        o.mse_weight = l.at("mse_weight").get<double>();
        const auto& op = j.at("optimiser");
        o.iters = op.at("iterations").get<int>();
        o.lr = op.at("lr").get<double>();
        o.sigma_start = op.at("sigma_start_px").get<double>();
        o.sigma_end = op.at("sigma_end_px").get<double>();
        o.seed = op.at("seed").get<std::uint64_t>();
        o.snapshot_every = op.at("snapshot_every").get<int>();
        o.width = j.at("raster").at("width").get<int>();
        o.height = j.at("raster").at("height").get<int>();
        o.compose = j.at("raster").at("compose").get<std::string>();
        o.out_dir = j.at("out_dir").get<std::string>();
        o.deterministic = j.at("deterministic").get<bool>();
        o.threads = j.value("threads", 0);
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
    return o;
}

namespace {

std::pair<int, int> parse_dims(const std::string& s, const char* what) {
    int w = 0, h = 0;
    char x = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%d%c%d%c", &w, &x, &h, &tail) != 3 || (x != 'x' && x != 'X') || w < 1 || h < 1) {
        throw ValidationError(std::string(what) + " must look like WxH with positive integers, got '" + s + "'");
    }
    return {w, h};
}

std::pair<double, double> parse_bed(const std::string& s) {
    double w = 0, h = 0;
    char x = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%lf%c%lf%c", &w, &x, &h, &tail) != 3 || (x != 'x' && x != 'X')) {
        throw ValidationError("--bed must look like WxH in millimetres, got '" + s + "'");
    }
    return {w, h};
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SKETCHFORGE_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

Compose resolve_compose(const std::string& name, int channels) {
    if (name == "darken_min") return Compose::darken_min;
    if (name == "soft_over") return Compose::soft_over;
    if (name == "auto") return channels == 1 ? Compose::darken_min : Compose::soft_over;
    throw ValidationError("unknown composition '" + name + "' (valid: auto, darken_min, soft_over)");
}

std::string compose_name(Compose c) { return c == Compose::darken_min ? "darken_min" : "soft_over"; }

InitKind parse_init(const std::string& s) {
    if (s == "random_uniform") return InitKind::random_uniform;
    if (s == "grid") return InitKind::grid;
    if (s == "saliency") return InitKind::saliency;
    throw ValidationError("unknown init '" + s + "' (valid: random_uniform, grid, saliency)");
}

void apply_preset(FitOptions& o) {
    if (o.preset.empty()) return;
    int p = 0, l = 0, s = 0;
    if (o.preset == "paper-points") {
        p = 2000;
    } else if (o.preset == "paper-lines") {
        l = 1000;
    } else if (o.preset == "paper-splines") {
        s = 500;
    } else {
        throw ValidationError("unknown preset '" + o.preset + "' (valid: paper-points, paper-lines, paper-splines)");
    }
    if (o.points == 0 && o.lines == 0 && o.splines == 0) {
        o.points = p;
        o.lines = l;
        o.splines = s;
    }
}

std::shared_ptr<const EncoderNet> make_encoder(const FitOptions& o, int channels) {
    EncoderNet net;
    if (o.encoder.rfind("random:", 0) == 0) {
        const std::string seed_text = o.encoder.substr(7);
        char* end = nullptr;
        const unsigned long long seed = std::strtoull(seed_text.c_str(), &end, 10);
        if (seed_text.empty() || *end != '\0') throw ValidationError("--encoder random:SEED needs an integer seed");
        net = random_encoder(seed, channels, {16, 32, 64, 64}, {1, 2, 2, 2});
    } else {
        net = load_skw1(o.encoder);
    }
    if (!o.taps.empty()) {
        net.taps.clear();
        for (int t : o.taps) {
            if (t < 0) throw ValidationError("tap indices must be >= 0");
            net.taps.push_back(static_cast<std::uint32_t>(t));
        }
        validate(net);
    }
    return std::make_shared<const EncoderNet>(std::move(net));
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

int cmd_fit(FitOptions o, std::ostream& out) {
    apply_preset(o);
    if (o.image.empty()) throw ValidationError("fit needs --image");
    if (o.colour != "gray" && o.colour != "rgb") throw ValidationError("--colour must be gray or rgb");
    if (o.loss != "mse" && o.loss != "pyramid" && o.loss != "feature") {
        throw ValidationError("--loss must be one of mse, pyramid, feature");
    }

    const ColourMode mode = o.colour == "rgb" ? ColourMode::rgb : ColourMode::grayscale;
    TargetImage target = load_image(o.image, mode);
    target.canvas = resize_bilinear(target.canvas, o.width, o.height);
    const int channels = target.canvas.channels;
    const Compose compose = resolve_compose(o.compose, channels);
    o.compose = compose_name(compose);

    OptimConfig cfg;
    cfg.iterations = o.iters;
    cfg.lr = o.lr;
    cfg.sigma = {o.sigma_start, o.sigma_end};
    cfg.seed = o.seed;
    cfg.init = parse_init(o.init);
    cfg.learn_colour = !o.fixed_colour;
    cfg.compose = compose;
    cfg.exec = {resolve_threads(o.threads), o.deterministic};
    cfg.snapshot_every = o.snapshot_every;
    cfg.snapshot_dir = o.out_dir;
    validate(cfg);

    LossSpec spec;
    spec.kind = o.loss == "mse" ? LossKind::mse : o.loss == "pyramid" ? LossKind::pyramid_mse : LossKind::feature;
    spec.pyramid_levels = o.pyramid_levels;
    spec.feature_weights = o.feature_weights;
    spec.lpips_normalise = o.lpips_normalise;
    spec.mse_weight = o.mse_weight;
    if (spec.kind == LossKind::feature) spec.feature_encoder = make_encoder(o, channels);

    const SketchModel initial = init_model(target, o.points, o.lines, o.splines, cfg);

    const fs::path dir = o.out_dir;
    fs::create_directories(dir);
    write_text_file(dir / "manifest.json", manifest_to_json(o).dump(1) + "\n");

    out << "fitting " << initial.primitives.size() << " primitives to " << o.image << " at " << o.width << "x"
        << o.height << " (" << o.loss << " loss, " << o.iters << " iterations)\n";
    const RunReport report = optimise(target, initial, spec, cfg);

    save_model(report.final_model, dir / "model.json");
    RasterConfig rc = raster_config_for(cfg, cfg.sigma.end_px);
    save_ppm(render(report.final_model, rc), dir / "final.ppm");
    write_text_file(dir / "final.svg", model_to_svg(report.final_model, 200.0, 200.0 * o.height / o.width));
    std::string csv = "iteration,loss\n";
    for (const auto& [it, loss] : report.loss_history) csv += std::to_string(it) + "," + format_double(loss) + "\n";
    write_text_file(dir / "loss.csv", csv);

    out << "initial loss " << report.loss_history.front().second << ", final loss " << report.final_loss << " ("
        << report.wall_time_s << " s)\n";
    out << "wrote " << (dir / "model.json").string() << "\n";
    return 0;
}

struct PlotOptions {
    std::string model;
    std::string bed = "200x200";
    double margin = 10.0;
    double flatten_tol = 0.1;
    std::string order = "greedy_2opt";
    GcodeOptions gcode;
    std::string out;
    std::string svg;
};

int cmd_plot(const PlotOptions& o, std::ostream& out) {
    const OrderAlgorithm algo = order_algorithm_from_string(o.order);
    const auto [bw, bh] = parse_bed(o.bed);
    const SketchModel model = load_model(o.model);
    const Toolpath raw = model_to_toolpath(model, {bw, bh, o.margin, o.flatten_tol});
    const Toolpath ordered = order_strokes(raw, algo);
    const GcodeProgram prog = toolpath_to_gcode(ordered, o.gcode);

    fs::path target = o.out.empty() ? fs::path(o.model).replace_extension(".gcode") : fs::path(o.out);
    write_text_file(target, prog.text());
    if (!o.svg.empty()) write_text_file(o.svg, toolpath_to_svg(ordered));

    char line[160];
    std::snprintf(line, sizeof line, "pen-up travel before ordering: %.3f mm\npen-up travel after %s: %.3f mm\n",
                  pen_up_travel(raw), std::string(to_string(algo)).c_str(), pen_up_travel(ordered));
    out << line;
    std::snprintf(line, sizeof line, "%zu strokes, pen-down %.3f mm, %zu commands -> %s\n", ordered.strokes.size(),
                  prog.stats.pen_down_mm, prog.stats.command_count, target.string().c_str());
    out << line;
    return 0;
}

struct RenderOptions {
    std::string model;
    std::string resolution;
    double sigma = 0.0;
    std::string compose = "auto";
    std::string out;
};

int cmd_render(const RenderOptions& o, std::ostream& out) {
    SketchModel model = load_model(o.model);
    if (model.primitives.empty()) throw ValidationError("model '" + o.model + "' has no primitives");
    if (!o.resolution.empty()) {
        const auto [w, h] = parse_dims(o.resolution, "--resolution");
        model.canvas_w = w;
        model.canvas_h = h;
    }
    RasterConfig rc;
    rc.sigma_px = o.sigma > 0.0 ? o.sigma : model.primitives.front().sigma;
    rc.compose = resolve_compose(o.compose, model.channels());
    const fs::path prefix = o.out.empty() ? fs::path(o.model).replace_extension("") : fs::path(o.out);
    save_ppm(render(model, rc), prefix.string() + ".ppm");
    set_sigma(model, rc.sigma_px);
    write_text_file(prefix.string() + ".svg",
                    model_to_svg(model, 200.0, 200.0 * model.canvas_h / model.canvas_w));
    out << "wrote " << prefix.string() << ".ppm and .svg\n";
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fit stroke primitives to an image and export plotter-ready SVG and G-code."};
    app.name("sketchforge");
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    FitOptions fo;
    std::string manifest_path, resolution = "256x256";
    auto* fit = app.add_subcommand("fit", "optimise primitives against an image");
    fit->add_option("--image", fo.image, "target image (PNG or binary PPM)");
    fit->add_option("--manifest", manifest_path, "replay a previous run's manifest.json");
    fit->add_option("--colour", fo.colour, "gray (Rec. 709 luma) or rgb")->capture_default_str();
    fit->add_option("--preset", fo.preset, "paper-points (2000 points), paper-lines (1000 lines), paper-splines (500 curves)");
    fit->add_option("--points", fo.points, "number of point primitives");
    fit->add_option("--lines", fo.lines, "number of straight segments");
    fit->add_option("--splines", fo.splines, "number of Catmull-Rom curves");
    fit->add_option("--init", fo.init, "random_uniform, grid or saliency")->capture_default_str();
    fit->add_flag("--fixed-colour", fo.fixed_colour, "keep sampled colours fixed");
    fit->add_option("--loss", fo.loss, "mse, pyramid or feature")->capture_default_str();
    fit->add_option("--pyramid-levels", fo.pyramid_levels)->capture_default_str();
    fit->add_option("--encoder", fo.encoder, "SKW1 weight file or random:SEED")->capture_default_str();
    fit->add_option("--taps", fo.taps, "encoder layers used as features, e.g. 0,2,3")->delimiter(',');
    fit->add_option("--feature-weights", fo.feature_weights, "per-tap weights")->delimiter(',');
    fit->add_flag("!--no-lpips-normalise", fo.lpips_normalise, "compare raw instead of unit-normalised features");
    fit->add_option("--mse-weight", fo.mse_weight, "add a weighted pixel MSE term")->capture_default_str();
    fit->add_option("--iters", fo.iters)->capture_default_str();
    fit->add_option("--lr", fo.lr)->capture_default_str();
    fit->add_option("--seed", fo.seed)->capture_default_str();
    auto* res_opt = fit->add_option("--resolution", resolution, "working resolution WxH")->capture_default_str();
    fit->add_option("--sigma-start", fo.sigma_start)->capture_default_str();
    fit->add_option("--sigma-end", fo.sigma_end)->capture_default_str();
    fit->add_option("--compose", fo.compose, "auto, darken_min or soft_over")->capture_default_str();
    fit->add_option("--snapshot-every", fo.snapshot_every)->capture_default_str();
    auto* out_opt = fit->add_option("--out-dir", fo.out_dir)->capture_default_str();
    auto* det_opt = fit->add_flag("--deterministic", fo.deterministic, "serial reductions, bit-exact replay");
    auto* thr_opt = fit->add_option("--threads", fo.threads, "worker threads (default: SKETCHFORGE_THREADS or all cores)");

    PlotOptions po;
    auto* plot = app.add_subcommand("plot", "compile a model into ordered G-code");
    plot->add_option("model", po.model, "model JSON")->required();
    plot->add_option("--bed", po.bed, "bed size WxH in mm")->capture_default_str();
    plot->add_option("--margin", po.margin)->capture_default_str();
    plot->add_option("--flatten-tol", po.flatten_tol, "max curve deviation in mm")->capture_default_str();
    plot->add_option("--order", po.order, "identity, greedy_nn or greedy_2opt")->capture_default_str();
    plot->add_option("--feed-draw", po.gcode.feed_draw_mm_min)->capture_default_str();
    plot->add_option("--feed-travel", po.gcode.feed_travel_mm_min)->capture_default_str();
    plot->add_option("--pen-up-z", po.gcode.pen_up_z)->capture_default_str();
    plot->add_option("--pen-down-z", po.gcode.pen_down_z)->capture_default_str();
    plot->add_option("--out,-o", po.out, "G-code path (default: model path with .gcode)");
    plot->add_option("--svg", po.svg, "also write the ordered toolpath as SVG");

    RenderOptions ro;
    auto* rend = app.add_subcommand("render", "rasterise a saved model to PPM and SVG");
    rend->add_option("model", ro.model, "model JSON")->required();
    rend->add_option("--resolution", ro.resolution, "WxH (default: the model canvas)");
    rend->add_option("--sigma", ro.sigma, "stroke softness in px (default: the model's fitted width)");
    rend->add_option("--compose", ro.compose)->capture_default_str();
    rend->add_option("--out,-o", ro.out, "output prefix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (fit->parsed()) {
            FitOptions opts = fo;
            if (!manifest_path.empty()) {
                opts = manifest_from_json(json::parse(read_text_file(manifest_path)));
                if (out_opt->count() > 0) opts.out_dir = fo.out_dir;
                if (det_opt->count() > 0) opts.deterministic = true;
                if (thr_opt->count() > 0) opts.threads = fo.threads;
            } else {
                const auto [w, h] = parse_dims(resolution, "--resolution");
                opts.width = w;
                opts.height = h;
            }
            (void)res_opt;
            return cmd_fit(opts, out);
        }
        if (plot->parsed()) return cmd_plot(po, out);
        if (rend->parsed()) return cmd_render(ro, out);
    } catch (const NumericError& e) {
        err << "numeric abort: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"sketchforge"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace sketchforge::cli
