#include "sketchforge/model_io.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "sketchforge/errors.hpp"

namespace sketchforge {

using nlohmann::json;

json model_to_json(const SketchModel& model) {
    json prims = json::array();
    for (const auto& p : model.primitives) {
        json pts = json::array();
        for (const auto& v : p.points) pts.push_back({v.x, v.y});
        prims.push_back({{"kind", std::string(to_string(p.kind))},
                         {"points", pts},
                         {"sigma", p.sigma},
                         {"colour", p.colour},
                         {"learn_geo", p.learn_geo},
                         {"learn_col", p.learn_col}});
    }
    return {{"canvas", {{"w", model.canvas_w}, {"h", model.canvas_h}}},
            {"background", model.background},
            {"primitives", prims}};
}

SketchModel model_from_json(const json& j) {
    SketchModel m;
    try {
        m.canvas_w = j.at("canvas").at("w").get<int>();
        m.canvas_h = j.at("canvas").at("h").get<int>();
        if (j.contains("background")) m.background = j.at("background").get<std::vector<double>>();
        for (const auto& jp : j.at("primitives")) {
            Primitive p;
            p.kind = primitive_kind_from_string(jp.at("kind").get<std::string>());
            for (const auto& xy : jp.at("points")) {
                if (!xy.is_array() || xy.size() != 2) throw ValidationError("point entries must be [x, y]");
                p.points.push_back({xy[0].get<double>(), xy[1].get<double>()});
            }
            p.sigma = jp.value("sigma", 1.0);
            p.colour = jp.at("colour").get<std::vector<double>>();
            p.learn_geo = jp.value("learn_geo", true);
            p.learn_col = jp.value("learn_col", false);
            m.primitives.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed model JSON: ") + e.what());
    }
    if (!j.contains("background")) m.background.assign(m.primitives.empty() ? 1 : m.primitives[0].colour.size(), 1.0);
    validate(m);
    return m;
}

std::string dump_model(const SketchModel& model) { return model_to_json(model).dump(1) + "\n"; }

void save_model(const SketchModel& model, const std::filesystem::path& path) {
    write_text_file(path, dump_model(model));
}

SketchModel load_model(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError("'" + path.string() + "': " + e.what());
    }
    return model_from_json(j);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace sketchforge
