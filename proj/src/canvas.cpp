#include "sketchforge/canvas.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include <png.h>

#include "sketchforge/errors.hpp"

namespace sketchforge {

Canvas::Canvas(int w, int h, int c, double fill) : width(w), height(h), channels(c) {
    if (w < 1 || h < 1) throw ValidationError("canvas dimensions must be >= 1");
    if (c != 1 && c != 3) throw ValidationError("canvas must have 1 or 3 channels");
    data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Canvas decode_png(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw FormatError("'" + path.string() + "': " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    if (image.width == 0 || image.height == 0) {
        png_image_free(&image);
        throw ValidationError("'" + path.string() + "' has a zero dimension");
    }
    std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        throw FormatError("'" + path.string() + "': " + image.message);
    }
    Canvas out(static_cast<int>(image.width), static_cast<int>(image.height), 3);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = pixels[i] / 255.0;
    return out;
}

}  // namespace

Canvas decode_ppm(const std::vector<unsigned char>& bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("malformed PPM header");
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            if (v > (1L << 24)) throw FormatError("PPM header value out of range");
        }
        return v;
    };

    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (P6)");
    pos = 2;
    const long w = read_int();
    const long h = read_int();
    const long maxval = read_int();
    if (w == 0 || h == 0) throw ValidationError("PPM has a zero dimension");
    if (maxval != 255) throw FormatError("only 8-bit PPM (maxval 255) is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed PPM header");
    ++pos;
    const std::size_t n = static_cast<std::size_t>(w) * h * 3;
    if (bytes.size() - pos < n) throw FormatError("truncated PPM payload");

    Canvas out(static_cast<int>(w), static_cast<int>(h), 3);
    for (std::size_t i = 0; i < n; ++i) out.data[i] = bytes[pos + i] / 255.0;
    return out;
}

TargetImage load_image(const std::filesystem::path& path, ColourMode mode) {
    const auto bytes = read_file(path);
    static constexpr unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

    Canvas rgb;
    if (bytes.size() >= 8 && std::equal(std::begin(png_sig), std::end(png_sig), bytes.begin())) {
        rgb = decode_png(path, bytes);
    } else if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
        try {
            rgb = decode_ppm(bytes);
        } catch (const FormatError& e) {
            throw FormatError("'" + path.string() + "': " + e.what());
        }
    } else {
        throw FormatError("'" + path.string() + "': unsupported image format (expected PNG or P6 PPM)");
    }

    TargetImage t;
    t.source_path = path.string();
    t.colour_mode = mode;
    t.canvas = mode == ColourMode::grayscale ? to_grayscale(rgb) : std::move(rgb);
    return t;
}

Canvas to_grayscale(const Canvas& rgb) {
    if (rgb.channels == 1) return rgb;
    Canvas out(rgb.width, rgb.height, 1);
    for (int r = 0; r < rgb.height; ++r) {
        for (int c = 0; c < rgb.width; ++c) {
            out.at(r, c) = std::clamp(luma709(rgb.at(r, c, 0), rgb.at(r, c, 1), rgb.at(r, c, 2)), 0.0, 1.0);
        }
    }
    return out;
}

std::vector<unsigned char> encode_ppm(const Canvas& img) {
    const std::string header =
        "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    out.reserve(out.size() + static_cast<std::size_t>(img.width) * img.height * 3);
    auto quant = [](double v) {
        return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            for (int ch = 0; ch < 3; ++ch) out.push_back(quant(img.at(r, c, img.channels == 3 ? ch : 0)));
        }
    }
    return out;
}

void save_ppm(const Canvas& img, const std::filesystem::path& path) {
    const auto bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Canvas resize_bilinear(const Canvas& img, int new_w, int new_h) {
    if (new_w < 1 || new_h < 1) throw ValidationError("resize target must be >= 1x1");
    if (new_w == img.width && new_h == img.height) return img;

    Canvas out(new_w, new_h, img.channels);
    const double sx = static_cast<double>(img.width) / new_w;
    const double sy = static_cast<double>(img.height) / new_h;
    for (int r = 0; r < new_h; ++r) {
        const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int c = 0; c < new_w; ++c) {
            const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < img.channels; ++ch) {
                const double top = img.at(y0, x0, ch) * (1.0 - wx) + img.at(y0, x1, ch) * wx;
                const double bot = img.at(y1, x0, ch) * (1.0 - wx) + img.at(y1, x1, ch) * wx;
                out.at(r, c, ch) = std::clamp(top * (1.0 - wy) + bot * wy, 0.0, 1.0);
            }
        }
    }
    return out;
}

Canvas downsample_avg2(const Canvas& img) {
    if (img.width < 2 || img.height < 2) throw ValidationError("downsample_avg2 needs an image of at least 2x2");
    const int ow = (img.width + 1) / 2;
    const int oh = (img.height + 1) / 2;
    Canvas out(ow, oh, img.channels);
    for (int r = 0; r < oh; ++r) {
        const int r1 = std::min(2 * r + 1, img.height - 1);
        for (int c = 0; c < ow; ++c) {
            const int c1 = std::min(2 * c + 1, img.width - 1);
            const double count = static_cast<double>((r1 - 2 * r + 1) * (c1 - 2 * c + 1));
            for (int ch = 0; ch < img.channels; ++ch) {
                double sum = 0.0;
                for (int y = 2 * r; y <= r1; ++y) {
                    for (int x = 2 * c; x <= c1; ++x) sum += img.at(y, x, ch);
                }
                out.at(r, c, ch) = sum / count;
            }
        }
    }
    return out;
}

Canvas downsample_avg2_backward(const Canvas& grad_out, int in_w, int in_h) {
    Canvas g(in_w, in_h, grad_out.channels);
    for (int y = 0; y < in_h; ++y) {
        const int r = y / 2;
        const int rows = std::min(2 * r + 1, in_h - 1) - 2 * r + 1;
        for (int x = 0; x < in_w; ++x) {
            const int c = x / 2;
            const int cols = std::min(2 * c + 1, in_w - 1) - 2 * c + 1;
            for (int ch = 0; ch < g.channels; ++ch) g.at(y, x, ch) = grad_out.at(r, c, ch) / (rows * cols);
        }
    }
    return g;
}

void clamp_unit(Canvas& img) {
    for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace sketchforge
