#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace sketchforge {

/// Dense row-major H x W x C image. Values live in [0, 1]; pixel (row, col)
/// has its centre at continuous coordinates (col + 0.5, row + 0.5).
struct Canvas {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    Canvas() = default;
    Canvas(int w, int h, int c, double fill = 0.0);

    std::size_t size() const { return data.size(); }
    std::size_t index(int row, int col, int ch = 0) const {
        return (static_cast<std::size_t>(row) * width + col) * channels + ch;
    }
    double& at(int row, int col, int ch = 0) { return data[index(row, col, ch)]; }
    double at(int row, int col, int ch = 0) const { return data[index(row, col, ch)]; }

    bool same_shape(const Canvas& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }
};

enum class ColourMode { grayscale, rgb };

struct TargetImage {
    Canvas canvas;
    std::string source_path;
    ColourMode colour_mode = ColourMode::grayscale;
};

/// Rec. 709 luma.
inline double luma709(double r, double g, double b) { return 0.2126 * r + 0.7152 * g + 0.0722 * b; }

/// Reads PNG or binary PPM (P6). Throws IoError, FormatError or ValidationError.
TargetImage load_image(const std::filesystem::path& path, ColourMode mode);

/// Parses an in-memory P6 buffer; the result has 3 channels.
Canvas decode_ppm(const std::vector<unsigned char>& bytes);

/// 8-bit P6 encoding; grayscale canvases are replicated to RGB. Values are
/// quantised with round(v * 255).
std::vector<unsigned char> encode_ppm(const Canvas& img);
void save_ppm(const Canvas& img, const std::filesystem::path& path);

Canvas to_grayscale(const Canvas& rgb);

/// Centre-aligned bilinear resampling with edge clamping.
Canvas resize_bilinear(const Canvas& img, int new_w, int new_h);

/// 2x2 box mean; an odd trailing row or column averages only the pixels that
/// exist, so the output is ceil(w/2) x ceil(h/2).
Canvas downsample_avg2(const Canvas& img);

/// Adjoint of downsample_avg2: spreads each output gradient evenly over the
/// pixels of its block.
Canvas downsample_avg2_backward(const Canvas& grad_out, int in_w, int in_h);

void clamp_unit(Canvas& img);

}  // namespace sketchforge
