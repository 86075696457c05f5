#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sketchforge/canvas.hpp"
#include "sketchforge/parallel.hpp"

namespace sketchforge {

/// 3x3 convolution followed by ReLU. Weights are row-major (out, in, ky, kx).
struct ConvLayer {
    std::uint32_t out_ch = 0;
    std::uint32_t in_ch = 0;
    std::uint32_t stride = 1;
    std::vector<float> weights;
    std::vector<float> biases;

    float weight(std::uint32_t o, std::uint32_t i, int ky, int kx) const {
        return weights[((static_cast<std::size_t>(o) * in_ch + i) * 3 + ky) * 3 + kx];
    }
};

struct EncoderNet {
    std::vector<ConvLayer> layers;
    std::vector<std::uint32_t> taps;  // strictly increasing layer indices
    std::array<float, 3> input_mean{0.0f, 0.0f, 0.0f};
    std::array<float, 3> input_std{1.0f, 1.0f, 1.0f};

    int in_channels() const { return layers.empty() ? 0 : static_cast<int>(layers.front().in_ch); }
};

/// Channel chaining, tap ordering, kernel shape and finiteness.
void validate(const EncoderNet& net);

/// h x w x c activation map, channel-fastest.
struct Tensor {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int h_, int w_, int c_) : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, 0.0) {}
    double& at(int y, int x, int ch) { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
    bool same_shape(const Tensor& o) const { return h == o.h && w == o.w && c == o.c; }
};

struct Feature {
    std::uint32_t layer = 0;
    Tensor act;
};
using FeatureSet = std::vector<Feature>;  // one entry per tap, tap order

/// Activations retained for the backward pass. Refers to the network it was
/// produced from, which must outlive it.
struct EncoderTape {
    const EncoderNet* net = nullptr;
    ExecPolicy exec;
    int image_w = 0;
    int image_h = 0;
    std::vector<Tensor> inputs;   // input of each evaluated layer (inputs[0] is normalised image)
    std::vector<Tensor> preacts;  // pre-ReLU output of each evaluated layer
};

struct EncoderOutput {
    FeatureSet features;
    EncoderTape tape;
};

EncoderNet load_skw1(const std::filesystem::path& path);
EncoderNet parse_skw1(const std::vector<unsigned char>& bytes);
void write_skw1(const EncoderNet& net, const std::filesystem::path& path);
std::vector<unsigned char> serialize_skw1(const EncoderNet& net);

/// He-normal weights (std = sqrt(2 / (9 * in_ch))) and zero biases drawn
/// from the library PRNG. Empty strides means 1 for the first layer and 2
/// after; every layer is tapped. Inputs are normalised with mean 0.5, std 0.5.
EncoderNet random_encoder(std::uint64_t seed, int in_channels, const std::vector<int>& widths,
                          const std::vector<int>& strides = {});

/// Reflection-padded conv + ReLU stack, evaluated up to the last tap.
EncoderOutput forward(const EncoderNet& net, const Canvas& img, const ExecPolicy& exec = {});

/// dL/d(input image) given dL/d(features). Zero-sized gradients are not
/// allowed; pass zero tensors for taps without loss.
Canvas backward(const EncoderTape& tape, const FeatureSet& dL_dfeatures);

/// Output size of one 3x3 conv with padding 1.
inline int conv_out_size(int n, int stride) { return (n - 1) / stride + 1; }

}  // namespace sketchforge
