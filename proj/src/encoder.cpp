#include "sketchforge/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sketchforge/errors.hpp"
#include "sketchforge/rng.hpp"

namespace sketchforge {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'W', '1'};
constexpr std::uint32_t kVersion = 1;

int reflect(int i, int n) {
    if (n == 1) return 0;
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

// Weights reordered to (out, ky, kx, in) so a gathered HWC patch is a dot product.
std::vector<double> patch_major_weights(const ConvLayer& L) {
    std::vector<double> w(static_cast<std::size_t>(L.out_ch) * 9 * L.in_ch);
    for (std::uint32_t o = 0; o < L.out_ch; ++o)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
                for (std::uint32_t i = 0; i < L.in_ch; ++i)
                    w[((static_cast<std::size_t>(o) * 3 + ky) * 3 + kx) * L.in_ch + i] = L.weight(o, i, ky, kx);
    return w;
}

Tensor conv_forward(const ConvLayer& L, const Tensor& in, const ExecPolicy& exec) {
    const int s = static_cast<int>(L.stride);
    Tensor out(conv_out_size(in.h, s), conv_out_size(in.w, s), static_cast<int>(L.out_ch));
    const auto w = patch_major_weights(L);
    const std::size_t patch_len = 9 * static_cast<std::size_t>(L.in_ch);

    parallel_chunks(static_cast<std::size_t>(out.h), exec.threads, [&](std::size_t, std::size_t b, std::size_t e) {
        std::vector<double> patch(patch_len);
        for (int oy = static_cast<int>(b); oy < static_cast<int>(e); ++oy) {
            for (int ox = 0; ox < out.w; ++ox) {
                std::size_t k = 0;
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = reflect(oy * s + ky - 1, in.h);
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = reflect(ox * s + kx - 1, in.w);
                        const double* src = &in.data[(static_cast<std::size_t>(iy) * in.w + ix) * in.c];
                        std::copy(src, src + in.c, patch.begin() + static_cast<std::ptrdiff_t>(k));
                        k += static_cast<std::size_t>(in.c);
                    }
                }
                double* dst = &out.data[(static_cast<std::size_t>(oy) * out.w + ox) * out.c];
                for (std::uint32_t o = 0; o < L.out_ch; ++o) {
                    const double* wo = &w[o * patch_len];
                    double acc = L.biases[o];
                    for (std::size_t j = 0; j < patch_len; ++j) acc += wo[j] * patch[j];
                    dst[o] = acc;
                }
            }
        }
    });
    return out;
}

// For each input index, the (output index, kernel tap) pairs that read it.
std::vector<std::vector<std::pair<int, int>>> readers(int in_n, int out_n, int stride) {
    std::vector<std::vector<std::pair<int, int>>> r(static_cast<std::size_t>(in_n));
    for (int o = 0; o < out_n; ++o)
        for (int k = 0; k < 3; ++k) r[static_cast<std::size_t>(reflect(o * stride + k - 1, in_n))].push_back({o, k});
    return r;
}

Tensor conv_backward_input(const ConvLayer& L, const Tensor& grad_pre, int in_h, int in_w, const ExecPolicy& exec) {
    const int s = static_cast<int>(L.stride);
    Tensor gin(in_h, in_w, static_cast<int>(L.in_ch));
    const auto ry = readers(in_h, grad_pre.h, s);
    const auto rx = readers(in_w, grad_pre.w, s);
    // (ky, kx, in, out) so each tap is an in x out block.
    std::vector<double> wt(9 * static_cast<std::size_t>(L.in_ch) * L.out_ch);
    for (std::uint32_t o = 0; o < L.out_ch; ++o)
        for (std::uint32_t i = 0; i < L.in_ch; ++i)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                    wt[((static_cast<std::size_t>(ky) * 3 + kx) * L.in_ch + i) * L.out_ch + o] = L.weight(o, i, ky, kx);

    parallel_chunks(static_cast<std::size_t>(in_h), exec.threads, [&](std::size_t, std::size_t b, std::size_t e) {
        for (int iy = static_cast<int>(b); iy < static_cast<int>(e); ++iy) {
            for (int ix = 0; ix < in_w; ++ix) {
                double* dst = &gin.data[(static_cast<std::size_t>(iy) * in_w + ix) * gin.c];
                for (const auto& [oy, ky] : ry[static_cast<std::size_t>(iy)]) {
                    for (const auto& [ox, kx] : rx[static_cast<std::size_t>(ix)]) {
                        const double* g = &grad_pre.data[(static_cast<std::size_t>(oy) * grad_pre.w + ox) * grad_pre.c];
                        const double* block = &wt[(static_cast<std::size_t>(ky) * 3 + kx) * L.in_ch * L.out_ch];
                        for (std::uint32_t i = 0; i < L.in_ch; ++i) {
                            const double* wrow = block + static_cast<std::size_t>(i) * L.out_ch;
                            double acc = 0.0;
                            for (std::uint32_t o = 0; o < L.out_ch; ++o) acc += wrow[o] * g[o];
                            dst[i] += acc;
                        }
                    }
                }
            }
        }
    });
    return gin;
}

class ByteReader {
public:
    explicit ByteReader(const std::vector<unsigned char>& b) : bytes_(b) {}

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("truncated SKW1 file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    const unsigned char* cursor() const { return bytes_.data() + pos_; }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t pos_ = 0;
};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_f32(std::vector<unsigned char>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

}  // namespace

void validate(const EncoderNet& net) {
    if (net.layers.empty()) throw ValidationError("encoder has no layers");
    if (net.taps.empty()) throw ValidationError("encoder has no feature taps");
    for (std::size_t i = 0; i < net.taps.size(); ++i) {
        if (net.taps[i] >= net.layers.size()) throw ValidationError("tap index " + std::to_string(net.taps[i]) + " out of range");
        if (i > 0 && net.taps[i] <= net.taps[i - 1]) throw ValidationError("taps must be strictly increasing");
    }
    for (int c = 0; c < 3; ++c) {
        if (!std::isfinite(net.input_mean[c]) || !std::isfinite(net.input_std[c]) || !(net.input_std[c] > 0.0f)) {
            throw ValidationError("input normalisation must be finite with std > 0");
        }
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& L = net.layers[l];
        const std::string where = "layer " + std::to_string(l) + ": ";
        if (L.out_ch == 0 || L.in_ch == 0) throw ValidationError(where + "zero channels");
        if (L.stride != 1 && L.stride != 2) throw ValidationError(where + "stride must be 1 or 2");
        if (l > 0 && L.in_ch != net.layers[l - 1].out_ch) {
            throw ValidationError(where + "input channels " + std::to_string(L.in_ch) + " do not match previous output " +
                                  std::to_string(net.layers[l - 1].out_ch));
        }
        if (L.weights.size() != static_cast<std::size_t>(L.out_ch) * L.in_ch * 9) throw ValidationError(where + "weight count");
        if (L.biases.size() != L.out_ch) throw ValidationError(where + "bias count");
        for (float w : L.weights) {
            if (!std::isfinite(w)) throw ValidationError(where + "non-finite weight");
        }
        for (float b : L.biases) {
            if (!std::isfinite(b)) throw ValidationError(where + "non-finite bias");
        }
    }
}

EncoderNet parse_skw1(const std::vector<unsigned char>& bytes) {
    ByteReader in(bytes);
    in.need(4);
    if (std::memcmp(in.cursor(), kMagic, 4) != 0) throw FormatError("bad SKW1 magic");
    in.skip(4);
    if (const auto version = in.u32(); version != kVersion) {
        throw FormatError("unsupported SKW1 version " + std::to_string(version));
    }
    EncoderNet net;
    const std::uint32_t layer_count = in.u32();
    const std::uint32_t tap_count = in.u32();
    in.need(static_cast<std::size_t>(tap_count) * 4);
    for (std::uint32_t i = 0; i < tap_count; ++i) net.taps.push_back(in.u32());
    for (auto& m : net.input_mean) m = in.f32();
    for (auto& s : net.input_std) s = in.f32();
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        ConvLayer L;
        L.out_ch = in.u32();
        L.in_ch = in.u32();
        const std::uint32_t kernel = in.u32();
        L.stride = in.u32();
        if (kernel != 3) throw FormatError("layer " + std::to_string(l) + ": only 3x3 kernels are supported");
        const std::size_t nw = static_cast<std::size_t>(L.out_ch) * L.in_ch * 9;
        in.need((nw + L.out_ch) * 4);
        L.weights.resize(nw);
        for (auto& w : L.weights) w = in.f32();
        L.biases.resize(L.out_ch);
        for (auto& b : L.biases) b = in.f32();
        net.layers.push_back(std::move(L));
    }
    if (in.remaining() != 0) throw FormatError("trailing bytes after SKW1 payload");
    validate(net);
    return net;
}

EncoderNet load_skw1(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    try {
        return parse_skw1(bytes);
    } catch (const FormatError& e) {
        throw FormatError("'" + path.string() + "': " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError("'" + path.string() + "': " + e.what());
    }
}

std::vector<unsigned char> serialize_skw1(const EncoderNet& net) {
    validate(net);
    std::vector<unsigned char> out(kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    put_u32(out, static_cast<std::uint32_t>(net.taps.size()));
    for (auto t : net.taps) put_u32(out, t);
    for (float m : net.input_mean) put_f32(out, m);
    for (float s : net.input_std) put_f32(out, s);
    for (const auto& L : net.layers) {
        put_u32(out, L.out_ch);
        put_u32(out, L.in_ch);
        put_u32(out, 3);
        put_u32(out, L.stride);
        for (float w : L.weights) put_f32(out, w);
        for (float b : L.biases) put_f32(out, b);
    }
    return out;
}

void write_skw1(const EncoderNet& net, const std::filesystem::path& path) {
    const auto bytes = serialize_skw1(net);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for '" + path.string() + "'");
}

EncoderNet random_encoder(std::uint64_t seed, int in_channels, const std::vector<int>& widths,
                          const std::vector<int>& strides) {
    if (widths.empty()) throw ValidationError("random_encoder needs at least one layer width");
    if (in_channels != 1 && in_channels != 3) throw ValidationError("encoder input must have 1 or 3 channels");
    if (!strides.empty() && strides.size() != widths.size()) throw ValidationError("strides must match widths");

    Rng rng(seed);
    EncoderNet net;
    net.input_mean = {0.5f, 0.5f, 0.5f};
    net.input_std = {0.5f, 0.5f, 0.5f};
    int prev = in_channels;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        if (widths[l] < 1) throw ValidationError("layer widths must be >= 1");
        ConvLayer L;
        L.out_ch = static_cast<std::uint32_t>(widths[l]);
        L.in_ch = static_cast<std::uint32_t>(prev);
        L.stride = static_cast<std::uint32_t>(strides.empty() ? (l == 0 ? 1 : 2) : strides[l]);
        const double std_dev = std::sqrt(2.0 / (9.0 * prev));
        L.weights.resize(static_cast<std::size_t>(L.out_ch) * L.in_ch * 9);
        for (auto& w : L.weights) w = static_cast<float>(rng.normal() * std_dev);
        L.biases.assign(L.out_ch, 0.0f);
        net.layers.push_back(std::move(L));
        net.taps.push_back(static_cast<std::uint32_t>(l));
        prev = widths[l];
    }
    validate(net);
    return net;
}

EncoderOutput forward(const EncoderNet& net, const Canvas& img, const ExecPolicy& exec) {
    validate(net);
    if (img.channels != net.in_channels()) {
        throw ValidationError("image has " + std::to_string(img.channels) + " channels, encoder expects " +
                              std::to_string(net.in_channels()));
    }
    EncoderOutput out;
    auto& tape = out.tape;
    tape.net = &net;
    tape.exec = exec;
    tape.image_w = img.width;
    tape.image_h = img.height;

    Tensor x(img.height, img.width, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const auto ch = i % static_cast<std::size_t>(img.channels);
        x.data[i] = (img.data[i] - net.input_mean[ch]) / static_cast<double>(net.input_std[ch]);
    }

    const std::uint32_t last = net.taps.back();
    std::size_t next_tap = 0;
    for (std::uint32_t l = 0; l <= last; ++l) {
        Tensor pre = conv_forward(net.layers[l], x, exec);
        Tensor act = pre;
        for (auto& v : act.data) v = v > 0.0 ? v : 0.0;
        if (next_tap < net.taps.size() && net.taps[next_tap] == l) {
            out.features.push_back({l, act});
            ++next_tap;
        }
        tape.inputs.push_back(std::move(x));
        tape.preacts.push_back(std::move(pre));
        x = std::move(act);
    }
    return out;
}

Canvas backward(const EncoderTape& tape, const FeatureSet& dL_dfeatures) {
    if (tape.net == nullptr) throw ValidationError("encoder tape has no network");
    const auto& net = *tape.net;
    if (dL_dfeatures.size() != net.taps.size()) throw ValidationError("feature gradient count does not match taps");
    for (std::size_t i = 0; i < dL_dfeatures.size(); ++i) {
        const auto& g = dL_dfeatures[i];
        if (g.layer != net.taps[i] || g.layer >= tape.preacts.size() || !g.act.same_shape(tape.preacts[g.layer])) {
            throw ValidationError("feature gradient " + std::to_string(i) + " has the wrong shape");
        }
    }

    Tensor grad_act;  // dL/d(post-ReLU output) of the current layer
    std::size_t tap = dL_dfeatures.size();
    for (std::size_t l = tape.preacts.size(); l-- > 0;) {
        const Tensor& pre = tape.preacts[l];
        if (grad_act.data.empty()) grad_act = Tensor(pre.h, pre.w, pre.c);
        if (tap > 0 && dL_dfeatures[tap - 1].layer == l) {
            const auto& g = dL_dfeatures[tap - 1].act.data;
            for (std::size_t i = 0; i < g.size(); ++i) grad_act.data[i] += g[i];
            --tap;
        }
        for (std::size_t i = 0; i < pre.data.size(); ++i) {
            if (!(pre.data[i] > 0.0)) grad_act.data[i] = 0.0;
        }
        const Tensor& in = tape.inputs[l];
        grad_act = conv_backward_input(net.layers[l], grad_act, in.h, in.w, tape.exec);
    }

    Canvas g(tape.image_w, tape.image_h, net.in_channels());
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        g.data[i] = grad_act.data[i] / static_cast<double>(net.input_std[i % static_cast<std::size_t>(g.channels)]);
    }
    return g;
}

}  // namespace sketchforge
