#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace sketchforge::cli {

inline constexpr const char* kVersion = "sketchforge 1.0.0";

/// Everything `fit` resolves from its flags; serialised as manifest.json.
struct FitOptions {
    std::string image;
    std::string colour = "gray";  // gray | rgb
    std::string preset;           // paper-points | paper-lines | paper-splines
    int points = 0;
    int lines = 0;
    int splines = 0;
    std::string init = "random_uniform";
    bool fixed_colour = false;  // keep sampled colours, learn geometry only

    std::string loss = "mse";  // mse | pyramid | feature
    int pyramid_levels = 3;
    std::string encoder = "random:0";  // SKW1 path or random:SEED
    std::vector<int> taps;
    std::vector<double> feature_weights;
    bool lpips_normalise = true;
    double mse_weight = 0.0;

    int iters = 2000;
    double lr = 0.01;
    std::uint64_t seed = 0;
    int width = 256;
    int height = 256;
    double sigma_start = 8.0;
    double sigma_end = 1.0;
    std::string compose = "auto";  // auto | darken_min | soft_over
    int snapshot_every = 0;

    std::string out_dir = "out";
    bool deterministic = false;
    int threads = 0;  // 0: SKETCHFORGE_THREADS or hardware concurrency
};

nlohmann::json manifest_to_json(const FitOptions& opts);
FitOptions manifest_from_json(const nlohmann::json& j);

/// Exit codes: 0 success, 2 invalid input or I/O failure, 3 numeric abort,
/// 1 anything else.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sketchforge::cli
