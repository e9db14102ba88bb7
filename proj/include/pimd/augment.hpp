// Copyright 2026 The pimd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pimd/core/errors.hpp"
#include "pimd/core/rng.hpp"
#include "pimd/core/tensor.hpp"
#include "pimd/image_io.hpp"

namespace pimd {

enum class AugmentKind { blur, jpeg, blur_jpeg, resize_mix, random_crop, gaussian_noise };

inline std::string to_string(AugmentKind k)
{
    switch (k) {
    case AugmentKind::blur: return "blur";
    case AugmentKind::jpeg: return "jpeg";
    case AugmentKind::blur_jpeg: return "blur_jpeg";
    case AugmentKind::resize_mix: return "resize_mix";
    case AugmentKind::random_crop: return "random_crop";
    case AugmentKind::gaussian_noise: return "gaussian_noise";
    }
    return "?";
}

inline AugmentKind parse_augment_kind(std::string_view s)
{
    for (auto k : {AugmentKind::blur, AugmentKind::jpeg, AugmentKind::blur_jpeg, AugmentKind::resize_mix,
                   AugmentKind::random_crop, AugmentKind::gaussian_noise})
        if (to_string(k) == s) return k;
    throw InvalidArgument("unknown augmentation '" + std::string(s) + "'");
}

/// One entry of an augmentation recipe. Fields that do not apply to `kind`
/// are ignored.
struct AugmentStep {
    AugmentKind kind = AugmentKind::blur;
    double probability = 0.5;
    double sigma_max = 3.0;
    int quality_min = 30, quality_max = 100;
    int mix_side = 256;
    int crop_max = 30;
    double noise_std = 1.0 / 255.0;  // unit variance in 8-bit units

    void validate() const
    {
        detail::require(probability >= 0 && probability <= 1, "augment: probability must be in [0, 1]");
        detail::require(sigma_max >= 0, "augment: sigma_max must be >= 0");
        detail::require(quality_min >= 1 && quality_min <= quality_max && quality_max <= 100,
                        "augment: JPEG quality range must satisfy 1 <= min <= max <= 100");
        detail::require(mix_side > 0 && crop_max >= 0 && noise_std >= 0, "augment: invalid parameters");
    }
};

using AugmentRecipe = std::vector<AugmentStep>;

inline void to_json(nlohmann::json& j, const AugmentStep& s)
{
    j = {{"name", to_string(s.kind)}, {"probability", s.probability}};
    switch (s.kind) {
    case AugmentKind::blur: j["sigma_max"] = s.sigma_max; break;
    case AugmentKind::jpeg: j["quality"] = {s.quality_min, s.quality_max}; break;
    case AugmentKind::blur_jpeg:
        j["sigma_max"] = s.sigma_max;
        j["quality"] = {s.quality_min, s.quality_max};
        break;
    case AugmentKind::resize_mix: j["mix_side"] = s.mix_side; break;
    case AugmentKind::random_crop: j["crop_max"] = s.crop_max; break;
    case AugmentKind::gaussian_noise: j["noise_std"] = s.noise_std; break;
    }
}

inline void from_json(const nlohmann::json& j, AugmentStep& s)
{
    s = AugmentStep{};
    for (const auto& [key, value] : j.items()) {
        if (key == "name") s.kind = parse_augment_kind(value.get<std::string>());
        else if (key == "probability") s.probability = value.get<double>();
        else if (key == "sigma_max") s.sigma_max = value.get<double>();
        else if (key == "quality") {
            detail::require(value.is_array() && value.size() == 2, "augment: quality must be [min, max]");
            s.quality_min = value[0].get<int>();
            s.quality_max = value[1].get<int>();
        } else if (key == "mix_side") s.mix_side = value.get<int>();
        else if (key == "crop_max") s.crop_max = value.get<int>();
        else if (key == "noise_std") s.noise_std = value.get<double>();
        else throw ConfigError("augment: unknown key '" + key + "'");
    }
    detail::require(j.contains("name"), "augment: missing 'name'");
    s.validate();
}

/// A concrete, already-drawn operation. Replaying a trace is deterministic
/// and its adjoint gives the gradient (straight-through for JPEG).
struct AppliedAugment {
    enum class Op { blur, jpeg, resample, noise } op = Op::blur;
    double sigma = 0;
    int quality = 100;
    int src_h = 0, src_w = 0, out_h = 0, out_w = 0;
    double box_y = 0, box_x = 0, box_h = 0, box_w = 0;
    std::vector<float> noise;
};

struct AugmentTrace {
    std::vector<AppliedAugment> ops;
};

namespace detail {

/// Mirror index without repeating the edge sample, folded until in range.
inline int reflect_index(int i, int n)
{
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

inline std::vector<double> gaussian_taps(double sigma)
{
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double total = 0;
    for (int i = -r; i <= r; ++i) total += (k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma)));
    for (auto& v : k) v /= total;
    return k;
}

// One separable pass along rows (axis 1) or columns (axis 0); adjoint scatters.
template <typename T>
Image<T> blur_pass(const Image<T>& src, const std::vector<double>& k, int axis, bool adjoint)
{
    const int r = static_cast<int>(k.size() / 2);
    const int h = src.height(), w = src.width();
    Image<T> out(src.channels(), h, w);
    for (int c = 0; c < src.channels(); ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int t = -r; t <= r; ++t) {
                    const int sy = axis == 0 ? reflect_index(y + t, h) : y;
                    const int sx = axis == 1 ? reflect_index(x + t, w) : x;
                    if (adjoint)
                        out(c, sy, sx) += static_cast<T>(k[t + r] * src(c, y, x));
                    else
                        out(c, y, x) += static_cast<T>(k[t + r] * src(c, sy, sx));
                }
    return out;
}

}  // namespace detail

/// Separable Gaussian blur, radius ceil(3 sigma), reflective padding.
template <typename T>
Image<T> gaussian_blur_sigma(const Image<T>& img, double sigma)
{
    if (!(sigma > 0)) return img;
    const auto k = detail::gaussian_taps(sigma);
    if (k.size() == 1) return img;
    return detail::blur_pass(detail::blur_pass(img, k, 1, false), k, 0, false);
}

template <typename T>
Image<T> apply_augment(const AppliedAugment& a, const Image<T>& img)
{
    switch (a.op) {
    case AppliedAugment::Op::blur: return gaussian_blur_sigma(img, a.sigma);
    case AppliedAugment::Op::jpeg: {
        // The codec sees the clamped 8-bit image; decoded output lies in [0, 1].
        return jpeg_roundtrip(img, a.quality);
    }
    case AppliedAugment::Op::resample:
        detail::require_shape(img.height() == a.src_h && img.width() == a.src_w, "augment: resample size mismatch");
        return resize_bilinear(img, a.out_h, a.out_w, a.box_y, a.box_x, a.box_h, a.box_w);
    case AppliedAugment::Op::noise: {
        detail::require_shape(a.noise.size() == img.size(), "augment: noise size mismatch");
        Image<T> out = img;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += static_cast<T>(a.noise[i]);
        return out;
    }
    }
    return img;
}

template <typename T>
Image<T> adjoint_augment(const AppliedAugment& a, const Image<T>& grad)
{
    switch (a.op) {
    case AppliedAugment::Op::blur: {
        if (!(a.sigma > 0)) return grad;
        const auto k = detail::gaussian_taps(a.sigma);
        if (k.size() == 1) return grad;
        return detail::blur_pass(detail::blur_pass(grad, k, 0, true), k, 1, true);
    }
    case AppliedAugment::Op::jpeg: return grad;  // straight-through
    case AppliedAugment::Op::resample:
        return resize_bilinear_adjoint(grad, a.src_h, a.src_w, a.box_y, a.box_x, a.box_h, a.box_w);
    case AppliedAugment::Op::noise: return grad;
    }
    return grad;
}

namespace detail {

inline AppliedAugment draw_blur(double sigma_max, RngStream& rng)
{
    AppliedAugment a;
    a.op = AppliedAugment::Op::blur;
    a.sigma = rng.uniform(0.0, sigma_max);
    return a;
}

inline AppliedAugment draw_jpeg(int qmin, int qmax, RngStream& rng)
{
    AppliedAugment a;
    a.op = AppliedAugment::Op::jpeg;
    a.quality = rng.uniform_int(qmin, qmax);
    return a;
}

inline AppliedAugment resample_op(int src_h, int src_w, int out_h, int out_w, double by, double bx, double bh,
                                  double bw)
{
    AppliedAugment a;
    a.op = AppliedAugment::Op::resample;
    a.src_h = src_h;
    a.src_w = src_w;
    a.out_h = out_h;
    a.out_w = out_w;
    a.box_y = by;
    a.box_x = bx;
    a.box_h = bh;
    a.box_w = bw;
    return a;
}

}  // namespace detail

/// Draws the operations of one recipe step for an image of size h x w.
/// Draw order is fixed so a (seed, counter) pair replays bit-identically.
inline void draw_step(const AugmentStep& s, int h, int w, int channels, RngStream& rng,
                      std::vector<AppliedAugment>& out)
{
    switch (s.kind) {
    case AugmentKind::blur:
        if (rng.bernoulli(s.probability)) out.push_back(detail::draw_blur(s.sigma_max, rng));
        break;
    case AugmentKind::jpeg:
        if (rng.bernoulli(s.probability)) out.push_back(detail::draw_jpeg(s.quality_min, s.quality_max, rng));
        break;
    case AugmentKind::blur_jpeg:
        if (rng.bernoulli(s.probability)) out.push_back(detail::draw_blur(s.sigma_max, rng));
        if (rng.bernoulli(s.probability)) out.push_back(detail::draw_jpeg(s.quality_min, s.quality_max, rng));
        break;
    case AugmentKind::resize_mix:
        if (rng.bernoulli(s.probability)) {
            out.push_back(detail::resample_op(h, w, s.mix_side, s.mix_side, 0, 0, h, w));
            out.push_back(detail::resample_op(s.mix_side, s.mix_side, h, w, 0, 0, s.mix_side, s.mix_side));
        }
        break;
    case AugmentKind::random_crop: {
        int cut[4] = {0, 0, 0, 0};  // top, bottom, left, right
        for (int& c : cut)
            if (rng.bernoulli(s.probability)) c = rng.uniform_int(0, s.crop_max);
        const int bh = h - cut[0] - cut[1], bw = w - cut[2] - cut[3];
        detail::require(bh > 0 && bw > 0, "random_crop: crop removes the whole image");
        if (cut[0] || cut[1] || cut[2] || cut[3])
            out.push_back(detail::resample_op(h, w, h, w, cut[0], cut[2], bh, bw));
        break;
    }
    case AugmentKind::gaussian_noise:
        if (rng.bernoulli(s.probability)) {
            AppliedAugment a;
            a.op = AppliedAugment::Op::noise;
            a.noise.resize(static_cast<std::size_t>(channels) * h * w);
            for (auto& v : a.noise) v = static_cast<float>(s.noise_std * rng.normal());
            out.push_back(std::move(a));
        }
        break;
    }
}

/// Runs the recipe in order; the trace records every applied operation.
template <typename T>
Image<T> augment(const Image<T>& img, const AugmentRecipe& recipe, RngStream& rng, AugmentTrace* trace = nullptr)
{
    std::vector<AppliedAugment> ops;
    for (const auto& s : recipe) draw_step(s, img.height(), img.width(), img.channels(), rng, ops);
    Image<T> out = img;
    for (const auto& a : ops) out = apply_augment(a, out);
    if (trace) trace->ops = std::move(ops);
    return out;
}

template <typename T>
Image<T> augment_backward(const AugmentTrace& trace, const Image<T>& grad)
{
    Image<T> g = grad;
    for (auto it = trace.ops.rbegin(); it != trace.ops.rend(); ++it) g = adjoint_augment(*it, g);
    return g;
}

template <typename T>
Image<T> gaussian_blur(const Image<T>& img, RngStream& rng)
{
    return augment(img, {AugmentStep{AugmentKind::blur}}, rng);
}

template <typename T>
Image<T> jpeg_compress(const Image<T>& img, RngStream& rng)
{
    return augment(img, {AugmentStep{AugmentKind::jpeg}}, rng);
}

template <typename T>
Image<T> blur_jpeg(const Image<T>& img, double p, RngStream& rng)
{
    AugmentStep s{AugmentKind::blur_jpeg};
    s.probability = p;
    s.validate();
    return augment(img, {s}, rng);
}

template <typename T>
Image<T> resize_mix(const Image<T>& img, RngStream& rng)
{
    return augment(img, {AugmentStep{AugmentKind::resize_mix}}, rng);
}

template <typename T>
Image<T> random_crop(const Image<T>& img, RngStream& rng)
{
    return augment(img, {AugmentStep{AugmentKind::random_crop}}, rng);
}

template <typename T>
Image<T> gaussian_noise(const Image<T>& img, RngStream& rng)
{
    return augment(img, {AugmentStep{AugmentKind::gaussian_noise}}, rng);
}

}  // namespace pimd
