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

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "pimd/core/errors.hpp"
#include "pimd/core/hash.hpp"
#include "pimd/core/rng.hpp"
#include "pimd/core/tensor.hpp"
#include "pimd/nn/layers.hpp"

namespace pimd {

enum class ManipulatorKind { fixed_conv, masked_inpaint, color_warp };

inline std::string to_string(ManipulatorKind k)
{
    switch (k) {
    case ManipulatorKind::fixed_conv: return "fixed_conv";
    case ManipulatorKind::masked_inpaint: return "masked_inpaint";
    case ManipulatorKind::color_warp: return "color_warp";
    }
    return "?";
}

inline ManipulatorKind parse_manipulator_kind(std::string_view s)
{
    if (s == "fixed_conv") return ManipulatorKind::fixed_conv;
    if (s == "masked_inpaint") return ManipulatorKind::masked_inpaint;
    if (s == "color_warp") return ManipulatorKind::color_warp;
    throw InvalidArgument("unknown manipulator kind '" + std::string(s) + "'");
}

/// Scale of the tanh residual in fixed_conv.
inline constexpr double kFixedConvResidual = 1.0;
/// Upper bound on the color_warp displacement, in pixels.
inline constexpr double kMaxWarpPixels = 3.0;

template <typename T>
struct FixedConvParams {
    nn::Conv2d<T> conv1{"g.conv1", 3, 8, 3}, conv2{"g.conv2", 8, 8, 3}, conv3{"g.conv3", 8, 3, 3};
    T residual_scale = static_cast<T>(kFixedConvResidual);
};

template <typename T>
struct MaskedInpaintParams {
    int y0 = 0, x0 = 0, size = 32;
    std::array<T, 25> kernel{};  // 5x5, shared by all channels
};

template <typename T>
struct ColorWarpParams {
    std::array<T, 9> matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Plane<T> dy, dx;  // sampling offsets per output pixel
};

/// A frozen, differentiable image-to-image transform. Parameters are set at
/// construction and only read afterwards, so forward/backward are reentrant.
template <typename T>
class Manipulator {
public:
    Manipulator(FixedConvParams<T> p, std::uint64_t seed = 0)
        : kind_(ManipulatorKind::fixed_conv), seed_(seed), conv_(std::move(p)) {}
    Manipulator(MaskedInpaintParams<T> p, std::uint64_t seed = 0)
        : kind_(ManipulatorKind::masked_inpaint), seed_(seed), inpaint_(p)
    {
        detail::require(p.size > 0 && p.y0 >= 0 && p.x0 >= 0, "masked_inpaint: invalid region");
    }
    Manipulator(ColorWarpParams<T> p, std::uint64_t seed = 0)
        : kind_(ManipulatorKind::color_warp), seed_(seed), warp_(std::move(p))
    {
        detail::require(warp_.dy.same_shape(warp_.dx), "color_warp: displacement planes differ in shape");
    }

    ManipulatorKind kind() const { return kind_; }
    std::uint64_t seed() const { return seed_; }
    const FixedConvParams<T>& fixed_conv_params() const { return conv_; }
    const MaskedInpaintParams<T>& inpaint_params() const { return inpaint_; }
    const ColorWarpParams<T>& warp_params() const { return warp_; }

    Tensor<T> forward(const Tensor<T>& x) const
    {
        detail::require_shape(x.c() == 3, "manipulate: expected 3-channel input");
        switch (kind_) {
        case ManipulatorKind::fixed_conv: return conv_forward(x, nullptr);
        case ManipulatorKind::masked_inpaint: return inpaint_forward(x);
        case ManipulatorKind::color_warp: return warp_forward(x);
        }
        return x;
    }

    /// Gradient w.r.t. the input only; parameters stay frozen.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) const
    {
        detail::require_shape(x.same_shape(gy), "manipulate backward: gradient shape mismatch");
        switch (kind_) {
        case ManipulatorKind::fixed_conv: return conv_backward(x, gy);
        case ManipulatorKind::masked_inpaint: return inpaint_backward(gy);
        case ManipulatorKind::color_warp: return warp_backward(gy);
        }
        return gy;
    }

    Image<T> operator()(const Image<T>& image) const
    {
        return forward(Tensor<T>::stack(std::span<const Image<T>>(&image, 1))).image(0);
    }

    /// FNV-1a over every frozen parameter.
    std::uint64_t checksum() const
    {
        std::uint64_t h = fnv1a(to_string(kind_));
        auto mix = [&h](auto v) {
            const double d = static_cast<double>(v);
            h = fnv1a({reinterpret_cast<const char*>(&d), sizeof d}, h);
        };
        switch (kind_) {
        case ManipulatorKind::fixed_conv:
            for (const auto* c : {&conv_.conv1, &conv_.conv2, &conv_.conv3}) {
                for (T v : c->weight.value) mix(v);
                for (T v : c->bias.value) mix(v);
            }
            mix(conv_.residual_scale);
            break;
        case ManipulatorKind::masked_inpaint:
            mix(inpaint_.y0);
            mix(inpaint_.x0);
            mix(inpaint_.size);
            for (T v : inpaint_.kernel) mix(v);
            break;
        case ManipulatorKind::color_warp:
            for (T v : warp_.matrix) mix(v);
            for (T v : warp_.dy.values()) mix(v);
            for (T v : warp_.dx.values()) mix(v);
            break;
        }
        return h;
    }

private:
    struct ConvTape {
        Tensor<T> h1, h2, r;
    };

    Tensor<T> conv_forward(const Tensor<T>& x, ConvTape* tape) const
    {
        Tensor<T> h1 = conv_.conv1.forward(x);
        nn::relu_inplace(h1);
        Tensor<T> h2 = conv_.conv2.forward(h1);
        nn::relu_inplace(h2);
        Tensor<T> r = conv_.conv3.forward(h2);
        for (auto& v : r.storage()) v = std::tanh(v);
        Tensor<T> y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += conv_.residual_scale * r[i];
        if (tape) *tape = {std::move(h1), std::move(h2), std::move(r)};
        return y;
    }

    Tensor<T> conv_backward(const Tensor<T>& x, const Tensor<T>& gy) const
    {
        ConvTape t;
        conv_forward(x, &t);
        Tensor<T> gr = gy;
        for (std::size_t i = 0; i < gr.size(); ++i) gr[i] *= conv_.residual_scale * (T{1} - t.r[i] * t.r[i]);
        Tensor<T> g2 = conv_.conv3.input_grad(gr, x.h(), x.w());
        nn::relu_backward_inplace(t.h2, g2);
        Tensor<T> g1 = conv_.conv2.input_grad(g2, x.h(), x.w());
        nn::relu_backward_inplace(t.h1, g1);
        Tensor<T> gx = conv_.conv1.input_grad(g1, x.h(), x.w());
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
        return gx;
    }

    bool in_mask(int y, int x) const
    {
        return y >= inpaint_.y0 && y < inpaint_.y0 + inpaint_.size && x >= inpaint_.x0 &&
               x < inpaint_.x0 + inpaint_.size;
    }

    // 5x5 correlation with zero padding; transpose flips the kernel.
    void smooth(const T* src, T* dst, int h, int w, bool transpose) const
    {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                T acc = 0;
                for (int ky = -2; ky <= 2; ++ky) {
                    const int sy = y + ky;
                    if (sy < 0 || sy >= h) continue;
                    for (int kx = -2; kx <= 2; ++kx) {
                        const int sx = x + kx;
                        if (sx < 0 || sx >= w) continue;
                        const int k = transpose ? (2 - ky) * 5 + (2 - kx) : (ky + 2) * 5 + (kx + 2);
                        acc += inpaint_.kernel[k] * src[static_cast<std::size_t>(sy) * w + sx];
                    }
                }
                dst[static_cast<std::size_t>(y) * w + x] = acc;
            }
    }

    Tensor<T> inpaint_forward(const Tensor<T>& x) const
    {
        const int h = x.h(), w = x.w();
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        Tensor<T> z = x;
        for (int i = 0; i < x.n(); ++i)
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        if (in_mask(y, xx)) z.at(i, c, y, xx) = 0;
        Tensor<T> out = z;
        std::vector<T> s(hw);
        for (int i = 0; i < x.n(); ++i)
            for (int c = 0; c < 3; ++c) {
                smooth(z.sample(i) + c * hw, s.data(), h, w, false);
                T* o = out.sample(i) + c * hw;
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        if (in_mask(y, xx)) o[static_cast<std::size_t>(y) * w + xx] += s[static_cast<std::size_t>(y) * w + xx];
            }
        return out;
    }

    Tensor<T> inpaint_backward(const Tensor<T>& gy) const
    {
        const int h = gy.h(), w = gy.w();
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        Tensor<T> gx = gy;
        std::vector<T> gs(hw), back(hw);
        for (int i = 0; i < gy.n(); ++i)
            for (int c = 0; c < 3; ++c) {
                const T* g = gy.sample(i) + c * hw;
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        const std::size_t j = static_cast<std::size_t>(y) * w + xx;
                        gs[j] = in_mask(y, xx) ? g[j] : T{0};
                    }
                smooth(gs.data(), back.data(), h, w, true);
                T* d = gx.sample(i) + c * hw;
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        const std::size_t j = static_cast<std::size_t>(y) * w + xx;
                        d[j] = in_mask(y, xx) ? T{0} : d[j] + back[j];
                    }
            }
        return gx;
    }

    struct Tap {
        int y0, x0, y1, x1;
        T wy, wx;
    };

    // Bilinear source taps for output pixel (y, x), clamped to the border.
    Tap tap(int y, int x, int h, int w) const
    {
        const T sy = std::clamp(static_cast<T>(y) + warp_.dy(y, x), T{0}, static_cast<T>(h - 1));
        const T sx = std::clamp(static_cast<T>(x) + warp_.dx(y, x), T{0}, static_cast<T>(w - 1));
        const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
        return {y0, x0, std::min(y0 + 1, h - 1), std::min(x0 + 1, w - 1), sy - y0, sx - x0};
    }

    Tensor<T> warp_forward(const Tensor<T>& x) const
    {
        const int h = x.h(), w = x.w();
        detail::require_shape(warp_.dy.height() == h && warp_.dy.width() == w, "color_warp: size mismatch");
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        Tensor<T> mixed(x.n(), 3, h, w), out(x.n(), 3, h, w);
        for (int i = 0; i < x.n(); ++i) {
            const T* s = x.sample(i);
            T* m = mixed.sample(i);
            for (int c = 0; c < 3; ++c)
                for (std::size_t j = 0; j < hw; ++j)
                    m[c * hw + j] = warp_.matrix[c * 3] * s[j] + warp_.matrix[c * 3 + 1] * s[hw + j] +
                                    warp_.matrix[c * 3 + 2] * s[2 * hw + j];
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    const Tap t = tap(y, xx, h, w);
                    for (int c = 0; c < 3; ++c) {
                        const T* p = m + c * hw;
                        const T top = p[t.y0 * w + t.x0] * (1 - t.wx) + p[t.y0 * w + t.x1] * t.wx;
                        const T bot = p[t.y1 * w + t.x0] * (1 - t.wx) + p[t.y1 * w + t.x1] * t.wx;
                        out.at(i, c, y, xx) = top * (1 - t.wy) + bot * t.wy;
                    }
                }
        }
        return out;
    }

    Tensor<T> warp_backward(const Tensor<T>& gy) const
    {
        const int h = gy.h(), w = gy.w();
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        Tensor<T> gm(gy.n(), 3, h, w), gx(gy.n(), 3, h, w);
        for (int i = 0; i < gy.n(); ++i) {
            T* m = gm.sample(i);
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    const Tap t = tap(y, xx, h, w);
                    for (int c = 0; c < 3; ++c) {
                        const T g = gy.at(i, c, y, xx);
                        T* p = m + c * hw;
                        p[t.y0 * w + t.x0] += g * (1 - t.wy) * (1 - t.wx);
                        p[t.y0 * w + t.x1] += g * (1 - t.wy) * t.wx;
                        p[t.y1 * w + t.x0] += g * t.wy * (1 - t.wx);
                        p[t.y1 * w + t.x1] += g * t.wy * t.wx;
                    }
                }
            T* d = gx.sample(i);
            for (int c = 0; c < 3; ++c)
                for (std::size_t j = 0; j < hw; ++j)
                    d[c * hw + j] = warp_.matrix[c] * m[j] + warp_.matrix[3 + c] * m[hw + j] +
                                    warp_.matrix[6 + c] * m[2 * hw + j];
        }
        return gx;
    }

    ManipulatorKind kind_;
    std::uint64_t seed_ = 0;
    FixedConvParams<T> conv_;
    MaskedInpaintParams<T> inpaint_;
    ColorWarpParams<T> warp_;
};

/// Frozen parameters are regenerated from (kind, seed) and never stored.
/// `side` only matters for the spatial parameters (mask placement, warp field).
template <typename T = float>
Manipulator<T> make_manipulator(ManipulatorKind kind, std::uint64_t seed, int side = kImageSide)
{
    detail::require(side >= 8, "make_manipulator: side too small");
    RngStream rng = RngStream(seed).fork(0x6D616E6970ULL + static_cast<std::uint64_t>(kind));
    switch (kind) {
    case ManipulatorKind::fixed_conv: {
        FixedConvParams<T> p;
        p.conv1.init(rng);
        p.conv2.init(rng);
        p.conv3.init(rng, 1.0);
        // Small random biases so the residual is not an odd function of the input.
        for (auto* c : {&p.conv1, &p.conv2, &p.conv3})
            for (auto& b : c->bias.value) b = static_cast<T>(rng.uniform(-0.1, 0.1));
        return Manipulator<T>(std::move(p), seed);
    }
    case ManipulatorKind::masked_inpaint: {
        MaskedInpaintParams<T> p;
        p.size = side / 4;
        p.y0 = static_cast<int>(rng.uniform_int(0, side - p.size));
        p.x0 = static_cast<int>(rng.uniform_int(0, side - p.size));
        double total = 0;
        std::array<double, 25> k{};
        for (auto& v : k) total += (v = rng.uniform(0.5, 1.5));
        for (int i = 0; i < 25; ++i) p.kernel[i] = static_cast<T>(k[i] / total);
        return Manipulator<T>(p, seed);
    }
    case ManipulatorKind::color_warp: {
        ColorWarpParams<T> p;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) p.matrix[r * 3 + c] = static_cast<T>((r == c ? 1.0 : 0.0) + 0.08 * rng.normal());
        p.dy = Plane<T>(side, side);
        p.dx = Plane<T>(side, side);
        // Each displacement is one low-frequency sinusoid; |amplitude| <= kMaxWarpPixels.
        for (Plane<T>* d : {&p.dy, &p.dx}) {
            const double amp = rng.uniform(0.5, 1.0) * kMaxWarpPixels;
            const double fy = static_cast<double>(rng.uniform_int(1, 2)), fx = static_cast<double>(rng.uniform_int(1, 2));
            const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x)
                    (*d)(y, x) = static_cast<T>(
                        amp * std::sin(2 * std::numbers::pi * (fy * y + fx * x) / side + phase));
        }
        return Manipulator<T>(std::move(p), seed);
    }
    }
    throw InvalidArgument("make_manipulator: unknown kind");
}

template <typename T>
Image<T> manipulate(const Manipulator<T>& g, const Image<T>& image)
{
    return g(image);
}

}  // namespace pimd
