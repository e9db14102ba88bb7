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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "pimd/core/errors.hpp"
#include "pimd/core/rng.hpp"
#include "pimd/core/tensor.hpp"
#include "pimd/image_io.hpp"

namespace pimd {

/// A list of same-size RGB images plus the name each came from.
template <typename T = float>
struct Corpus {
    std::vector<Image<T>> images;
    std::vector<std::string> names;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }
};

/// Procedural textured composite: a two-color gradient, a sinusoidal grating,
/// a handful of filled discs and boxes, and faint pixel noise.
/// Image `index` of `seed` is the same no matter how many others are drawn.
template <typename T = float>
Image<T> synthetic_image(std::uint64_t seed, std::uint64_t index, int side = kImageSide)
{
    RngStream rng = RngStream(seed).fork(0x636F727075730000ULL ^ index);
    Image<T> img(3, side, side);
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = rng.uniform(0.1, 0.9);
        c1[c] = rng.uniform(0.1, 0.9);
    }
    const double angle = rng.uniform(0.0, 2 * std::numbers::pi);
    const double gx = std::cos(angle), gy = std::sin(angle);
    const double freq = rng.uniform(2.0, 12.0), gangle = rng.uniform(0.0, std::numbers::pi);
    const double gphase = rng.uniform(0.0, 2 * std::numbers::pi), gamp = rng.uniform(0.02, 0.12);
    double gtint[3];
    for (double& t : gtint) t = rng.uniform(0.5, 1.0);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double u = (x - side / 2.0) / side, v = (y - side / 2.0) / side;
            const double t = std::clamp(0.5 + u * gx + v * gy, 0.0, 1.0);
            const double g =
                gamp * std::sin(2 * std::numbers::pi * freq * (u * std::cos(gangle) + v * std::sin(gangle)) + gphase);
            for (int c = 0; c < 3; ++c) img(c, y, x) = static_cast<T>(c0[c] * (1 - t) + c1[c] * t + g * gtint[c]);
        }
    const int shapes = rng.uniform_int(3, 8);
    for (int s = 0; s < shapes; ++s) {
        const bool disc = rng.bernoulli(0.5);
        const double cy = rng.uniform(0, side), cx = rng.uniform(0, side);
        const double ry = rng.uniform(0.04, 0.22) * side, rx = disc ? ry : rng.uniform(0.04, 0.22) * side;
        const double alpha = rng.uniform(0.5, 1.0);
        double col[3];
        for (double& c : col) c = rng.uniform(0.0, 1.0);
        const int y0 = std::max(0, static_cast<int>(cy - ry)), y1 = std::min(side - 1, static_cast<int>(cy + ry));
        const int x0 = std::max(0, static_cast<int>(cx - rx)), x1 = std::min(side - 1, static_cast<int>(cx + rx));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (disc) {
                    const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                    if (dy * dy + dx * dx > 1.0) continue;
                }
                for (int c = 0; c < 3; ++c)
                    img(c, y, x) = static_cast<T>(img(c, y, x) * (1 - alpha) + col[c] * alpha);
            }
    }
    for (auto& v : img.values()) v = static_cast<T>(std::clamp(v + 0.01 * rng.normal(), 0.0, 1.0));
    return img;
}

/// Images [first, first + count) of the procedural family for `seed`.
template <typename T = float>
Corpus<T> synthetic_corpus(std::uint64_t seed, std::size_t count, std::size_t first = 0, int side = kImageSide)
{
    Corpus<T> c;
    c.images.reserve(count);
    for (std::size_t i = first; i < first + count; ++i) {
        c.images.push_back(synthetic_image<T>(seed, i, side));
        c.names.push_back("synthetic_" + std::to_string(seed) + "_" + std::to_string(i));
    }
    return c;
}

/// Every PNG/JPEG directly inside `dir`, sorted by file name and resized to side x side.
template <typename T = float>
Corpus<T> load_folder(const std::filesystem::path& dir, int side = kImageSide)
{
    Corpus<T> c;
    for (const auto& p : list_images(dir)) {
        c.images.push_back(load_image<T>(p, side));
        c.names.push_back(p.filename().string());
    }
    return c;
}

}  // namespace pimd
