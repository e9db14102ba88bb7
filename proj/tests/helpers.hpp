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
#include <functional>
#include <span>
#include <vector>

#include "pimd/core/rng.hpp"
#include "pimd/core/tensor.hpp"

namespace pimd::test {

inline Plane<double> random_plane(int h, int w, RngStream& rng, double lo = 0.0, double hi = 1.0)
{
    Plane<double> p(h, w);
    for (auto& v : p.values()) v = rng.uniform(lo, hi);
    return p;
}

inline Image<double> random_image(int c, int h, int w, RngStream& rng, double lo = 0.0, double hi = 1.0)
{
    Image<double> img(c, h, w);
    for (auto& v : img.values()) v = rng.uniform(lo, hi);
    return img;
}

/// Central differences of f over every entry of x (x is restored afterwards).
inline std::vector<double> numeric_grad(std::span<double> x, const std::function<double()>& f, double h = 1e-6)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||, tiny).
inline double rel_error(std::span<const double> a, std::span<const double> b)
{
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

}  // namespace pimd::test
