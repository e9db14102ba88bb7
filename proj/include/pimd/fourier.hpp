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
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "pimd/core/errors.hpp"
#include "pimd/core/settings.hpp"
#include "pimd/core/tensor.hpp"

namespace pimd {

/// Partial 2D DFT restricted to the centered k x k window of the shifted
/// spectrum. With the DC bin at the center, the window holds the signed
/// frequencies [-floor(k/2), k - floor(k/2)) along each axis. Forward
/// transform is unnormalized: F(u,v) = sum_{y,x} S[y,x] exp(-2 pi i (uy/H + vx/W)).
template <typename T>
class LowPassWindow {
public:
    LowPassWindow(int height, int width, FrequencyFilter filt) : h_(height), w_(width), k_(filt.k)
    {
        detail::require(filt.k >= 1 && filt.k <= height && filt.k <= width,
                        "LowPassWindow: k must lie in [1, min(height, width)]");
        build(h_, row_cos_, row_sin_);
        build(w_, col_cos_, col_sin_);
    }

    int k() const { return k_; }

    /// Window coefficients, k x k, row index = vertical frequency.
    std::vector<std::complex<T>> coefficients(const Plane<T>& s) const
    {
        check(s);
        // Along x: A[y][v]
        std::vector<T> ar(static_cast<std::size_t>(h_) * k_), ai(ar.size());
        for (int y = 0; y < h_; ++y) {
            const T* row = &s(y, 0);
            for (int v = 0; v < k_; ++v) {
                const T* c = &col_cos_[static_cast<std::size_t>(v) * w_];
                const T* sn = &col_sin_[static_cast<std::size_t>(v) * w_];
                T re{0}, im{0};
                for (int x = 0; x < w_; ++x) {
                    re += row[x] * c[x];
                    im -= row[x] * sn[x];
                }
                ar[static_cast<std::size_t>(y) * k_ + v] = re;
                ai[static_cast<std::size_t>(y) * k_ + v] = im;
            }
        }
        // Along y.
        std::vector<std::complex<T>> f(static_cast<std::size_t>(k_) * k_);
        for (int u = 0; u < k_; ++u) {
            const T* c = &row_cos_[static_cast<std::size_t>(u) * h_];
            const T* sn = &row_sin_[static_cast<std::size_t>(u) * h_];
            for (int v = 0; v < k_; ++v) {
                T re{0}, im{0};
                for (int y = 0; y < h_; ++y) {
                    const T a = ar[static_cast<std::size_t>(y) * k_ + v], b = ai[static_cast<std::size_t>(y) * k_ + v];
                    // (a + ib)(cos - i sin)
                    re += a * c[y] + b * sn[y];
                    im += b * c[y] - a * sn[y];
                }
                f[static_cast<std::size_t>(u) * k_ + v] = {re, im};
            }
        }
        return f;
    }

    /// Sum of squared magnitudes inside the window.
    T energy(const Plane<T>& s) const
    {
        T e{0};
        for (const auto& z : coefficients(s)) e += std::norm(z);
        return e;
    }

    /// Energy, and upstream * dEnergy/dS accumulated into grad.
    T energy_backward(const Plane<T>& s, T upstream, std::span<T> grad) const
    {
        const auto f = coefficients(s);
        T e{0};
        for (const auto& z : f) e += std::norm(z);
        // dE/dS[y,x] = 2 Re sum_{u,v} conj(F(u,v)) exp(-2 pi i (uy/H + vx/W))
        std::vector<T> br(static_cast<std::size_t>(h_) * k_), bi(br.size());
        for (int y = 0; y < h_; ++y)
            for (int v = 0; v < k_; ++v) {
                T re{0}, im{0};
                for (int u = 0; u < k_; ++u) {
                    const std::size_t t = static_cast<std::size_t>(u) * h_ + y;
                    const auto z = std::conj(f[static_cast<std::size_t>(u) * k_ + v]);
                    re += z.real() * row_cos_[t] + z.imag() * row_sin_[t];
                    im += z.imag() * row_cos_[t] - z.real() * row_sin_[t];
                }
                br[static_cast<std::size_t>(y) * k_ + v] = re;
                bi[static_cast<std::size_t>(y) * k_ + v] = im;
            }
        const T scale = T{2} * upstream;
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x) {
                T re{0};
                for (int v = 0; v < k_; ++v) {
                    const std::size_t t = static_cast<std::size_t>(v) * w_ + x;
                    re += br[static_cast<std::size_t>(y) * k_ + v] * col_cos_[t] +
                          bi[static_cast<std::size_t>(y) * k_ + v] * col_sin_[t];
                }
                grad[static_cast<std::size_t>(y) * w_ + x] += scale * re;
            }
        return e;
    }

private:
    void check(const Plane<T>& s) const
    {
        detail::require_shape(s.height() == h_ && s.width() == w_, "LowPassWindow: plane shape mismatch");
    }

    // Table row j holds cos/sin(2 pi f_j p / n) for window frequency f_j and position p.
    void build(int n, std::vector<T>& cs, std::vector<T>& sn) const
    {
        cs.resize(static_cast<std::size_t>(k_) * n);
        sn.resize(cs.size());
        const int first = -(k_ / 2);
        for (int j = 0; j < k_; ++j) {
            const long long f = ((first + j) % n + n) % n;
            for (int p = 0; p < n; ++p) {
                const long long r = (f * p) % n;
                const double angle = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(n);
                cs[static_cast<std::size_t>(j) * n + p] = static_cast<T>(std::cos(angle));
                sn[static_cast<std::size_t>(j) * n + p] = static_cast<T>(std::sin(angle));
            }
        }
    }

    int h_, w_, k_;
    std::vector<T> row_cos_, row_sin_, col_cos_, col_sin_;
};

template <typename T>
T lowpass_energy(const Plane<T>& s, FrequencyFilter filt)
{
    return LowPassWindow<T>(s.height(), s.width(), filt).energy(s);
}

}  // namespace pimd
