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
#include <cstddef>
#include <cstring>
#include <vector>

// Direct 3x3 / stride 1 / pad 1 convolution kernels for float planes whose
// width is a multiple of 16. Rows are processed in 16-lane chunks with the
// accumulators held in registers.
// Everything here is inline, so the vector-ABI note is moot.
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wpsabi"
#endif

namespace pimd::nn::kernels {

using v16f = float __attribute__((vector_size(64)));

inline v16f load16(const float* p)
{
    v16f v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store16(float* p, v16f v) { std::memcpy(p, &v, sizeof v); }

inline v16f splat(float s) { return v16f{} + s; }

inline float hsum(v16f v)
{
    float s = 0.0f;
    for (int i = 0; i < 16; ++i) s += v[i];
    return s;
}

inline bool supports(int kernel, int stride, int pad, int width)
{
    return kernel == 3 && stride == 1 && pad == 1 && width % 16 == 0 && width > 0;
}

/// Copies C planes of H x W into a zero-bordered (H+2) x (W+2) buffer.
inline void pad1(const float* src, int channels, int h, int w, std::vector<float>& dst)
{
    const int pw = w + 2;
    dst.assign(static_cast<std::size_t>(channels) * (h + 2) * pw, 0.0f);
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < h; ++y)
            std::memcpy(&dst[(static_cast<std::size_t>(c) * (h + 2) + y + 1) * pw + 1],
                        src + (static_cast<std::size_t>(c) * h + y) * w, sizeof(float) * w);
}

template <int OB, int XB>
void forward_block(const float* padded, int cin, int h, int w, const float* weight, const float* bias, int o0,
                   float* out)
{
    const int pw = w + 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t pplane = static_cast<std::size_t>(h + 2) * pw;
    for (int y = 0; y < h; ++y)
        for (int x0 = 0; x0 < w; x0 += 16 * XB) {
            v16f acc[OB][XB];
#pragma GCC unroll 8
            for (int b = 0; b < OB; ++b)
#pragma GCC unroll 8
                for (int j = 0; j < XB; ++j) acc[b][j] = splat(bias ? bias[o0 + b] : 0.0f);
            for (int c = 0; c < cin; ++c) {
                const float* base = padded + c * pplane + static_cast<std::size_t>(y) * pw + x0;
                const float* wc = weight + (static_cast<std::size_t>(o0) * cin + c) * 9;
#pragma GCC unroll 8
                for (int ky = 0; ky < 3; ++ky) {
                    const float* row = base + ky * pw;
#pragma GCC unroll 8
                    for (int kx = 0; kx < 3; ++kx) {
                        v16f v[XB];
#pragma GCC unroll 8
                        for (int j = 0; j < XB; ++j) v[j] = load16(row + kx + 16 * j);
#pragma GCC unroll 8
                        for (int b = 0; b < OB; ++b) {
                            const float wv = wc[static_cast<std::size_t>(b) * cin * 9 + ky * 3 + kx];
#pragma GCC unroll 8
                            for (int j = 0; j < XB; ++j) acc[b][j] += v[j] * wv;
                        }
                    }
                }
            }
#pragma GCC unroll 8
            for (int b = 0; b < OB; ++b)
#pragma GCC unroll 8
                for (int j = 0; j < XB; ++j)
                    store16(out + (o0 + b) * plane + static_cast<std::size_t>(y) * w + x0 + 16 * j, acc[b][j]);
        }
}

template <int XB>
void forward_rows(const float* padded, int cin, int cout, int h, int w, const float* weight, const float* bias,
                  float* out)
{
    int o = 0;
    for (; o + 8 <= cout; o += 8) forward_block<8, XB>(padded, cin, h, w, weight, bias, o, out);
    for (; o + 4 <= cout; o += 4) forward_block<4, XB>(padded, cin, h, w, weight, bias, o, out);
    for (; o + 2 <= cout; o += 2) forward_block<2, XB>(padded, cin, h, w, weight, bias, o, out);
    for (; o < cout; ++o) forward_block<1, XB>(padded, cin, h, w, weight, bias, o, out);
}

/// out[o] = bias[o] + sum_c w[o,c] (*) padded[c]; weight layout (cout, cin, 3, 3).
inline void forward(const float* padded, int cin, int cout, int h, int w, const float* weight, const float* bias,
                    float* out)
{
    if (w % 32 == 0)
        forward_rows<2>(padded, cin, cout, h, w, weight, bias, out);
    else
        forward_rows<1>(padded, cin, cout, h, w, weight, bias, out);
}

/// Weight layout for the input-gradient pass: (cin, cout, 3, 3), spatially flipped.
inline std::vector<float> flip_transpose(const float* weight, int cin, int cout)
{
    std::vector<float> t(static_cast<std::size_t>(cin) * cout * 9);
    for (int o = 0; o < cout; ++o)
        for (int c = 0; c < cin; ++c)
            for (int k = 0; k < 9; ++k)
                t[(static_cast<std::size_t>(c) * cout + o) * 9 + (8 - k)] = weight[(static_cast<std::size_t>(o) * cin + c) * 9 + k];
    return t;
}

template <int OB>
void weight_grad_block(const float* padded, const float* gy, int cin, int h, int w, int o0, float* gweight)
{
    const int pw = w + 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t pplane = static_cast<std::size_t>(h + 2) * pw;
    for (int c = 0; c < cin; ++c) {
        v16f acc[OB][9];
#pragma GCC unroll 8
        for (int b = 0; b < OB; ++b)
#pragma GCC unroll 9
            for (int k = 0; k < 9; ++k) acc[b][k] = splat(0.0f);
        for (int y = 0; y < h; ++y)
            for (int x0 = 0; x0 < w; x0 += 16) {
                v16f g[OB];
                for (int b = 0; b < OB; ++b) g[b] = load16(gy + (o0 + b) * plane + static_cast<std::size_t>(y) * w + x0);
                const float* base = padded + c * pplane + static_cast<std::size_t>(y) * pw + x0;
#pragma GCC unroll 3
                for (int ky = 0; ky < 3; ++ky)
#pragma GCC unroll 3
                    for (int kx = 0; kx < 3; ++kx) {
                        const v16f v = load16(base + ky * pw + kx);
#pragma GCC unroll 8
                        for (int b = 0; b < OB; ++b) acc[b][ky * 3 + kx] += g[b] * v;
                    }
            }
#pragma GCC unroll 8
        for (int b = 0; b < OB; ++b)
#pragma GCC unroll 9
            for (int k = 0; k < 9; ++k)
                gweight[(static_cast<std::size_t>(o0 + b) * cin + c) * 9 + k] += hsum(acc[b][k]);
    }
}

/// gweight[o,c,ky,kx] += sum_{y,x} gy[o,y,x] padded[c,y+ky,x+kx]
inline void weight_grad(const float* padded, const float* gy, int cin, int cout, int h, int w, float* gweight)
{
    int o = 0;
    for (; o + 3 <= cout; o += 3) weight_grad_block<3>(padded, gy, cin, h, w, o, gweight);
    for (; o + 2 <= cout; o += 2) weight_grad_block<2>(padded, gy, cin, h, w, o, gweight);
    for (; o < cout; ++o) weight_grad_block<1>(padded, gy, cin, h, w, o, gweight);
}

}  // namespace pimd::nn::kernels

#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic pop
#endif
