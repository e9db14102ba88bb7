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
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pimd/core/errors.hpp"
#include "pimd/core/rng.hpp"
#include "pimd/core/tensor.hpp"
#include "pimd/nn/conv_kernels.hpp"

namespace pimd::nn {

enum class Mode { train, eval };

/// A named tensor with its gradient accumulator. Buffers (batch-norm running
/// statistics) use the same type but are never handed to the optimizer.
template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;

    Param() = default;
    Param(std::string n, std::vector<int> s, T fill = T{0}) : name(std::move(n)), shape(std::move(s))
    {
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        value.assign(count, fill);
        grad.assign(count, T{0});
    }

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }
};

/// N(0, gain^2 / fan_in) weights.
template <typename T>
void fan_in_init(Param<T>& w, int fan_in, RngStream& rng, double gain = std::sqrt(2.0))
{
    const double sd = gain / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : w.value) v = static_cast<T>(sd * rng.normal());
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// 16 independent partial sums so the loops vectorize.
template <typename T>
double lane_sum(const T* p, std::size_t n)
{
    T acc[16] = {};
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16)
        for (int l = 0; l < 16; ++l) acc[l] += p[j + l];
    double s = 0;
    for (int l = 0; l < 16; ++l) s += acc[l];
    for (; j < n; ++j) s += p[j];
    return s;
}

template <typename T>
double lane_sq_dev(const T* p, std::size_t n, T center)
{
    T acc[16] = {};
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16)
        for (int l = 0; l < 16; ++l) acc[l] += (p[j + l] - center) * (p[j + l] - center);
    double s = 0;
    for (int l = 0; l < 16; ++l) s += acc[l];
    for (; j < n; ++j) s += static_cast<double>(p[j] - center) * (p[j] - center);
    return s;
}

/// 2D convolution (cross-correlation) with zero padding, lowered to GEMM.

template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(const std::string& name, int in, int out, int kernel, int stride = 1, int pad = -1)
        : weight(name + ".weight", {out, in, kernel, kernel}), bias(name + ".bias", {out}), in_(in), out_(out),
          k_(kernel), stride_(stride), pad_(pad < 0 ? kernel / 2 : pad)
    {
    }

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    int out_size(int n) const { return (n + 2 * pad_ - k_) / stride_ + 1; }

    void init(RngStream& rng, double gain = std::sqrt(2.0))
    {
        fan_in_init(weight, in_ * k_ * k_, rng, gain);
        std::fill(bias.value.begin(), bias.value.end(), T{0});
    }

    Tensor<T> forward(const Tensor<T>& x) const
    {
        detail::require_shape(x.c() == in_, "Conv2d(" + weight.name + "): channel mismatch");
        const int ho = out_size(x.h()), wo = out_size(x.w());
        Tensor<T> y(x.n(), out_, ho, wo);
        const int kk = in_ * k_ * k_;
        const CMapMat<T> w(weight.value.data(), out_, kk);
        if constexpr (std::is_same_v<T, float>) {
            if (kernels::supports(k_, stride_, pad_, x.w())) {
                std::vector<float> padded;
                for (int i = 0; i < x.n(); ++i) {
                    kernels::pad1(x.sample(i), in_, x.h(), x.w(), padded);
                    kernels::forward(padded.data(), in_, out_, x.h(), x.w(), weight.value.data(), bias.value.data(),
                                     y.sample(i));
                }
                return y;
            }
        }
        std::vector<T> col(static_cast<std::size_t>(kk) * ho * wo);
        for (int i = 0; i < x.n(); ++i) {
            const T* src = x.sample(i);
            const T* col_ptr = src;
            if (!is_pointwise()) {
                im2col(src, x.h(), x.w(), ho, wo, col.data());
                col_ptr = col.data();
            }
            MapMat<T> out(y.sample(i), out_, ho * wo);
            out.noalias() = w * CMapMat<T>(col_ptr, kk, ho * wo);
            for (int o = 0; o < out_; ++o) out.row(o).array() += bias.value[o];
        }
        return y;
    }

    /// Accumulates weight/bias gradients; returns dL/dx when need_input_grad.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy, bool need_input_grad = true)
    {
        accumulate_grads(x, gy);
        return need_input_grad ? input_grad(gy, x.h(), x.w()) : Tensor<T>{};
    }

    void accumulate_grads(const Tensor<T>& x, const Tensor<T>& gy)
    {
        const int ho = gy.h(), wo = gy.w();
        const std::size_t plane = static_cast<std::size_t>(ho) * wo;
        for (int i = 0; i < x.n(); ++i)
            for (int o = 0; o < out_; ++o) bias.grad[o] += static_cast<T>(lane_sum(gy.sample(i) + o * plane, plane));
        if constexpr (std::is_same_v<T, float>) {
            if (kernels::supports(k_, stride_, pad_, x.w())) {
                std::vector<float> padded;
                for (int i = 0; i < x.n(); ++i) {
                    kernels::pad1(x.sample(i), in_, x.h(), x.w(), padded);
                    kernels::weight_grad(padded.data(), gy.sample(i), in_, out_, ho, wo, weight.grad.data());
                }
                return;
            }
        }
        const int kk = in_ * k_ * k_;
        MapMat<T> gw(weight.grad.data(), out_, kk);
        std::vector<T> col(is_pointwise() ? 0 : static_cast<std::size_t>(kk) * plane);
        for (int i = 0; i < x.n(); ++i) {
            const T* col_ptr = x.sample(i);
            if (!is_pointwise()) {
                im2col(x.sample(i), x.h(), x.w(), ho, wo, col.data());
                col_ptr = col.data();
            }
            gw.noalias() += CMapMat<T>(gy.sample(i), out_, ho * wo) * CMapMat<T>(col_ptr, kk, ho * wo).transpose();
        }
    }

    /// dL/dx for an input of spatial size (h, w); reads weights only.
    Tensor<T> input_grad(const Tensor<T>& gy, int h, int w) const
    {
        const int ho = gy.h(), wo = gy.w();
        Tensor<T> gx(gy.n(), in_, h, w);
        if constexpr (std::is_same_v<T, float>) {
            if (kernels::supports(k_, stride_, pad_, w)) {
                const std::vector<float> wt = kernels::flip_transpose(weight.value.data(), in_, out_);
                std::vector<float> padded;
                for (int i = 0; i < gy.n(); ++i) {
                    kernels::pad1(gy.sample(i), out_, ho, wo, padded);
                    kernels::forward(padded.data(), out_, in_, ho, wo, wt.data(), nullptr, gx.sample(i));
                }
                return gx;
            }
        }
        const int kk = in_ * k_ * k_;
        const CMapMat<T> wm(weight.value.data(), out_, kk);
        std::vector<T> gcol(is_pointwise() ? 0 : static_cast<std::size_t>(kk) * ho * wo);
        for (int i = 0; i < gy.n(); ++i) {
            const CMapMat<T> g(gy.sample(i), out_, ho * wo);
            if (is_pointwise()) {
                MapMat<T>(gx.sample(i), kk, ho * wo).noalias() = wm.transpose() * g;
            } else {
                MapMat<T>(gcol.data(), kk, ho * wo).noalias() = wm.transpose() * g;
                col2im(gcol.data(), h, w, ho, wo, gx.sample(i));
            }
        }
        return gx;
    }

    Param<T> weight;
    Param<T> bias;

private:
    bool is_pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

    void im2col(const T* src, int h, int w, int ho, int wo, T* col) const
    {
        for (int c = 0; c < in_; ++c)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    T* row = col + (static_cast<std::size_t>(c * k_ + ky) * k_ + kx) * ho * wo;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        T* dst = row + static_cast<std::size_t>(oy) * wo;
                        if (iy < 0 || iy >= h) {
                            std::fill(dst, dst + wo, T{0});
                            continue;
                        }
                        const T* s = src + (static_cast<std::size_t>(c) * h + iy) * w;
                        if (stride_ == 1) {
                            const int shift = kx - pad_;
                            const int lo = std::max(0, -shift), hi = std::min(wo, w - shift);
                            std::fill(dst, dst + std::max(lo, 0), T{0});
                            if (hi > lo) std::copy(s + lo + shift, s + hi + shift, dst + lo);
                            std::fill(dst + std::max(hi, lo), dst + wo, T{0});
                        } else {
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox * stride_ - pad_ + kx;
                                dst[ox] = (ix >= 0 && ix < w) ? s[ix] : T{0};
                            }
                        }
                    }
                }
    }

    void col2im(const T* col, int h, int w, int ho, int wo, T* dst) const
    {
        for (int c = 0; c < in_; ++c)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    const T* row = col + (static_cast<std::size_t>(c * k_ + ky) * k_ + kx) * ho * wo;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= h) continue;
                        const T* s = row + static_cast<std::size_t>(oy) * wo;
                        T* d = dst + (static_cast<std::size_t>(c) * h + iy) * w;
                        if (stride_ == 1) {
                            const int shift = kx - pad_;
                            const int lo = std::max(0, -shift), hi = std::min(wo, w - shift);
                            for (int ox = lo; ox < hi; ++ox) d[ox + shift] += s[ox];
                        } else {
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix >= 0 && ix < w) d[ix] += s[ox];
                            }
                        }
                    }
                }
    }

    int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
};

/// Per-channel batch normalization. Train mode normalizes with batch
/// statistics (biased variance) and updates running statistics with the
/// unbiased variance; eval mode uses the running statistics.
template <typename T>
class BatchNorm2d {
public:
    struct Cache {
        Tensor<T> xhat;
        std::vector<T> inv_std;
        bool train = false;
    };

    BatchNorm2d() = default;
    BatchNorm2d(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5)
        : gamma(name + ".weight", {channels}, T{1}), beta(name + ".bias", {channels}),
          running_mean(name + ".running_mean", {channels}), running_var(name + ".running_var", {channels}, T{1}),
          channels_(channels), momentum_(momentum), eps_(eps)
    {
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Cache* cache)
    {
        detail::require_shape(x.c() == channels_, "BatchNorm2d(" + gamma.name + "): channel mismatch");
        const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
        const std::size_t count = hw * x.n();
        Tensor<T> y(x.n(), x.c(), x.h(), x.w());
        if (cache) {
            cache->train = mode == Mode::train;
            cache->inv_std.assign(channels_, T{0});
            cache->xhat = Tensor<T>(x.n(), x.c(), x.h(), x.w());
        }
        for (int c = 0; c < channels_; ++c) {
            double mean, var;
            if (mode == Mode::train) {
                double s = 0;
                for (int i = 0; i < x.n(); ++i) s += lane_sum(x.sample(i) + c * hw, hw);
                mean = s / static_cast<double>(count);
                double s2 = 0;
                for (int i = 0; i < x.n(); ++i) s2 += lane_sq_dev(x.sample(i) + c * hw, hw, static_cast<T>(mean));
                var = s2 / static_cast<double>(count);
                const double unbiased = count > 1 ? s2 / static_cast<double>(count - 1) : 0.0;
                running_mean.value[c] = static_cast<T>((1 - momentum_) * running_mean.value[c] + momentum_ * mean);
                running_var.value[c] = static_cast<T>((1 - momentum_) * running_var.value[c] + momentum_ * unbiased);
            } else {
                mean = running_mean.value[c];
                var = running_var.value[c];
            }
            const T is = static_cast<T>(1.0 / std::sqrt(var + eps_));
            const T mu = static_cast<T>(mean), g = gamma.value[c], b = beta.value[c];
            if (cache) cache->inv_std[c] = is;
            for (int i = 0; i < x.n(); ++i) {
                const T* p = x.sample(i) + c * hw;
                T* q = y.sample(i) + c * hw;
                if (cache) {
                    T* h = cache->xhat.sample(i) + c * hw;
                    for (std::size_t j = 0; j < hw; ++j) {
                        h[j] = (p[j] - mu) * is;
                        q[j] = h[j] * g + b;
                    }
                } else {
                    for (std::size_t j = 0; j < hw; ++j) q[j] = (p[j] - mu) * is * g + b;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Cache& cache, const Tensor<T>& gy)
    {
        const std::size_t hw = static_cast<std::size_t>(gy.h()) * gy.w();
        const double count = static_cast<double>(hw * gy.n());
        Tensor<T> gx(gy.n(), gy.c(), gy.h(), gy.w());
        for (int c = 0; c < channels_; ++c) {
            double sg = 0, sgx = 0;
            for (int i = 0; i < gy.n(); ++i) {
                const T* g = gy.sample(i) + c * hw;
                const T* h = cache.xhat.sample(i) + c * hw;
                T a[16] = {}, b[16] = {};
                std::size_t j = 0;
                for (; j + 16 <= hw; j += 16)
                    for (int l = 0; l < 16; ++l) {
                        a[l] += g[j + l];
                        b[l] += g[j + l] * h[j + l];
                    }
                for (; j < hw; ++j) {
                    sg += g[j];
                    sgx += g[j] * h[j];
                }
                for (int l = 0; l < 16; ++l) {
                    sg += a[l];
                    sgx += b[l];
                }
            }
            beta.grad[c] += static_cast<T>(sg);
            gamma.grad[c] += static_cast<T>(sgx);
            const T scale = gamma.value[c] * cache.inv_std[c];
            for (int i = 0; i < gy.n(); ++i) {
                const T* g = gy.sample(i) + c * hw;
                const T* h = cache.xhat.sample(i) + c * hw;
                T* d = gx.sample(i) + c * hw;
                if (cache.train) {
                    const T mg = static_cast<T>(sg / count), mgx = static_cast<T>(sgx / count);
                    for (std::size_t j = 0; j < hw; ++j) d[j] = scale * (g[j] - mg - h[j] * mgx);
                } else {
                    for (std::size_t j = 0; j < hw; ++j) d[j] = scale * g[j];
                }
            }
        }
        return gx;
    }

    Param<T> gamma, beta, running_mean, running_var;

private:
    int channels_ = 0;
    double momentum_ = 0.1;
    double eps_ = 1e-5;
};

template <typename T>
void relu_inplace(Tensor<T>& x)
{
    for (auto& v : x.storage()) v = v > T{0} ? v : T{0};
}

/// Masks gy by the post-activation output (a > 0 iff its input was > 0).
template <typename T>
void relu_backward_inplace(const Tensor<T>& activated, Tensor<T>& gy)
{
    for (std::size_t i = 0; i < gy.size(); ++i)
        if (!(activated[i] > T{0})) gy[i] = T{0};
}

/// Fully connected layer on (N, in) rows.
template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, int in, int out)
        : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), in_(in), out_(out) {}

    void init(RngStream& rng, double gain = std::sqrt(2.0))
    {
        fan_in_init(weight, in_, rng, gain);
        std::fill(bias.value.begin(), bias.value.end(), T{0});
    }

    RowMat<T> forward(const RowMat<T>& x) const
    {
        detail::require_shape(x.cols() == in_, "Linear(" + weight.name + "): width mismatch");
        RowMat<T> y = x * CMapMat<T>(weight.value.data(), out_, in_).transpose();
        for (int i = 0; i < y.rows(); ++i)
            for (int o = 0; o < out_; ++o) y(i, o) += bias.value[o];
        return y;
    }

    RowMat<T> backward(const RowMat<T>& x, const RowMat<T>& gy)
    {
        MapMat<T>(weight.grad.data(), out_, in_).noalias() += gy.transpose() * x;
        for (int i = 0; i < gy.rows(); ++i)
            for (int o = 0; o < out_; ++o) bias.grad[o] += gy(i, o);
        return gy * CMapMat<T>(weight.value.data(), out_, in_);
    }

    Param<T> weight, bias;

private:
    int in_ = 0, out_ = 0;
};

}  // namespace pimd::nn
