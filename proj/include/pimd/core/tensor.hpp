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
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pimd/core/errors.hpp"

namespace pimd {

/// Default side length of images and templates.
inline constexpr int kImageSide = 128;

/// Single-channel H x W grid, row-major. Templates and recovered templates are planes.
template <typename T>
class Plane {
public:
    Plane() = default;
    Plane(int height, int width, T fill = T{0}) : height_(height), width_(width), values_(size_of(height, width), fill) {}
    Plane(int height, int width, std::vector<T> values) : height_(height), width_(width), values_(std::move(values))
    {
        detail::require_shape(values_.size() == size_of(height, width), "Plane: value count does not match shape");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return values_.size(); }
    bool same_shape(const Plane& o) const { return height_ == o.height_ && width_ == o.width_; }

    T& operator()(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    const T& operator()(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    T& operator[](std::size_t i) { return values_[i]; }
    const T& operator[](std::size_t i) const { return values_[i]; }

    std::span<T> values() { return values_; }
    std::span<const T> values() const { return values_; }
    std::vector<T>& storage() { return values_; }
    const std::vector<T>& storage() const { return values_; }

    template <typename U>
    Plane<U> cast() const
    {
        return Plane<U>(height_, width_, std::vector<U>(values_.begin(), values_.end()));
    }

    friend bool operator==(const Plane&, const Plane&) = default;

private:
    static std::size_t size_of(int h, int w)
    {
        detail::require_shape(h >= 0 && w >= 0, "Plane: negative dimension");
        return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<T> values_;
};

/// C x H x W image, channel-major. RGB images have values nominally in [0, 1].
template <typename T>
class Image {
public:
    Image() = default;
    Image(int channels, int height, int width, T fill = T{0})
        : channels_(channels), height_(height), width_(width),
          values_(static_cast<std::size_t>(channels) * height * width, fill)
    {
        detail::require_shape(channels >= 0 && height >= 0 && width >= 0, "Image: negative dimension");
    }
    Image(int channels, int height, int width, std::vector<T> values)
        : channels_(channels), height_(height), width_(width), values_(std::move(values))
    {
        detail::require_shape(values_.size() == static_cast<std::size_t>(channels) * height * width,
                              "Image: value count does not match shape");
    }

    int channels() const { return channels_; }
    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return values_.size(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
    bool same_shape(const Image& o) const
    {
        return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
    }

    T& operator()(int c, int y, int x) { return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
    const T& operator()(int c, int y, int x) const
    {
        return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }
    T& operator[](std::size_t i) { return values_[i]; }
    const T& operator[](std::size_t i) const { return values_[i]; }

    std::span<T> channel(int c) { return std::span<T>(values_).subspan(c * plane_size(), plane_size()); }
    std::span<const T> channel(int c) const
    {
        return std::span<const T>(values_).subspan(c * plane_size(), plane_size());
    }

    std::span<T> values() { return values_; }
    std::span<const T> values() const { return values_; }
    std::vector<T>& storage() { return values_; }
    const std::vector<T>& storage() const { return values_; }

    template <typename U>
    Image<U> cast() const
    {
        return Image<U>(channels_, height_, width_, std::vector<U>(values_.begin(), values_.end()));
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<T> values_;
};

/// N x C x H x W activation batch used inside the networks.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    Tensor(int n, int c, int h, int w, T fill = T{0})
        : n_(n), c_(c), h_(h), w_(w), data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }
    std::size_t size() const { return data_.size(); }
    std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }
    bool same_shape(const Tensor& o) const { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T* sample(int i) { return data_.data() + i * sample_size(); }
    const T* sample(int i) const { return data_.data() + i * sample_size(); }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& at(int i, int c, int y, int x) { return data_[((static_cast<std::size_t>(i) * c_ + c) * h_ + y) * w_ + x]; }
    const T& at(int i, int c, int y, int x) const
    {
        return data_[((static_cast<std::size_t>(i) * c_ + c) * h_ + y) * w_ + x];
    }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    /// Stack images of identical shape into a batch.
    static Tensor stack(std::span<const Image<T>> images)
    {
        detail::require_shape(!images.empty(), "Tensor::stack: empty batch");
        const auto& f = images.front();
        Tensor t(static_cast<int>(images.size()), f.channels(), f.height(), f.width());
        for (std::size_t i = 0; i < images.size(); ++i) {
            detail::require_shape(images[i].same_shape(f), "Tensor::stack: images differ in shape");
            std::copy(images[i].storage().begin(), images[i].storage().end(), t.sample(static_cast<int>(i)));
        }
        return t;
    }

    Image<T> image(int i) const
    {
        return Image<T>(c_, h_, w_, std::vector<T>(sample(i), sample(i) + sample_size()));
    }

    /// Sample i of a single-channel batch as a plane.
    Plane<T> plane(int i) const
    {
        detail::require_shape(c_ == 1, "Tensor::plane: batch is not single-channel");
        return Plane<T>(h_, w_, std::vector<T>(sample(i), sample(i) + sample_size()));
    }

private:
    int n_ = 0;
    int c_ = 0;
    int h_ = 0;
    int w_ = 0;
    std::vector<T> data_;
};

template <typename T>
bool all_finite(std::span<const T> v)
{
    return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

}  // namespace pimd
