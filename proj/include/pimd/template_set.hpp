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
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pimd/core/binary_io.hpp"
#include "pimd/core/cosine.hpp"
#include "pimd/core/errors.hpp"
#include "pimd/core/hash.hpp"
#include "pimd/core/rng.hpp"
#include "pimd/core/settings.hpp"
#include "pimd/core/tensor.hpp"

namespace pimd {

/// The learned set of n single-channel templates. Read-only once built;
/// training works on its own copy of the planes and constructs a new set.
class TemplateSet {
public:
    static constexpr std::uint16_t kFormatVersion = 1;

    TemplateSet() = default;
    TemplateSet(std::vector<Plane<float>> planes, std::uint64_t seed) : planes_(std::move(planes)), seed_(seed)
    {
        detail::require(!planes_.empty(), "TemplateSet: n must be at least 1");
        for (const auto& p : planes_) {
            detail::require_shape(p.same_shape(planes_.front()), "TemplateSet: planes differ in shape");
            detail::require(all_finite(p.values()), "TemplateSet: non-finite template value");
        }
    }

    std::size_t size() const { return planes_.size(); }
    bool empty() const { return planes_.empty(); }
    int height() const { return planes_.empty() ? 0 : planes_.front().height(); }
    int width() const { return planes_.empty() ? 0 : planes_.front().width(); }
    std::uint64_t seed() const { return seed_; }
    std::uint16_t version() const { return kFormatVersion; }

    const Plane<float>& operator[](std::size_t i) const { return planes_.at(i); }
    std::span<const Plane<float>> planes() const { return planes_; }

    /// FNV-1a over the raw float payload.
    std::uint64_t checksum() const
    {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (const auto& p : planes_)
            h = fnv1a({reinterpret_cast<const char*>(p.storage().data()), p.size() * sizeof(float)}, h);
        return h;
    }

    friend bool operator==(const TemplateSet&, const TemplateSet&) = default;

private:
    std::vector<Plane<float>> planes_;
    std::uint64_t seed_ = 0;
};

/// n planes of i.i.d. U[0, 1) values drawn from rng.
inline TemplateSet init_template_set(int n, int side, RngStream& rng)
{
    detail::require(n >= 1, "init_template_set: n must be at least 1");
    detail::require(side >= 2, "init_template_set: side must be at least 2");
    const std::uint64_t seed = rng.seed();
    std::vector<Plane<float>> planes;
    planes.reserve(n);
    for (int i = 0; i < n; ++i) {
        Plane<float> p(side, side);
        // rounding to float could otherwise produce exactly 1
        for (auto& v : p.values()) v = std::min(static_cast<float>(rng.uniform()), std::nextafter(1.0f, 0.0f));
        planes.push_back(std::move(p));
    }
    return TemplateSet(std::move(planes), seed);
}

/// Uniform index in [0, n).
inline std::size_t select_index(std::size_t n, RngStream& rng)
{
    detail::require(n >= 1, "select_template: empty template set");
    return static_cast<std::size_t>(rng.below(n));
}

inline std::pair<std::size_t, const Plane<float>&> select_template(const TemplateSet& set, RngStream& rng)
{
    const std::size_t i = select_index(set.size(), rng);
    return {i, set[i]};
}

/// X + m * S with S broadcast over channels. Clamped to [0, 1] only when
/// cfg.clamp_on_export is set.
template <typename T>
Image<T> encrypt(const Image<T>& image, const Plane<T>& templ, const EncryptConfig& cfg)
{
    cfg.validate();
    detail::require_shape(image.height() == templ.height() && image.width() == templ.width(),
                          "encrypt: template and image sizes differ");
    Image<T> out = image;
    const T m = static_cast<T>(cfg.strength);
    const std::size_t hw = image.plane_size();
    for (int c = 0; c < image.channels(); ++c) {
        auto ch = out.channel(c);
        for (std::size_t i = 0; i < hw; ++i) ch[i] += m * templ[i];
    }
    if (cfg.clamp_on_export)
        for (auto& v : out.values()) v = std::clamp(v, T{0}, T{1});
    return out;
}

/// Min-max normalization N(S) = (S - min S) / (max S - min S). A constant plane maps to zeros.
template <typename T>
Plane<T> minmax_normalize(const Plane<T>& s)
{
    Plane<T> out(s.height(), s.width());
    if (s.size() == 0) return out;
    const auto [lo, hi] = std::minmax_element(s.storage().begin(), s.storage().end());
    const T range = *hi - *lo;
    if (!(range > T{0})) return out;
    const T base = *lo;
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - base) / range;
    return out;
}

/// Pullback of an upstream gradient through minmax_normalize, accumulated into grad_s.
/// The min and max act through the (first) argmin/argmax pixel.
template <typename T>
void minmax_normalize_backward(const Plane<T>& s, std::span<const T> upstream, std::span<T> grad_s)
{
    if (s.size() == 0) return;
    const auto lo_it = std::min_element(s.storage().begin(), s.storage().end());
    const auto hi_it = std::max_element(s.storage().begin(), s.storage().end());
    const T range = *hi_it - *lo_it;
    if (!(range > T{0})) return;
    const auto amin = static_cast<std::size_t>(lo_it - s.storage().begin());
    const auto amax = static_cast<std::size_t>(hi_it - s.storage().begin());
    T sum_g{0}, sum_gn{0};
    for (std::size_t i = 0; i < s.size(); ++i) {
        sum_g += upstream[i];
        sum_gn += upstream[i] * (s[i] - *lo_it) / range;
    }
    for (std::size_t i = 0; i < s.size(); ++i) grad_s[i] += upstream[i] / range;
    grad_s[amin] += (sum_gn - sum_g) / range;
    grad_s[amax] -= sum_gn / range;
}

struct PairCosine {
    std::size_t i = 0;
    std::size_t j = 0;
    double cosine = 0.0;
};

struct PairwiseCosineStats {
    std::vector<PairCosine> pairs;  // i < j, row-major order
    double mean = 0.0;
};

/// Cos(N(S_i), N(S_j)) for every pair i < j and their mean (0 when n = 1).
template <typename T>
PairwiseCosineStats pairwise_cosine_stats(std::span<const Plane<T>> planes)
{
    PairwiseCosineStats stats;
    std::vector<Plane<T>> normed;
    normed.reserve(planes.size());
    for (const auto& p : planes) normed.push_back(minmax_normalize(p));
    double sum = 0.0;
    for (std::size_t i = 0; i < normed.size(); ++i)
        for (std::size_t j = i + 1; j < normed.size(); ++j) {
            const double c = static_cast<double>(cosine<T>(normed[i].values(), normed[j].values()));
            stats.pairs.push_back({i, j, c});
            sum += c;
        }
    if (!stats.pairs.empty()) stats.mean = sum / static_cast<double>(stats.pairs.size());
    return stats;
}

inline PairwiseCosineStats pairwise_cosine_stats(const TemplateSet& set) { return pairwise_cosine_stats(set.planes()); }

// Template-set file:
//   "PIMD" | u16 version | u32 n | u32 height | u32 width | n*H*W f32 (row-major, template-major) | u64 seed
// All little-endian.
inline void write_template_set(std::ostream& os, const TemplateSet& set)
{
    binio::put_magic(os, "PIMD");
    binio::put_uint<std::uint16_t>(os, TemplateSet::kFormatVersion);
    binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(set.size()));
    binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(set.height()));
    binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(set.width()));
    for (const auto& p : set.planes())
        for (float v : p.values()) binio::put_f32(os, v);
    binio::put_uint<std::uint64_t>(os, set.seed());
}

inline TemplateSet read_template_set(std::istream& is)
{
    binio::expect_magic(is, "PIMD");
    const auto version = binio::get_uint<std::uint16_t>(is);
    if (version != TemplateSet::kFormatVersion)
        throw FormatError("unsupported template-set format version " + std::to_string(version));
    const auto n = binio::get_uint<std::uint32_t>(is);
    const auto h = binio::get_uint<std::uint32_t>(is);
    const auto w = binio::get_uint<std::uint32_t>(is);
    if (n == 0 || h == 0 || w == 0 || static_cast<std::uint64_t>(n) * h * w > (1ULL << 31))
        throw FormatError("implausible template-set header");
    std::vector<Plane<float>> planes;
    planes.reserve(n);
    for (std::uint32_t t = 0; t < n; ++t) {
        Plane<float> p(static_cast<int>(h), static_cast<int>(w));
        for (auto& v : p.values()) v = binio::get_f32(is);
        planes.push_back(std::move(p));
    }
    const auto seed = binio::get_uint<std::uint64_t>(is);
    try {
        return TemplateSet(std::move(planes), seed);
    } catch (const InvalidArgument& e) {
        throw FormatError(e.what());
    }
}

inline void save_template_set(const std::filesystem::path& path, const TemplateSet& set)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    write_template_set(os, set);
    if (!os) throw FormatError("write failed: " + path.string());
}

inline TemplateSet load_template_set(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open template set " + path.string());
    return read_template_set(is);
}

}  // namespace pimd
