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
#include <span>

#include "pimd/core/errors.hpp"

namespace pimd {

/// Cos(a, b) on flattened values; 0 when either norm vanishes.
template <typename T>
T cosine(std::span<const T> a, std::span<const T> b)
{
    detail::require_shape(a.size() == b.size(), "cosine: length mismatch");
    T dot{0}, na{0}, nb{0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == T{0} || nb == T{0}) return T{0};
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Accumulates upstream * dCos/da into grad_a and upstream * dCos/db into grad_b
/// (either span may be empty to skip it). Returns the cosine.
template <typename T>
T cosine_backward(std::span<const T> a, std::span<const T> b, T upstream, std::span<T> grad_a, std::span<T> grad_b)
{
    detail::require_shape(a.size() == b.size(), "cosine_backward: length mismatch");
    T dot{0}, na{0}, nb{0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == T{0} || nb == T{0}) return T{0};
    const T norm_a = std::sqrt(na), norm_b = std::sqrt(nb);
    const T c = dot / (norm_a * norm_b);
    const T inv = upstream / (norm_a * norm_b);
    if (!grad_a.empty()) {
        const T ka = upstream * c / na;
        for (std::size_t i = 0; i < a.size(); ++i) grad_a[i] += inv * b[i] - ka * a[i];
    }
    if (!grad_b.empty()) {
        const T kb = upstream * c / nb;
        for (std::size_t i = 0; i < b.size(); ++i) grad_b[i] += inv * a[i] - kb * b[i];
    }
    return c;
}

}  // namespace pimd
