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
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "pimd/core/errors.hpp"
#include "pimd/core/tensor.hpp"

namespace pimd {

/// Average precision with label 1 as the positive class. Scores are swept in
/// descending order; equal scores form one threshold group, and every
/// positive in a group is credited with the precision at the group's end.
inline double average_precision(std::span<const double> scores, std::span<const int> labels)
{
    detail::require(scores.size() == labels.size(), "average_precision: length mismatch");
    std::size_t positives = 0;
    for (int l : labels) {
        detail::require(l == 0 || l == 1, "average_precision: labels must be 0 or 1");
        positives += l == 1;
    }
    detail::require(positives > 0 && positives < labels.size(), "average_precision: need both classes");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i, group_pos = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) group_pos += labels[order[j++]] == 1;
        tp += group_pos;
        seen += j - i;
        ap += static_cast<double>(group_pos) * static_cast<double>(tp) / static_cast<double>(seen);
        i = j;
    }
    return ap / static_cast<double>(positives);
}

/// Largest threshold t with #{real < t} <= far_target * N. Scores below t are
/// flagged as manipulated, so this bounds the false-alarm rate on the reals.
inline double calibrate_threshold(std::span<const double> real_scores, double far_target)
{
    detail::require(!real_scores.empty(), "calibrate_threshold: empty input");
    detail::require(far_target > 0.0 && far_target < 1.0, "calibrate_threshold: far_target must be in (0, 1)");
    std::vector<double> sorted(real_scores.begin(), real_scores.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    // Allowed false alarms; the tiny slack absorbs products like 0.005 * 200.
    auto allowed = static_cast<std::size_t>(std::floor(far_target * n * (1.0 + 1e-12)));
    allowed = std::min(allowed, sorted.size() - 1);
    return sorted[allowed];
}

inline double tdr_at_threshold(std::span<const double> fake_scores, double threshold)
{
    detail::require(!fake_scores.empty(), "tdr: empty fake scores");
    std::size_t hit = 0;
    for (double s : fake_scores) hit += s < threshold;
    return static_cast<double>(hit) / static_cast<double>(fake_scores.size());
}

/// Fraction of manipulated scores strictly below the calibrated threshold.
inline double tdr_at_far(std::span<const double> real_scores, std::span<const double> fake_scores, double far)
{
    detail::require(!real_scores.empty() && !fake_scores.empty(), "tdr_at_far: empty inputs");
    return tdr_at_threshold(fake_scores, calibrate_threshold(real_scores, far));
}

/// 10 log10(1 / MSE) for peak 1.0; identical inputs give +infinity.
template <typename T>
double psnr(const Image<T>& a, const Image<T>& b)
{
    detail::require_shape(a.same_shape(b), "psnr: shape mismatch");
    detail::require(a.size() > 0, "psnr: empty images");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(static_cast<double>(a.size()) / se);
}

}  // namespace pimd
