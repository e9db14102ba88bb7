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
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "pimd/core/cosine.hpp"
#include "pimd/core/errors.hpp"
#include "pimd/core/settings.hpp"
#include "pimd/core/tensor.hpp"
#include "pimd/fourier.hpp"
#include "pimd/template_set.hpp"

namespace pimd {

/// Clamp applied to max-cosine scores inside the log terms of the detection objective.
inline constexpr double kScoreEpsilon = 1e-7;

struct LossBreakdown {
    double j_m = 0.0;
    double j_r = 0.0;
    double j_c = 0.0;
    double j_s = 0.0;
    double j_p = 0.0;
    double total = 0.0;
    LossWeights weights;

    double weighted_sum() const
    {
        return weights.lambda1 * j_m + weights.lambda2 * j_r + weights.lambda3 * j_c + weights.lambda4 * j_s +
               weights.lambda5 * j_p;
    }
};

// ---- magnitude -------------------------------------------------------------

/// ||S||_2^2, summed over pixels.
template <typename T>
T magnitude_loss(const Plane<T>& s)
{
    T acc{0};
    for (T v : s.values()) acc += v * v;
    return acc;
}

template <typename T>
T magnitude_loss_backward(const Plane<T>& s, T upstream, std::span<T> grad)
{
    for (std::size_t i = 0; i < s.size(); ++i) grad[i] += T{2} * upstream * s[i];
    return magnitude_loss(s);
}

// ---- recovery --------------------------------------------------------------

/// 1 - Cos(S, S_R) on raw planes.
template <typename T>
T recovery_loss(const Plane<T>& s, const Plane<T>& recovered)
{
    detail::require_shape(s.same_shape(recovered), "recovery_loss: shape mismatch");
    return T{1} - cosine<T>(s.values(), recovered.values());
}

template <typename T>
T recovery_loss_backward(const Plane<T>& s, const Plane<T>& recovered, T upstream, std::span<T> grad_s,
                         std::span<T> grad_recovered)
{
    detail::require_shape(s.same_shape(recovered), "recovery_loss: shape mismatch");
    return T{1} - cosine_backward<T>(s.values(), recovered.values(), -upstream, grad_s, grad_recovered);
}

// ---- content ---------------------------------------------------------------

template <typename T>
T content_loss(const Plane<T>& s, const LowPassWindow<T>& window)
{
    return window.energy(s);
}

template <typename T>
T content_loss(const Plane<T>& s, FrequencyFilter filt)
{
    return lowpass_energy(s, filt);
}

// ---- separation ------------------------------------------------------------

template <typename T>
struct SeparationResult {
    T value{0};
    std::size_t argmax = 0;
};

/// max_i Cos(N(S_i), N(S_F)); ties go to the lowest index.
template <typename T>
SeparationResult<T> separation_loss(std::span<const Plane<T>> set, const Plane<T>& fake_recovered)
{
    detail::require(!set.empty(), "separation_loss: empty template set");
    const Plane<T> nf = minmax_normalize(fake_recovered);
    SeparationResult<T> r;
    for (std::size_t i = 0; i < set.size(); ++i) {
        detail::require_shape(set[i].same_shape(fake_recovered), "separation_loss: shape mismatch");
        const T c = cosine<T>(minmax_normalize(set[i]).values(), nf.values());
        if (i == 0 || c > r.value) r = {c, i};
    }
    return r;
}

template <typename T>
SeparationResult<T> separation_loss_backward(std::span<const Plane<T>> set, const Plane<T>& fake_recovered,
                                             T upstream, std::span<Plane<T>> grad_set,
                                             std::span<T> grad_fake)
{
    const auto r = separation_loss(set, fake_recovered);
    const Plane<T> ns = minmax_normalize(set[r.argmax]);
    const Plane<T> nf = minmax_normalize(fake_recovered);
    std::vector<T> gns(ns.size(), T{0}), gnf(nf.size(), T{0});
    cosine_backward<T>(ns.values(), nf.values(), upstream, gns, gnf);
    if (!grad_set.empty()) minmax_normalize_backward<T>(set[r.argmax], gns, grad_set[r.argmax].values());
    if (!grad_fake.empty()) minmax_normalize_backward<T>(fake_recovered, gnf, grad_fake);
    return r;
}

// ---- pairwise set distribution ----------------------------------------------

/// sum_{i<j} Cos(N(S_i), N(S_j)); 0 for a single template.
template <typename T>
T pairwise_set_loss(std::span<const Plane<T>> set)
{
    std::vector<Plane<T>> normed;
    normed.reserve(set.size());
    for (const auto& p : set) normed.push_back(minmax_normalize(p));
    T acc{0};
    for (std::size_t i = 0; i < normed.size(); ++i)
        for (std::size_t j = i + 1; j < normed.size(); ++j) acc += cosine<T>(normed[i].values(), normed[j].values());
    return acc;
}

template <typename T>
T pairwise_set_loss_backward(std::span<const Plane<T>> set, T upstream, std::span<Plane<T>> grad_set)
{
    const std::size_t n = set.size();
    std::vector<Plane<T>> normed, gnormed;
    normed.reserve(n);
    gnormed.reserve(n);
    for (const auto& p : set) {
        normed.push_back(minmax_normalize(p));
        gnormed.emplace_back(p.height(), p.width());
    }
    T acc{0};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            acc += cosine_backward<T>(normed[i].values(), normed[j].values(), upstream, gnormed[i].values(),
                                      gnormed[j].values());
    if (n > 1)
        for (std::size_t i = 0; i < n; ++i)
            minmax_normalize_backward<T>(set[i], gnormed[i].values(), grad_set[i].values());
    return acc;
}

// ---- weighted total ---------------------------------------------------------

/// Gradients of the weighted template-learning loss.
template <typename T>
struct TotalLossGrad {
    std::vector<Plane<T>> set;  // one per template
    Plane<T> recovered;         // d/dS_R
    Plane<T> fake_recovered;    // d/dS_F

    TotalLossGrad() = default;
    TotalLossGrad(std::size_t n, int h, int w) : set(n, Plane<T>(h, w)), recovered(h, w), fake_recovered(h, w) {}
};

namespace detail {

template <typename T>
void check_total_inputs(std::span<const Plane<T>> set, std::size_t selected, const Plane<T>& rec,
                        const Plane<T>& fake)
{
    require(!set.empty(), "total_loss: empty template set");
    require(selected < set.size(), "total_loss: selected index out of range");
    require_shape(set[selected].same_shape(rec) && rec.same_shape(fake), "total_loss: shape mismatch");
}

}  // namespace detail

/// Weighted sum of the five losses for one item. J_m, J_r and J_c apply to the
/// selected template; J_s to S_F; J_p to the whole set.
template <typename T>
LossBreakdown total_loss(std::span<const Plane<T>> set, std::size_t selected, const Plane<T>& recovered,
                         const Plane<T>& fake_recovered, const LossWeights& weights, const LowPassWindow<T>& window)
{
    detail::check_total_inputs(set, selected, recovered, fake_recovered);
    weights.validate();
    LossBreakdown b;
    b.weights = weights;
    b.j_m = static_cast<double>(magnitude_loss(set[selected]));
    b.j_r = static_cast<double>(recovery_loss(set[selected], recovered));
    b.j_c = static_cast<double>(content_loss(set[selected], window));
    b.j_s = static_cast<double>(separation_loss(set, fake_recovered).value);
    b.j_p = static_cast<double>(pairwise_set_loss(set));
    b.total = b.weighted_sum();
    return b;
}

template <typename T>
LossBreakdown total_loss(std::span<const Plane<T>> set, std::size_t selected, const Plane<T>& recovered,
                         const Plane<T>& fake_recovered, const LossWeights& weights, FrequencyFilter filt)
{
    detail::check_total_inputs(set, selected, recovered, fake_recovered);
    const LowPassWindow<T> window(recovered.height(), recovered.width(), filt);
    return total_loss(set, selected, recovered, fake_recovered, weights, window);
}

/// Evaluates the breakdown and accumulates upstream * dJ into grad. Terms with
/// zero weight are still evaluated for the log but contribute no gradient.
template <typename T>
LossBreakdown total_loss_backward(std::span<const Plane<T>> set, std::size_t selected, const Plane<T>& recovered,
                                  const Plane<T>& fake_recovered, const LossWeights& weights,
                                  const LowPassWindow<T>& window, T upstream, TotalLossGrad<T>& grad)
{
    detail::check_total_inputs(set, selected, recovered, fake_recovered);
    weights.validate();
    LossBreakdown b;
    b.weights = weights;
    const auto& s = set[selected];
    auto gs = grad.set[selected].values();
    const T l1 = static_cast<T>(weights.lambda1) * upstream, l2 = static_cast<T>(weights.lambda2) * upstream,
            l3 = static_cast<T>(weights.lambda3) * upstream, l4 = static_cast<T>(weights.lambda4) * upstream,
            l5 = static_cast<T>(weights.lambda5) * upstream;

    b.j_m = static_cast<double>(l1 != T{0} ? magnitude_loss_backward(s, l1, gs) : magnitude_loss(s));
    b.j_r = static_cast<double>(l2 != T{0} ? recovery_loss_backward(s, recovered, l2, gs, grad.recovered.values())
                                           : recovery_loss(s, recovered));
    b.j_c = static_cast<double>(l3 != T{0} ? window.energy_backward(s, l3, gs) : window.energy(s));
    b.j_s = static_cast<double>(
        l4 != T{0} ? separation_loss_backward(set, fake_recovered, l4, std::span<Plane<T>>(grad.set),
                                              grad.fake_recovered.values())
                         .value
                   : separation_loss(set, fake_recovered).value);
    b.j_p = static_cast<double>(l5 != T{0} ? pairwise_set_loss_backward(set, l5, std::span<Plane<T>>(grad.set))
                                           : pairwise_set_loss(set));
    b.total = b.weighted_sum();
    return b;
}

// ---- detection objective ----------------------------------------------------

/// Mean binary cross-entropy with the clamped max-cosine score as the
/// probability of "encrypted real" (label 1); label 0 is manipulated.
template <typename T>
T detection_objective(std::span<const T> max_scores, std::span<const int> labels)
{
    detail::require(max_scores.size() == labels.size(), "detection_objective: length mismatch");
    detail::require(!max_scores.empty(), "detection_objective: empty batch");
    const T eps = static_cast<T>(kScoreEpsilon);
    T acc{0};
    for (std::size_t j = 0; j < max_scores.size(); ++j) {
        const T p = std::clamp(max_scores[j], eps, T{1} - eps);
        acc -= labels[j] == 1 ? std::log(p) : std::log(T{1} - p);
    }
    return acc / static_cast<T>(max_scores.size());
}

/// d objective / d score; zero where the clamp is active.
template <typename T>
std::vector<T> detection_objective_grad(std::span<const T> max_scores, std::span<const int> labels)
{
    detail::require(max_scores.size() == labels.size(), "detection_objective: length mismatch");
    const T eps = static_cast<T>(kScoreEpsilon);
    const T inv_n = T{1} / static_cast<T>(max_scores.size());
    std::vector<T> g(max_scores.size(), T{0});
    for (std::size_t j = 0; j < max_scores.size(); ++j) {
        const T s = max_scores[j];
        if (s <= eps || s >= T{1} - eps) continue;
        g[j] = labels[j] == 1 ? -inv_n / s : inv_n / (T{1} - s);
    }
    return g;
}

// ---- passive baseline -------------------------------------------------------

using LogitPair = std::array<double, 2>;

/// Softmax cross-entropy averaged over the batch; label l selects logit l.
inline double passive_cross_entropy(std::span<const LogitPair> logits, std::span<const int> labels)
{
    detail::require(logits.size() == labels.size(), "passive_cross_entropy: length mismatch");
    detail::require(!logits.empty(), "passive_cross_entropy: empty batch");
    double acc = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        const double mx = std::max(logits[j][0], logits[j][1]);
        const double lse = mx + std::log(std::exp(logits[j][0] - mx) + std::exp(logits[j][1] - mx));
        acc += lse - logits[j][labels[j] == 1 ? 1 : 0];
    }
    return acc / static_cast<double>(logits.size());
}

inline std::vector<LogitPair> passive_cross_entropy_grad(std::span<const LogitPair> logits,
                                                         std::span<const int> labels)
{
    detail::require(logits.size() == labels.size(), "passive_cross_entropy: length mismatch");
    const double inv_n = 1.0 / static_cast<double>(logits.size());
    std::vector<LogitPair> g(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) {
        const double mx = std::max(logits[j][0], logits[j][1]);
        const double e0 = std::exp(logits[j][0] - mx), e1 = std::exp(logits[j][1] - mx);
        const double p1 = e1 / (e0 + e1);
        const double target1 = labels[j] == 1 ? 1.0 : 0.0;
        g[j] = {inv_n * ((1.0 - p1) - (1.0 - target1)), inv_n * (p1 - target1)};
    }
    return g;
}

}  // namespace pimd
