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
#include <vector>

#include "pimd/core/errors.hpp"

namespace pimd::nn {

template <typename T>
struct ParamSlot {
    std::span<T> value;
    std::span<const T> grad;
};

/// Adaptive-moment optimizer over one parameter group with a single learning rate.
template <typename T>
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps)
    {
        detail::require(std::isfinite(lr) && lr >= 0.0, "Adam: learning rate must be finite and non-negative");
    }

    double learning_rate() const { return lr_; }
    long steps() const { return t_; }

    /// Slot layout must stay identical between calls.
    void step(std::span<const ParamSlot<T>> slots)
    {
        if (m_.empty()) {
            m_.resize(slots.size());
            v_.resize(slots.size());
            for (std::size_t i = 0; i < slots.size(); ++i) {
                m_[i].assign(slots[i].value.size(), 0.0);
                v_[i].assign(slots[i].value.size(), 0.0);
            }
        }
        detail::require(m_.size() == slots.size(), "Adam: parameter layout changed between steps");
        ++t_;
        if (lr_ == 0.0) return;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t s = 0; s < slots.size(); ++s) {
            auto& m = m_[s];
            auto& v = v_[s];
            const auto& g = slots[s].grad;
            auto& p = slots[s].value;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
                const double update = lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
                p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
            }
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace pimd::nn
