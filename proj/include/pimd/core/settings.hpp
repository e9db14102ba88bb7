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

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "pimd/core/errors.hpp"

namespace pimd {

/// Names of the five template-learning losses, in weight order.
enum class LossTerm { magnitude, recovery, content, separation, pairwise };

inline constexpr std::array<std::string_view, 5> kLossTermNames = {"J_m", "J_r", "J_c", "J_s", "J_p"};

inline LossTerm parse_loss_term(std::string_view name)
{
    for (std::size_t i = 0; i < kLossTermNames.size(); ++i)
        if (kLossTermNames[i] == name) return static_cast<LossTerm>(i);
    throw InvalidArgument("unknown loss name '" + std::string(name) + "' (expected J_m, J_r, J_c, J_s or J_p)");
}

inline std::string_view to_string(LossTerm t) { return kLossTermNames[static_cast<std::size_t>(t)]; }

/// Weights of the magnitude, recovery, content, separation and pairwise losses.
struct LossWeights {
    double lambda1 = 100.0;
    double lambda2 = 30.0;
    double lambda3 = 5.0;
    double lambda4 = 0.003;
    double lambda5 = 10.0;

    double& operator[](LossTerm t)
    {
        switch (t) {
        case LossTerm::magnitude: return lambda1;
        case LossTerm::recovery: return lambda2;
        case LossTerm::content: return lambda3;
        case LossTerm::separation: return lambda4;
        case LossTerm::pairwise: return lambda5;
        }
        return lambda1;
    }
    double operator[](LossTerm t) const { return const_cast<LossWeights&>(*this)[t]; }

    void validate() const
    {
        for (double l : {lambda1, lambda2, lambda3, lambda4, lambda5})
            detail::require(std::isfinite(l) && l >= 0.0, "LossWeights: weights must be finite and non-negative");
    }

    static LossWeights zero() { return {0, 0, 0, 0, 0}; }

    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct EncryptConfig {
    double strength = 0.30;
    bool clamp_on_export = false;

    void validate() const
    {
        detail::require(std::isfinite(strength) && strength >= 0.0 && strength <= 1.0,
                        "EncryptConfig: strength must lie in [0, 1]");
    }
};

/// Centered k x k low-pass window over a shifted 2D spectrum.
struct FrequencyFilter {
    int k = 50;

    void validate(int side) const
    {
        detail::require(k >= 1 && k <= side, "FrequencyFilter: k must lie in [1, side]");
    }
};

}  // namespace pimd
