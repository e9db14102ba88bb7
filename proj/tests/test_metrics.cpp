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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <set>

#include "helpers.hpp"
#include "pimd/metrics.hpp"

using namespace pimd;
using Catch::Approx;

namespace {

// Precision at every distinct threshold, averaged over the positives.
double ap_oracle(const std::vector<double>& s, const std::vector<int>& y)
{
    double total = 0;
    int pos = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        ++pos;
        int above = 0, tp = 0;
        for (std::size_t j = 0; j < s.size(); ++j)
            if (s[j] >= s[i]) {
                ++above;
                tp += y[j] == 1;
            }
        total += static_cast<double>(tp) / above;
    }
    return total / pos;
}

// Every real score is a candidate threshold; keep the largest one that flags
// at most far * N reals.
double tdr_oracle(const std::vector<double>& real, const std::vector<double>& fake, double far)
{
    double best = -std::numeric_limits<double>::infinity();
    for (double t : real) {
        std::size_t flagged = 0;
        for (double r : real) flagged += r < t;
        if (static_cast<double>(flagged) <= far * static_cast<double>(real.size()) * (1 + 1e-12)) best = std::max(best, t);
    }
    std::size_t hit = 0;
    for (double f : fake) hit += f < best;
    return static_cast<double>(hit) / static_cast<double>(fake.size());
}

}  // namespace

TEST_CASE("average precision hand cases")
{
    CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.3, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
    CHECK(average_precision(std::vector<double>{0.9, 0.7, 0.5, 0.3}, std::vector<int>{1, 0, 1, 0}) ==
          Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
    // a tie between a positive and a negative counts as one threshold group
    CHECK(average_precision(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == 0.5);
    CHECK_THROWS_AS(average_precision(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), InvalidArgument);
}

TEST_CASE("average precision matches brute force")
{
    RngStream rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(199));
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (int i = 0; i < n; ++i) {
            // coarse grid so ties are common
            s[i] = trial % 2 ? std::round(rng.uniform() * 20) / 20 : rng.uniform();
            y[i] = static_cast<int>(rng.below(2));
        }
        y[0] = 1;
        y[1] = 0;
        CHECK(average_precision(s, y) == Approx(ap_oracle(s, y)).epsilon(1e-12));
    }
}

TEST_CASE("average precision is invariant to monotone transforms")
{
    RngStream rng(12);
    std::vector<double> s(100), t(100);
    std::vector<int> y(100);
    for (int i = 0; i < 100; ++i) {
        s[i] = rng.uniform(-1, 1);
        t[i] = std::exp(3 * s[i]) + 7;
        y[i] = i % 3 == 0;
    }
    CHECK(average_precision(s, y) == average_precision(t, y));
}

TEST_CASE("threshold calibration")
{
    const std::vector<double> real = {0.9, 0.8, 0.7, 0.6};
    CHECK(calibrate_threshold(real, 0.25) == 0.7);
    CHECK(calibrate_threshold(real, 1e-9) <= 0.6);
    CHECK(calibrate_threshold(std::vector<double>{0.4, 0.4, 0.4}, 0.1) <= 0.4);
    CHECK(tdr_at_far(real, std::vector<double>{0.65, 0.5}, 0.25) == 1.0);
    CHECK(tdr_at_far(real, std::vector<double>{0.1, 0.2}, 0.01) == 1.0);
    CHECK(tdr_at_far(real, std::vector<double>{0.95, 0.99}, 0.5) == 0.0);
    CHECK_THROWS_AS(tdr_at_far(std::vector<double>{}, std::vector<double>{0.1}, 0.1), InvalidArgument);
}

TEST_CASE("tdr matches an exhaustive threshold sweep")
{
    RngStream rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const int nr = 1 + static_cast<int>(rng.below(200)), nf = 1 + static_cast<int>(rng.below(200));
        std::vector<double> real(nr), fake(nf);
        for (auto& v : real) v = rng.uniform(0.2, 1.0);
        for (auto& v : fake) v = rng.uniform(0.0, 0.8);
        const double far = trial % 4 == 0 ? 0.005 : rng.uniform(0.001, 0.5);
        CHECK(tdr_at_far(real, fake, far) == tdr_oracle(real, fake, far));
    }
}

TEST_CASE("tdr is non-decreasing in far")
{
    RngStream rng(14);
    std::vector<double> real(150), fake(150);
    for (auto& v : real) v = rng.uniform(0.3, 1.0);
    for (auto& v : fake) v = rng.uniform(0.0, 0.7);
    double prev = 0;
    for (double far = 0.001; far < 0.99; far += 0.01) {
        const double t = tdr_at_far(real, fake, far);
        CHECK(t >= prev);
        prev = t;
    }
}

TEST_CASE("psnr")
{
    Image<double> a(3, 8, 8, 0.4);
    CHECK(std::isinf(psnr(a, a)));
    Image<double> b(3, 8, 8, 0.5);
    CHECK(psnr(a, b) == Approx(20.0).epsilon(1e-12));
    CHECK_THROWS_AS(psnr(a, Image<double>(3, 8, 9)), ShapeError);

    RngStream rng(15);
    for (int trial = 0; trial < 100; ++trial) {
        const auto x = test::random_image(3, 9, 7, rng), y = test::random_image(3, 9, 7, rng);
        double se = 0;
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 9; ++i)
                for (int j = 0; j < 7; ++j) se += std::pow(x(c, i, j) - y(c, i, j), 2);
        const double mse = se / (3 * 9 * 7);
        CHECK(psnr(x, y) == Approx(-10 * std::log10(mse)).epsilon(1e-12));
        CHECK(psnr(x, y) == psnr(y, x));
    }
    double prev = std::numeric_limits<double>::infinity();
    for (double d : {0.01, 0.02, 0.05, 0.1, 0.3}) {
        Image<double> p = a;
        for (auto& v : p.values()) v += d;
        CHECK(psnr(a, p) < prev);
        prev = psnr(a, p);
    }
}
