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
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "pimd/image_io.hpp"

namespace pimd::plot {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr std::array<Rgb, 6> kPalette = {
    Rgb{31, 119, 180}, Rgb{214, 39, 40}, Rgb{44, 160, 44}, Rgb{255, 127, 14}, Rgb{148, 103, 189}, Rgb{140, 86, 75}};

struct Series {
    std::vector<double> x, y;
};

/// Bare raster canvas; the numbers behind every plot are written alongside as JSON.
class Canvas {
public:
    Canvas(int width, int height) : bmp_{width, height, 3, std::vector<std::uint8_t>(std::size_t(width) * height * 3, 255)} {}

    void set(int x, int y, Rgb c)
    {
        if (x < 0 || y < 0 || x >= bmp_.width || y >= bmp_.height) return;
        auto* p = &bmp_.pixels[(std::size_t(y) * bmp_.width + x) * 3];
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    }

    void line(double x0, double y0, double x1, double y1, Rgb c, int thick = 1)
    {
        const int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
            const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
            for (int dy = -(thick / 2); dy <= thick / 2; ++dy)
                for (int dx = -(thick / 2); dx <= thick / 2; ++dx) set(x + dx, y + dy, c);
        }
    }

    void rect(int x0, int y0, int x1, int y1, Rgb c)
    {
        for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
            for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
    }

    const Bitmap& bitmap() const { return bmp_; }

private:
    Bitmap bmp_;
};

struct Frame {
    int width = 480, height = 320, margin = 30;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

    double px(double x) const { return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin); }
    double py(double y) const { return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin); }
};

inline void draw_axes(Canvas& c, const Frame& f)
{
    const Rgb grid{225, 225, 225}, axis{0, 0, 0};
    for (int i = 1; i < 5; ++i) {
        const double gy = f.ymin + (f.ymax - f.ymin) * i / 5.0;
        c.line(f.px(f.xmin), f.py(gy), f.px(f.xmax), f.py(gy), grid);
    }
    c.line(f.px(f.xmin), f.py(f.ymin), f.px(f.xmax), f.py(f.ymin), axis);
    c.line(f.px(f.xmin), f.py(f.ymin), f.px(f.xmin), f.py(f.ymax), axis);
}

inline Frame fit_frame(std::span<const Series> series)
{
    Frame f;
    double xl = std::numeric_limits<double>::infinity(), xh = -xl, yl = xl, yh = -xl;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xl = std::min(xl, s.x[i]);
            xh = std::max(xh, s.x[i]);
            yl = std::min(yl, s.y[i]);
            yh = std::max(yh, s.y[i]);
        }
    if (!std::isfinite(xl)) return f;
    const double ypad = std::max(1e-9, 0.05 * (yh - yl));
    f.xmin = xl;
    f.xmax = xh > xl ? xh : xl + 1;
    f.ymin = yl - ypad;
    f.ymax = yh + ypad;
    return f;
}

/// Polylines with square markers, one palette color per series.
inline void save_line_plot(const std::filesystem::path& path, std::span<const Series> series)
{
    const Frame f = fit_frame(series);
    Canvas c(f.width, f.height);
    draw_axes(c, f);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const Rgb col = kPalette[k % kPalette.size()];
        const auto& s = series[k];
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            const double x = f.px(s.x[i]), y = f.py(s.y[i]);
            c.rect(static_cast<int>(x) - 2, static_cast<int>(y) - 2, static_cast<int>(x) + 2, static_cast<int>(y) + 2, col);
            if (i > 0 && std::isfinite(s.y[i - 1])) c.line(f.px(s.x[i - 1]), f.py(s.y[i - 1]), x, y, col, 2);
        }
    }
    detail::write_file(path, encode_png(c.bitmap()));
}

/// Overlaid histograms over a shared range, drawn as outlined step curves.
inline void save_histogram(const std::filesystem::path& path, std::span<const std::vector<double>> groups, int bins = 40)
{
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& g : groups)
        for (double v : g)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi <= lo) hi = lo + 1e-6;
    std::vector<Series> series;
    for (const auto& g : groups) {
        std::vector<double> counts(bins, 0.0);
        for (double v : g)
            if (std::isfinite(v)) counts[std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins))] += 1;
        Series s;
        for (int b = 0; b < bins; ++b) {
            s.x.insert(s.x.end(), {lo + (hi - lo) * b / bins, lo + (hi - lo) * (b + 1) / bins});
            s.y.insert(s.y.end(), {counts[b], counts[b]});
        }
        series.push_back(std::move(s));
    }
    Frame f = fit_frame(series);
    f.ymin = 0;
    Canvas c(f.width, f.height);
    draw_axes(c, f);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        for (std::size_t i = 1; i < s.x.size(); ++i)
            c.line(f.px(s.x[i - 1]), f.py(s.y[i - 1]), f.px(s.x[i]), f.py(s.y[i]), kPalette[k % kPalette.size()], 2);
    }
    detail::write_file(path, encode_png(c.bitmap()));
}

/// Precision-recall curve with label 1 positive, swept by descending score.
inline Series pr_curve(std::span<const double> scores, std::span<const int> labels)
{
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t pos = 0;
    for (int l : labels) pos += l == 1;
    Series s;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        tp += labels[order[i]] == 1;
        if (i + 1 < order.size() && scores[order[i + 1]] == scores[order[i]]) continue;
        s.x.push_back(pos ? static_cast<double>(tp) / pos : 0.0);
        s.y.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    }
    return s;
}

}  // namespace pimd::plot
