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
#include <iomanip>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pimd/core/cosine.hpp"
#include "pimd/core/errors.hpp"
#include "pimd/core/rng.hpp"
#include "pimd/core/settings.hpp"
#include "pimd/core/tensor.hpp"
#include "pimd/manipulators.hpp"
#include "pimd/metrics.hpp"
#include "pimd/networks.hpp"
#include "pimd/template_set.hpp"

namespace pimd {

struct Score {
    double score = 0.0;
    std::size_t argmax = 0;
};

/// max_i cos(recovered, S_i) on raw planes; ties go to the lowest index.
template <typename T>
Score max_cosine(std::span<const Plane<T>> set, const Plane<T>& recovered)
{
    detail::require(!set.empty(), "max_cosine: empty template set");
    Score best{-std::numeric_limits<double>::infinity(), 0};
    for (std::size_t i = 0; i < set.size(); ++i) {
        detail::require_shape(set[i].same_shape(recovered), "max_cosine: shape mismatch");
        const double c = static_cast<double>(cosine(recovered.values(), set[i].values()));
        if (c > best.score) best = {c, i};
    }
    return best;
}

inline Score max_cosine(const TemplateSet& set, const Plane<float>& recovered)
{
    return max_cosine(set.planes(), recovered);
}

/// Images per eval-mode encoder call.
inline constexpr std::size_t kRecoverBatch = 16;

/// Recovered planes for a list of images. `Enc` is either a RecoveryEncoder
/// (batched eval-mode forward) or any callable Image<float> -> Plane<float>.
template <typename Enc>
std::vector<Plane<float>> recover_images(Enc& enc, std::span<const Image<float>> images)
{
    std::vector<Plane<float>> out;
    out.reserve(images.size());
    if constexpr (requires { enc.forward(std::declval<const Tensor<float>&>(), Mode::eval); }) {
        for (std::size_t i = 0; i < images.size(); i += kRecoverBatch) {
            const auto chunk = images.subspan(i, std::min(kRecoverBatch, images.size() - i));
            const Tensor<float> y = enc.forward(Tensor<float>::stack(chunk), Mode::eval);
            for (int j = 0; j < y.n(); ++j) out.push_back(y.plane(j));
        }
    } else {
        for (const auto& img : images) out.push_back(enc(img));
    }
    return out;
}

template <typename Enc>
Score score_image(Enc& enc, const TemplateSet& set, const Image<float>& image)
{
    detail::require_shape(image.channels() == 3 && image.height() == set.height() && image.width() == set.width(),
                          "score_image: image does not match the template size");
    return max_cosine(set, recover_images(enc, std::span<const Image<float>>(&image, 1)).front());
}

struct DetectionRow {
    std::string path;
    double score = 0.0;
    std::size_t argmax = 0;
    int label = -1;               // 1 encrypted real, 0 manipulated, -1 unknown
    long long encryption_index = -1;  // diagnostics only; -1 when unknown
};

struct DetectionReport {
    std::vector<DetectionRow> rows;
    std::optional<double> ap;
    std::optional<double> tdr;
    std::optional<double> threshold;
    std::optional<double> far;
    std::string config_hash;
};

/// Scores every image in order. Labels and encryption indices are copied
/// through when given (same length as images).
template <typename Enc>
std::vector<DetectionRow> score_dataset(Enc& enc, const TemplateSet& set, std::span<const Image<float>> images,
                                        std::span<const std::string> names = {}, std::span<const int> labels = {},
                                        std::span<const long long> encryption_index = {})
{
    detail::require(!images.empty(), "score_dataset: empty corpus");
    detail::require(names.empty() || names.size() == images.size(), "score_dataset: names length mismatch");
    detail::require(labels.empty() || labels.size() == images.size(), "score_dataset: labels length mismatch");
    detail::require(encryption_index.empty() || encryption_index.size() == images.size(),
                    "score_dataset: encryption index length mismatch");
    for (const auto& img : images)
        detail::require_shape(img.channels() == 3 && img.height() == set.height() && img.width() == set.width(),
                              "score_dataset: image does not match the template size");
    const auto planes = recover_images(enc, images);
    std::vector<DetectionRow> rows(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Score s = max_cosine(set, planes[i]);
        rows[i].path = names.empty() ? std::to_string(i) : names[i];
        rows[i].score = s.score;
        rows[i].argmax = s.argmax;
        rows[i].label = labels.empty() ? -1 : labels[i];
        rows[i].encryption_index = encryption_index.empty() ? -1 : encryption_index[i];
    }
    return rows;
}

/// Fills AP (when both labels occur) and TDR/threshold. The threshold is
/// either fixed or calibrated on the label-1 rows at `far`.
inline void aggregate(DetectionReport& r, std::optional<double> threshold, std::optional<double> far)
{
    std::vector<double> scores, real, fake;
    std::vector<int> labels;
    for (const auto& row : r.rows) {
        if (row.label < 0) continue;
        scores.push_back(row.score);
        labels.push_back(row.label);
        (row.label == 1 ? real : fake).push_back(row.score);
    }
    r.ap.reset();
    r.tdr.reset();
    r.far = far;
    r.threshold = threshold;
    if (!real.empty() && !fake.empty()) r.ap = average_precision(scores, labels);
    if (!threshold && far && !real.empty()) r.threshold = calibrate_threshold(real, *far);
    if (r.threshold && !fake.empty()) r.tdr = tdr_at_threshold(fake, *r.threshold);
}

inline nlohmann::json report_json(const DetectionReport& r)
{
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    std::size_t real = 0, fake = 0;
    for (const auto& row : r.rows) {
        real += row.label == 1;
        fake += row.label == 0;
    }
    return {{"ap", opt(r.ap)},         {"tdr", opt(r.tdr)},      {"threshold", opt(r.threshold)},
            {"far", opt(r.far)},       {"config_hash", r.config_hash}, {"images", r.rows.size()},
            {"real_images", real},     {"manipulated_images", fake}};
}

inline std::string csv_escape(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

inline void write_report_csv(std::ostream& os, const DetectionReport& r)
{
    os << "path,score,argmax,label,encryption_index\n";
    os << std::setprecision(17);
    for (const auto& row : r.rows)
        os << csv_escape(row.path) << ',' << row.score << ',' << row.argmax << ',' << row.label << ','
           << row.encryption_index << '\n';
}

/// Parses the CSV written by write_report_csv.
inline std::vector<DetectionRow> read_report_csv(std::istream& is)
{
    std::string line;
    detail::require(static_cast<bool>(std::getline(is, line)), "report CSV: missing header");
    std::vector<DetectionRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cur;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quoted) {
                if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += line[++i];
                else if (c == '"') quoted = false;
                else cur += c;
            } else if (c == '"') quoted = true;
            else if (c == ',') {
                f.push_back(cur);
                cur.clear();
            } else cur += c;
        }
        f.push_back(cur);
        if (f.size() != 5) throw FormatError("report CSV: expected 5 fields in '" + line + "'");
        rows.push_back({f[0], std::stod(f[1]), static_cast<std::size_t>(std::stoull(f[2])), std::stoi(f[3]),
                        std::stoll(f[4])});
    }
    return rows;
}

inline void save_report(const std::filesystem::path& stem, const DetectionReport& r)
{
    std::ofstream js(stem.string() + ".json");
    js << report_json(r).dump(2) << '\n';
    std::ofstream csv(stem.string() + ".csv");
    write_report_csv(csv, r);
    if (!js || !csv) throw Error("cannot write report '" + stem.string() + "'");
}

// ---- evaluation protocols -----------------------------------------------------

struct EvalConfig {
    EncryptConfig encrypt;
    std::uint64_t seed = 0;  // drives random template selection
};

/// Per image and template: the recovered real/fake planes' cosines with that
/// template and the max-cosine scores.
struct TemplateProbe {
    double cos_real = 0, cos_fake = 0;  // cos(S_i, S_R), cos(S_i, S_F)
    Score real, fake;                   // max-cosine scores over the set

    double gap() const { return cos_real - cos_fake; }
};

/// probes[image][template]: every image encrypted with every template.
template <typename Enc>
std::vector<std::vector<TemplateProbe>> probe_all_templates(Enc& enc, const TemplateSet& set,
                                                            const Manipulator<float>& g,
                                                            std::span<const Image<float>> images,
                                                            const EncryptConfig& cfg)
{
    detail::require(!images.empty(), "selection: empty corpus");
    const std::size_t n = set.size();
    std::vector<std::vector<TemplateProbe>> probes(images.size(), std::vector<TemplateProbe>(n));
    for (std::size_t t = 0; t < n; ++t) {
        std::vector<Image<float>> real, fake;
        real.reserve(images.size());
        for (const auto& img : images) real.push_back(encrypt(img, set[t], cfg));
        for (const auto& r : real) fake.push_back(g(r));
        const auto pr = recover_images(enc, std::span<const Image<float>>(real));
        const auto pf = recover_images(enc, std::span<const Image<float>>(fake));
        for (std::size_t i = 0; i < images.size(); ++i) {
            auto& p = probes[i][t];
            p.cos_real = cosine<float>(set[t].values(), pr[i].values());
            p.cos_fake = cosine<float>(set[t].values(), pf[i].values());
            p.real = max_cosine(set, pr[i]);
            p.fake = max_cosine(set, pf[i]);
        }
    }
    return probes;
}

/// AP of encrypted-real (positive) vs manipulated scores when image i uses template choice[i].
inline double ap_for_choice(const std::vector<std::vector<TemplateProbe>>& probes, std::span<const std::size_t> choice)
{
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        scores.push_back(probes[i][choice[i]].real.score);
        labels.push_back(1);
        scores.push_back(probes[i][choice[i]].fake.score);
        labels.push_back(0);
    }
    return average_precision(scores, labels);
}

struct SelectionResult {
    std::vector<std::size_t> best, worst, random;
    std::vector<std::vector<double>> gaps;  // d_i per image
    double ap_best = 0, ap_worst = 0, ap_random = 0;
};

/// best = argmax_i d_i and worst = argmin_i d_i with d_i = cos(S_i, S_R) - cos(S_i, S_F);
/// ties go to the lowest index. Random selection uses cfg.seed.
template <typename Enc>
SelectionResult selection_best_worst_oracle(Enc& enc, const TemplateSet& set, const Manipulator<float>& g,
                                            std::span<const Image<float>> images, const EvalConfig& cfg)
{
    const auto probes = probe_all_templates(enc, set, g, images, cfg.encrypt);
    SelectionResult r;
    RngStream rng = RngStream(cfg.seed).fork(0x73656C656374ULL);
    for (const auto& row : probes) {
        std::vector<double> d;
        std::size_t b = 0, w = 0;
        for (std::size_t t = 0; t < row.size(); ++t) {
            d.push_back(row[t].gap());
            if (d[t] > d[b]) b = t;
            if (d[t] < d[w]) w = t;
        }
        r.gaps.push_back(std::move(d));
        r.best.push_back(b);
        r.worst.push_back(w);
        r.random.push_back(select_index(set.size(), rng));
    }
    r.ap_best = ap_for_choice(probes, r.best);
    r.ap_worst = ap_for_choice(probes, r.worst);
    r.ap_random = ap_for_choice(probes, r.random);
    return r;
}

struct BiasOneResult {
    std::vector<double> ap;  // one per template
    double min = 0, max = 0, mean = 0;
};

/// The whole corpus encrypted with a single template, once per template.
template <typename Enc>
BiasOneResult selection_bias_one(Enc& enc, const TemplateSet& set, const Manipulator<float>& g,
                                 std::span<const Image<float>> images, const EvalConfig& cfg)
{
    const auto probes = probe_all_templates(enc, set, g, images, cfg.encrypt);
    BiasOneResult r;
    for (std::size_t t = 0; t < set.size(); ++t) {
        const std::vector<std::size_t> choice(images.size(), t);
        r.ap.push_back(ap_for_choice(probes, choice));
    }
    r.min = *std::min_element(r.ap.begin(), r.ap.end());
    r.max = *std::max_element(r.ap.begin(), r.ap.end());
    double s = 0;
    for (double a : r.ap) s += a;
    r.mean = s / static_cast<double>(r.ap.size());
    return r;
}

/// Standard protocol: each image gets a random template, is encrypted (float,
/// no quantization) and manipulated; both versions are scored.
template <typename Enc>
DetectionReport evaluate_detection(Enc& enc, const TemplateSet& set, const Manipulator<float>& g,
                                   std::span<const Image<float>> images, const EvalConfig& cfg, double far = 0.005,
                                   std::span<const std::string> names = {})
{
    detail::require(!images.empty(), "evaluate_detection: empty corpus");
    RngStream rng = RngStream(cfg.seed).fork(0x6576616CULL);
    std::vector<Image<float>> inputs;
    std::vector<std::string> row_names;
    std::vector<int> labels;
    std::vector<long long> used;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::size_t t = select_index(set.size(), rng);
        Image<float> real = encrypt(images[i], set[t], cfg.encrypt);
        Image<float> fake = g(real);
        const std::string base = names.empty() ? std::to_string(i) : names[i];
        inputs.push_back(std::move(real));
        inputs.push_back(std::move(fake));
        row_names.push_back(base + ":real");
        row_names.push_back(base + ":" + to_string(g.kind()));
        labels.insert(labels.end(), {1, 0});
        used.insert(used.end(), {static_cast<long long>(t), static_cast<long long>(t)});
    }
    DetectionReport r;
    r.rows = score_dataset(enc, set, std::span<const Image<float>>(inputs), row_names, labels, used);
    aggregate(r, std::nullopt, far);
    return r;
}

}  // namespace pimd
