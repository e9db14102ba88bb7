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
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pimd/corpus.hpp"
#include "pimd/detection.hpp"
#include "pimd/metrics.hpp"
#include "pimd/nn/weights_io.hpp"
#include "pimd/plot.hpp"
#include "pimd/training.hpp"

namespace pimd {

inline constexpr std::size_t kHeldOutOffset = 1'000'000;  // first synthetic index of the test split

struct DataSplit {
    Corpus<float> train, test;
};

inline DataSplit load_data(const DataSpec& d, int side = kImageSide)
{
    DataSplit s;
    if (d.source == "synthetic") {
        s.train = synthetic_corpus<float>(d.seed, d.train, 0, side);
        s.test = synthetic_corpus<float>(d.seed, d.test, kHeldOutOffset, side);
    } else {
        s.train = load_folder<float>(d.train_dir, side);
        if (!d.test_dir.empty()) s.test = load_folder<float>(d.test_dir, side);
        detail::require(!s.train.empty(), "data: no images in " + d.train_dir);
    }
    return s;
}

// ---- run artifacts --------------------------------------------------------------

/// What one training run leaves behind. Exactly one of encoder/classifier is set.
struct RunArtifacts {
    TrainConfig config;
    TemplateSet set;
    std::optional<RecoveryEncoder<float>> encoder;
    std::optional<PassiveClassifier<float>> classifier;
    TrainLog log;
};

inline constexpr const char* kTemplateFile = "templates.pimd";
inline constexpr const char* kEncoderFile = "encoder.pimw";
inline constexpr const char* kClassifierFile = "classifier.pimw";
inline constexpr const char* kLogFile = "train_log.jsonl";
inline constexpr const char* kSummaryFile = "summary.json";

inline std::filesystem::path sidecar_path(std::filesystem::path p) { return p.replace_extension(".json"); }

inline void save_run(const std::filesystem::path& dir, const RunArtifacts& run)
{
    std::filesystem::create_directories(dir);
    save_template_set(dir / kTemplateFile, run.set);
    {
        // sidecar next to the set: templates.pimd -> templates.json
        const auto cfg = to_json(run.config);
        std::ofstream os(sidecar_path(dir / kTemplateFile));
        os << nlohmann::json{{"config_hash", run.log.config_hash}, {"loss_weights", cfg.at("weights")}, {"config", cfg}}
                  .dump(2)
           << '\n';
        if (!os) throw FormatError("write failed: " + sidecar_path(dir / kTemplateFile).string());
    }
    if (run.encoder) save_encoder(dir / kEncoderFile, *run.encoder);
    if (run.classifier) {
        std::ofstream os(dir / kClassifierFile, std::ios::binary);
        nn::write_weights(os, run.classifier->state());
        if (!os) throw FormatError("write failed: " + (dir / kClassifierFile).string());
    }
    {
        std::ofstream os(dir / kLogFile);
        write_log_jsonl(os, run.log);
        if (!os) throw FormatError("write failed: " + (dir / kLogFile).string());
    }
    const nlohmann::json summary = {{"config", to_json(run.config)},
                                    {"config_hash", run.log.config_hash},
                                    {"steps", run.log.steps.size()},
                                    {"wall_seconds", run.log.wall_seconds}};
    std::ofstream os(dir / kSummaryFile);
    os << summary.dump(2) << '\n';
}

inline RunArtifacts load_run(const std::filesystem::path& dir)
{
    RunArtifacts run;
    std::ifstream sj(dir / kSummaryFile);
    if (!sj) throw FormatError("missing " + (dir / kSummaryFile).string());
    const auto summary = nlohmann::json::parse(sj);
    run.config = train_config_from_json(summary.at("config"));
    run.set = load_template_set(dir / kTemplateFile);
    if (std::filesystem::exists(dir / kEncoderFile)) run.encoder = load_encoder(dir / kEncoderFile, run.set.height());
    if (std::filesystem::exists(dir / kClassifierFile)) {
        std::ifstream is(dir / kClassifierFile, std::ios::binary);
        ClassifierArch arch = run.config.classifier;
        arch.input_side = run.set.height();
        PassiveClassifier<float> clf(arch);
        nn::assign_weights(nn::read_weights(is), clf.state());
        run.classifier = std::move(clf);
    }
    std::ifstream ls(dir / kLogFile);
    run.log = read_log_jsonl(ls);
    run.log.wall_seconds = summary.value("wall_seconds", 0.0);
    return run;
}

inline RunArtifacts run_training(const TrainConfig& cfg, std::span<const Image<float>> train_images,
                                 const StepCallback& on_step = {})
{
    RunArtifacts run;
    run.config = cfg;
    if (cfg.variant == TrainVariant::passive) {
        auto r = train_passive_classifier(cfg, train_images, on_step);
        run.set = std::move(r.set);
        run.classifier = std::move(r.classifier);
        run.log = std::move(r.log);
    } else {
        auto r = train(cfg, train_images, on_step);
        run.set = std::move(r.set);
        run.encoder = std::move(r.encoder);
        run.log = std::move(r.log);
    }
    return run;
}

/// Reuses `cache/<config hash>` when a finished run is there; trains and stores it otherwise.
inline RunArtifacts train_cached(const TrainConfig& cfg, std::span<const Image<float>> train_images,
                                 const std::filesystem::path& cache, const StepCallback& on_step = {})
{
    const auto dir = cache / config_hash(cfg);
    if (std::filesystem::exists(dir / kSummaryFile)) return load_run(dir);
    RunArtifacts run = run_training(cfg, train_images, on_step);
    save_run(dir, run);
    return run;
}

// ---- evaluation -------------------------------------------------------------------

inline constexpr std::array<ManipulatorKind, 3> kAllManipulators = {
    ManipulatorKind::fixed_conv, ManipulatorKind::masked_inpaint, ManipulatorKind::color_warp};

struct RunMetrics {
    std::map<std::string, double> ap, tdr;  // keyed by manipulator name
    double psnr = 0.0;                      // mean over test images, float encryption
    double pairwise_mean = 0.0;
};

inline DetectionReport evaluate_against(RunArtifacts& run, const Manipulator<float>& g,
                                        std::span<const Image<float>> test, double far = 0.005)
{
    const EvalConfig ec{run.config.encrypt, run.config.seed};
    if (run.encoder) return evaluate_detection(*run.encoder, run.set, g, test, ec, far);
    return evaluate_passive(*run.classifier, run.set, g, test, ec, far);
}

inline double mean_psnr(const TemplateSet& set, std::span<const Image<float>> images, const EncryptConfig& enc,
                        std::uint64_t seed)
{
    RngStream rng = RngStream(seed).fork(0x70736E72ULL);
    double total = 0.0;
    for (const auto& img : images) total += psnr(encrypt(img, set[select_index(set.size(), rng)], enc), img);
    return total / static_cast<double>(images.size());
}

inline RunMetrics evaluate_run(RunArtifacts& run, std::span<const Image<float>> test,
                               std::span<const ManipulatorKind> kinds = kAllManipulators)
{
    detail::require(!test.empty(), "evaluate: empty test split");
    RunMetrics m;
    for (auto kind : kinds) {
        const auto g = make_manipulator<float>(kind, run.config.manipulator.seed, run.set.height());
        const auto rep = evaluate_against(run, g, test);
        m.ap[to_string(kind)] = *rep.ap;
        m.tdr[to_string(kind)] = *rep.tdr;
    }
    m.psnr = mean_psnr(run.set, test, run.config.encrypt, run.config.seed);
    m.pairwise_mean = pairwise_cosine_stats(run.set).mean;
    return m;
}

inline nlohmann::json to_json(const RunMetrics& m)
{
    return {{"ap", m.ap}, {"tdr", m.tdr}, {"psnr", m.psnr}, {"pairwise_mean", m.pairwise_mean}};
}

// ---- studies ------------------------------------------------------------------------

inline constexpr std::array<std::string_view, 7> kStudies = {
    "set_size", "strength", "loss_removal", "selection", "augmentation", "adversarial_baseline", "passive_baseline"};

/// Grid and seeds for a study; read from the config's optional "study" object.
struct StudySpec {
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::vector<double> values;  // n or m grid; empty means the built-in grid
};

inline StudySpec study_spec_from_json(const nlohmann::json& config)
{
    StudySpec s;
    if (!config.contains("study")) return s;
    const auto& j = config.at("study");
    detail::reject_unknown(j, {"seeds", "values"}, "study");
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("values")) s.values = j.at("values").get<std::vector<double>>();
    detail::require(!s.seeds.empty(), "study: seeds must not be empty");
    return s;
}

inline double median(std::vector<double> v)
{
    detail::require(!v.empty(), "median: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct StudyArm {
    std::string name;
    double value = 0.0;  // x coordinate for plots
    TrainConfig config;
};

inline std::vector<StudyArm> study_arms(std::string_view study, const TrainConfig& base, const StudySpec& spec)
{
    std::vector<StudyArm> arms;
    auto add = [&](std::string name, double value, TrainConfig c) { arms.push_back({std::move(name), value, std::move(c)}); };
    if (study == "set_size") {
        for (double n : spec.values.empty() ? std::vector<double>{1, 3, 10} : spec.values) {
            TrainConfig c = base;
            c.n = static_cast<int>(n);
            add("n=" + std::to_string(c.n), n, c);
        }
    } else if (study == "strength") {
        for (double m : spec.values.empty() ? std::vector<double>{0.1, 0.3, 0.5, 1.0} : spec.values) {
            TrainConfig c = base;
            c.encrypt.strength = m;
            add("m=" + nlohmann::json(m).dump(), m, c);
        }
    } else if (study == "loss_removal") {
        add("full", 0, base);
        for (std::size_t t = 0; t < kLossTermNames.size(); ++t) {
            TrainConfig c = base;
            c.variant = TrainVariant::remove_loss;
            c.dropped = static_cast<LossTerm>(t);
            c.weights[*c.dropped] = 0.0;
            add("without " + std::string(kLossTermNames[t]), static_cast<double>(t + 1), c);
        }
    } else if (study == "selection") {
        add("full", 0, base);
    } else if (study == "augmentation") {
        TrainConfig none = base;
        none.augment.clear();
        add("none", 0, none);
        int i = 1;
        for (auto k : {AugmentKind::blur, AugmentKind::jpeg, AugmentKind::blur_jpeg, AugmentKind::resize_mix,
                       AugmentKind::random_crop, AugmentKind::gaussian_noise}) {
            TrainConfig c = base;
            c.augment = {AugmentStep{.kind = k}};
            add(to_string(k), i++, c);
        }
    } else if (study == "adversarial_baseline") {
        add("full", 0, base);
        TrainConfig f = base;
        f.variant = TrainVariant::adversarial;
        f.adversarial = {Attack::fgsm, 0.03, 1};
        add("fgsm", 1, f);
        TrainConfig p = base;
        p.variant = TrainVariant::adversarial;
        p.adversarial = {Attack::pgd, 0.03, 5};
        add("pgd", 2, p);
    } else if (study == "passive_baseline") {
        add("full", 0, base);
        TrainConfig p = base;
        p.variant = TrainVariant::passive;
        add("passive", 1, p);
    } else {
        throw ConfigError("unknown study '" + std::string(study) + "'");
    }
    return arms;
}

/// Runs every arm of the study for every seed, writes study.json and a plot
/// into `out`, and returns the JSON table.
inline nlohmann::json run_study(std::string_view study, const TrainConfig& base, const StudySpec& spec,
                                const std::filesystem::path& out, std::ostream* progress = nullptr)
{
    const auto arms = study_arms(study, base, spec);
    const DataSplit data = load_data(base.data, base.encoder.input_side);
    detail::require(!data.test.empty(), "study: the test split is empty");
    const auto cache = out / "runs";
    nlohmann::json rows = nlohmann::json::array();
    std::map<std::string, std::vector<double>> seen_ap;
    for (const auto& arm : arms) {
        for (auto seed : spec.seeds) {
            TrainConfig c = arm.config;
            c.seed = seed;
            if (progress) *progress << study << ": " << arm.name << " seed " << seed << std::endl;
            RunArtifacts run = train_cached(c, data.train.images, cache);
            const RunMetrics m = evaluate_run(run, data.test.images);
            nlohmann::json row = {{"arm", arm.name}, {"value", arm.value}, {"seed", seed},
                                  {"config_hash", config_hash(c)}, {"metrics", to_json(m)}};
            if (study == "selection") {
                const auto g = make_manipulator<float>(c.manipulator.kind, c.manipulator.seed, run.set.height());
                const EvalConfig ec{c.encrypt, c.seed};
                const auto sel = selection_best_worst_oracle(*run.encoder, run.set, g, data.test.images, ec);
                const auto bias = selection_bias_one(*run.encoder, run.set, g, data.test.images, ec);
                row["selection"] = {{"ap_best", sel.ap_best},  {"ap_random", sel.ap_random}, {"ap_worst", sel.ap_worst},
                                    {"bias_one_min", bias.min}, {"bias_one_max", bias.max},   {"bias_one_mean", bias.mean}};
            }
            seen_ap[arm.name].push_back(m.ap.at(to_string(c.manipulator.kind)));
            rows.push_back(row);
        }
    }
    nlohmann::json summary = nlohmann::json::object();
    plot::Series s;
    for (const auto& arm : arms) {
        const double med = median(seen_ap[arm.name]);
        summary[arm.name] = {{"median_seen_ap", med}};
        s.x.push_back(arm.value);
        s.y.push_back(med);
    }
    const nlohmann::json table = {{"study", study}, {"base_config_hash", config_hash(base)}, {"rows", rows},
                                  {"summary", summary}};
    std::filesystem::create_directories(out);
    std::ofstream os(out / "study.json");
    os << table.dump(2) << '\n';
    try {
        plot::save_line_plot(out / "study.png", std::span<const plot::Series>(&s, 1));
    } catch (const std::exception&) {
        // plots are optional output
    }
    return table;
}

}  // namespace pimd
