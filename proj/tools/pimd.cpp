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

// Command-line front end: train, encrypt, detect, ablate, plus generate and
// manipulate for building toy corpora.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pimd/pimd.hpp"

namespace fs = std::filesystem;
using namespace pimd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// Relative output paths land under $PIMD_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& p)
{
    const fs::path path(p);
    if (path.is_absolute()) return path;
    if (const char* root = std::getenv("PIMD_OUTPUT_ROOT"); root && *root) return fs::path(root) / path;
    return path;
}

nlohmann::json read_json_file(const fs::path& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path.string());
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
}

std::vector<fs::path> collect_inputs(const fs::path& input)
{
    if (fs::is_directory(input)) {
        auto files = list_images(input);
        if (files.empty()) throw InvalidArgument("no PNG or JPEG images in " + input.string());
        return files;
    }
    if (!fs::exists(input)) throw InvalidArgument("input not found: " + input.string());
    return {input};
}

/// encryption_index per file name from a manifest written by `encrypt`, if one sits in `dir`.
std::map<std::string, long long> read_manifest(const fs::path& dir)
{
    std::map<std::string, long long> out;
    std::ifstream is(dir / "manifest.csv");
    if (!is) return out;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) continue;
        out[line.substr(0, comma)] = std::stoll(line.substr(comma + 1));
    }
    return out;
}

/// Config hash of the run that produced `weights` when its summary sits next to
/// it; otherwise a hash of the artifacts themselves.
std::string artifact_hash(const fs::path& weights, const TemplateSet& set, const RecoveryEncoder<float>& enc)
{
    std::ifstream is(weights.parent_path() / kSummaryFile);
    if (is) {
        try {
            return nlohmann::json::parse(is).at("config_hash").get<std::string>();
        } catch (const nlohmann::json::exception&) {
        }
    }
    const std::string both = hex64(set.checksum()) + hex64(enc.checksum());
    return hex64(fnv1a(both));
}

struct TrainArgs {
    std::string config, out;
};

int cmd_train(const TrainArgs& a)
{
    const auto j = read_json_file(a.config);
    const TrainConfig cfg = train_config_from_json(j, {"study"});
    const DataSplit data = load_data(cfg.data, cfg.encoder.input_side);
    const fs::path out = output_path(a.out.empty() ? "runs/" + config_hash(cfg) : a.out);
    std::cerr << "training " << to_string(cfg.variant) << " (config " << config_hash(cfg) << ") on "
              << data.train.size() << " images\n";
    const long total = static_cast<long>(cfg.epochs) *
                       ((static_cast<long>(data.train.size()) + cfg.batch_size - 1) / cfg.batch_size);
    RunArtifacts run = run_training(cfg, data.train.images, [&](const StepRecord& r) {
        if (r.step % 50 == 0 || r.step + 1 == total)
            std::cerr << "step " << r.step + 1 << "/" << total << " objective " << r.objective << " J_r "
                      << r.loss.j_r << " real " << r.real_score << " fake " << r.fake_score << '\n';
        return true;
    });
    save_run(out, run);
    if (!data.test.empty()) {
        const RunMetrics m = evaluate_run(run, data.test.images);
        std::ofstream os(out / "eval.json");
        os << to_json(m).dump(2) << '\n';
        for (const auto& [k, v] : m.ap) std::cerr << "AP " << k << ": " << v << '\n';
    }
    std::cout << out.string() << '\n';
    return kExitOk;
}

struct EncryptArgs {
    std::string set, input, out;
    std::optional<long long> index;
    std::optional<double> strength;
    std::uint64_t seed = 0;
};

int cmd_encrypt(const EncryptArgs& a)
{
    const TemplateSet set = load_template_set(a.set);
    if (a.index && (*a.index < 0 || static_cast<std::size_t>(*a.index) >= set.size()))
        throw InvalidArgument("--index " + std::to_string(*a.index) + " out of range for a set of " +
                              std::to_string(set.size()));
    EncryptConfig enc;
    if (a.strength) enc.strength = *a.strength;
    enc.clamp_on_export = true;
    enc.validate();
    const auto files = collect_inputs(a.input);
    const fs::path out = output_path(a.out);
    fs::create_directories(out);
    RngStream rng = RngStream(a.seed).fork(0x656E6372ULL);
    std::ofstream manifest(out / "manifest.csv");
    manifest << "file,encryption_index\n";
    for (const auto& f : files) {
        const Image<float> img = load_image<float>(f, set.height());
        const std::size_t t = a.index ? static_cast<std::size_t>(*a.index) : select_index(set.size(), rng);
        const auto name = f.stem().string() + ".png";
        // to_bitmap rounds then clamps, which is the 8-bit export.
        detail::write_file(out / name, encode_png(to_bitmap(encrypt(img, set[t], enc))));
        manifest << csv_escape(name) << ',' << t << '\n';
    }
    if (!manifest) throw Error("cannot write manifest in " + out.string());
    std::cerr << "encrypted " << files.size() << " images into " << out.string() << '\n';
    return kExitOk;
}

struct DetectArgs {
    std::string set, weights, input, real, fake, out = "report";
    std::optional<double> threshold, far;
};

int cmd_detect(const DetectArgs& a)
{
    const TemplateSet set = load_template_set(a.set);
    RecoveryEncoder<float> enc = load_encoder(a.weights, set.height());
    std::vector<Image<float>> images;
    std::vector<std::string> names;
    std::vector<int> labels;
    std::vector<long long> used;
    auto add_dir = [&](const std::string& dir, int label) {
        if (dir.empty()) return;
        const auto files = list_images(dir);
        if (files.empty()) throw InvalidArgument("no PNG or JPEG images in " + dir);
        const auto manifest = read_manifest(dir);
        for (const auto& f : files) {
            images.push_back(load_image<float>(f, set.height()));
            names.push_back(f.string());
            labels.push_back(label);
            const auto it = manifest.find(f.filename().string());
            used.push_back(it == manifest.end() ? -1 : it->second);
        }
    };
    add_dir(a.input, -1);
    add_dir(a.real, 1);
    add_dir(a.fake, 0);
    if (images.empty()) throw InvalidArgument("detect: give --input, or --real and --fake");
    const bool labelled = std::any_of(labels.begin(), labels.end(), [](int l) { return l >= 0; });
    DetectionReport rep;
    rep.rows = score_dataset(enc, set, std::span<const Image<float>>(images), names,
                             labelled ? std::span<const int>(labels) : std::span<const int>(),
                             std::span<const long long>(used));
    if (a.far && a.real.empty()) throw InvalidArgument("detect: --calibrate-far needs --real images");
    aggregate(rep, a.threshold, a.far);
    rep.config_hash = artifact_hash(a.weights, set, enc);
    const fs::path stem = output_path(a.out);
    if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
    save_report(stem, rep);
    std::vector<double> real, fake, scores;
    std::vector<int> pr_labels;
    for (const auto& r : rep.rows) {
        if (r.label == 1) real.push_back(r.score);
        if (r.label == 0) fake.push_back(r.score);
        if (r.label >= 0) {
            scores.push_back(r.score);
            pr_labels.push_back(r.label);
        }
    }
    try {
        if (!real.empty() || !fake.empty()) {
            const std::vector<std::vector<double>> groups = {real, fake};
            plot::save_histogram(stem.string() + "_hist.png", groups);
        }
        if (!real.empty() && !fake.empty()) {
            const auto pr = plot::pr_curve(scores, pr_labels);
            plot::save_line_plot(stem.string() + "_pr.png", std::span<const plot::Series>(&pr, 1));
        }
    } catch (const std::exception& e) {
        std::cerr << "plots skipped: " << e.what() << '\n';
    }
    if (rep.ap) std::cerr << "AP " << *rep.ap << '\n';
    if (rep.tdr) std::cerr << "TDR " << *rep.tdr << " at threshold " << *rep.threshold << '\n';
    std::cout << stem.string() << ".json\n";
    return kExitOk;
}

struct AblateArgs {
    std::string study, config, out;
};

int cmd_ablate(const AblateArgs& a)
{
    if (std::find(kStudies.begin(), kStudies.end(), a.study) == kStudies.end())
        throw ConfigError("unknown study '" + a.study + "'");
    const auto j = read_json_file(a.config);
    const TrainConfig base = train_config_from_json(j, {"study"});
    const StudySpec spec = study_spec_from_json(j);
    const fs::path out = output_path(a.out.empty() ? "studies/" + a.study : a.out);
    const auto table = run_study(a.study, base, spec, out, &std::cerr);
    std::cerr << table.at("summary").dump(2) << '\n';
    std::cout << (out / "study.json").string() << '\n';
    return kExitOk;
}

struct GenerateArgs {
    std::uint64_t seed = 0;
    std::size_t count = 10, first = 0;
    int side = kImageSide;
    std::string out;
};

int cmd_generate(const GenerateArgs& a)
{
    const fs::path out = output_path(a.out);
    fs::create_directories(out);
    for (std::size_t i = a.first; i < a.first + a.count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%06zu.png", i);
        save_png(out / name, synthetic_image<float>(a.seed, i, a.side));
    }
    std::cerr << "wrote " << a.count << " images to " << out.string() << '\n';
    return kExitOk;
}

struct ManipulateArgs {
    std::string kind = "fixed_conv", input, out;
    std::uint64_t seed = 0;
};

int cmd_manipulate(const ManipulateArgs& a)
{
    const auto kind = parse_manipulator_kind(a.kind);
    const auto files = collect_inputs(a.input);
    const fs::path out = output_path(a.out);
    fs::create_directories(out);
    std::optional<Manipulator<float>> g;
    for (const auto& f : files) {
        const Image<float> img = load_image<float>(f, kImageSide);
        if (!g) g = make_manipulator<float>(kind, a.seed, img.height());
        detail::write_file(out / (f.stem().string() + ".png"), encode_png(to_bitmap(manipulate(*g, img))));
    }
    // keep the manifest so detect can still report encryption indices
    if (fs::is_directory(a.input) && fs::exists(fs::path(a.input) / "manifest.csv"))
        fs::copy_file(fs::path(a.input) / "manifest.csv", out / "manifest.csv", fs::copy_options::overwrite_existing);
    std::cerr << "manipulated " << files.size() << " images with " << a.kind << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"pimd: proactive image manipulation detection toolkit"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a template set and recovery encoder from a JSON config");
    train->add_option("config", ta.config, "JSON config")->required()->check(CLI::ExistingFile);
    train->add_option("-o,--out", ta.out, "output directory (default runs/<config hash>)");

    EncryptArgs ea;
    auto* enc = app.add_subcommand("encrypt", "add templates to images and export 8-bit PNGs");
    enc->add_option("--set", ea.set, "template-set file")->required();
    enc->add_option("input", ea.input, "image file or folder")->required();
    enc->add_option("-o,--out", ea.out, "output folder")->required();
    enc->add_option("--index", ea.index, "template index (0-based); random per image when omitted");
    enc->add_option("--strength", ea.strength, "template strength m in [0, 1]");
    enc->add_option("--seed", ea.seed, "seed for random template selection");

    DetectArgs da;
    auto* det = app.add_subcommand("detect", "score images with max-cosine and write a report");
    det->add_option("--set", da.set, "template-set file")->required();
    det->add_option("--weights", da.weights, "encoder weights file")->required();
    det->add_option("--input", da.input, "folder of unlabelled images");
    det->add_option("--real", da.real, "folder of encrypted real images (label 1)");
    det->add_option("--fake", da.fake, "folder of manipulated images (label 0)");
    det->add_option("-o,--out", da.out, "report path stem");
    auto* thr = det->add_option("--threshold", da.threshold, "flag scores below this as manipulated");
    det->add_option("--calibrate-far", da.far, "calibrate the threshold on the reals for this false-alarm rate")
        ->excludes(thr);

    AblateArgs aa;
    auto* abl = app.add_subcommand("ablate", "run a seeded study grid");
    abl->add_option("study", aa.study, "set_size, strength, loss_removal, selection, augmentation, "
                                       "adversarial_baseline or passive_baseline")
        ->required();
    abl->add_option("--config", aa.config, "base JSON config")->required()->check(CLI::ExistingFile);
    abl->add_option("-o,--out", aa.out, "output directory (default studies/<study>)");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "write procedural RGB images");
    gen->add_option("-o,--out", ga.out, "output folder")->required();
    gen->add_option("--count", ga.count, "number of images");
    gen->add_option("--first", ga.first, "index of the first image");
    gen->add_option("--seed", ga.seed, "corpus seed");
    gen->add_option("--side", ga.side, "image side")->check(CLI::Range(8, 4096));

    ManipulateArgs ma;
    auto* man = app.add_subcommand("manipulate", "apply a frozen toy manipulator to images");
    man->add_option("--kind", ma.kind, "fixed_conv, masked_inpaint or color_warp");
    man->add_option("--seed", ma.seed, "manipulator seed");
    man->add_option("input", ma.input, "image file or folder")->required();
    man->add_option("-o,--out", ma.out, "output folder")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train) return cmd_train(ta);
        if (*enc) return cmd_encrypt(ea);
        if (*det) return cmd_detect(da);
        if (*abl) return cmd_ablate(aa);
        if (*gen) return cmd_generate(ga);
        if (*man) return cmd_manipulate(ma);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
