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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pimd/augment.hpp"
#include "pimd/core/cosine.hpp"
#include "pimd/core/errors.hpp"
#include "pimd/core/hash.hpp"
#include "pimd/core/rng.hpp"
#include "pimd/core/settings.hpp"
#include "pimd/core/tensor.hpp"
#include "pimd/detection.hpp"
#include "pimd/fourier.hpp"
#include "pimd/losses.hpp"
#include "pimd/manipulators.hpp"
#include "pimd/networks.hpp"
#include "pimd/nn/adam.hpp"
#include "pimd/template_set.hpp"

namespace pimd {

enum class TrainVariant { full, fixed_template, remove_loss, adversarial, passive };

inline std::string to_string(TrainVariant v)
{
    switch (v) {
    case TrainVariant::full: return "full";
    case TrainVariant::fixed_template: return "fixed_template";
    case TrainVariant::remove_loss: return "remove_loss";
    case TrainVariant::adversarial: return "adversarial";
    case TrainVariant::passive: return "passive";
    }
    return "?";
}

inline TrainVariant parse_train_variant(std::string_view s)
{
    for (auto v : {TrainVariant::full, TrainVariant::fixed_template, TrainVariant::remove_loss,
                   TrainVariant::adversarial, TrainVariant::passive})
        if (to_string(v) == s) return v;
    throw ConfigError("unknown variant '" + std::string(s) + "'");
}

enum class Attack { fgsm, pgd };

struct AdversarialSpec {
    Attack attack = Attack::fgsm;
    double epsilon = 0.03;
    int steps = 1;

    void validate() const
    {
        detail::require(std::isfinite(epsilon) && epsilon > 0, "adversarial: epsilon must be > 0");
        detail::require(steps >= 1, "adversarial: steps must be >= 1");
        detail::require(attack != Attack::fgsm || steps == 1, "adversarial: fgsm takes exactly one step");
    }
};

struct ManipulatorSpec {
    ManipulatorKind kind = ManipulatorKind::fixed_conv;
    std::uint64_t seed = 0;
};

/// Where training/test images come from.
struct DataSpec {
    std::string source = "synthetic";  // "synthetic" or "folder"
    std::uint64_t seed = 0;
    std::size_t train = 500, test = 200;
    std::string train_dir, test_dir;
};

struct TrainConfig {
    std::uint64_t seed = 0;
    int n = 3;
    EncryptConfig encrypt;
    LossWeights weights;
    FrequencyFilter filter;
    double learning_rate = 1e-5;
    int batch_size = 4;
    int epochs = 10;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    AugmentRecipe augment;
    ManipulatorSpec manipulator;
    EncoderArch encoder;
    ClassifierArch classifier;
    DataSpec data;
    TrainVariant variant = TrainVariant::full;
    std::optional<LossTerm> dropped;  // remove_loss only
    AdversarialSpec adversarial;      // adversarial only
    // Abort when the per-step objective exceeds this multiple of the first
    // step's objective (or is non-finite).
    double divergence_factor = 1e6;

    void validate() const
    {
        detail::require(n >= 1, "config: n must be >= 1");
        detail::require(batch_size >= 1 && epochs >= 1, "config: batch_size and epochs must be positive");
        detail::require(std::isfinite(learning_rate) && learning_rate >= 0, "config: learning_rate must be >= 0");
        detail::require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0,
                        "config: invalid optimizer coefficients");
        detail::require(divergence_factor > 1, "config: divergence_factor must exceed 1");
        encrypt.validate();
        weights.validate();
        filter.validate(encoder.input_side);
        for (const auto& s : augment) s.validate();
        detail::require(variant != TrainVariant::remove_loss || dropped.has_value(),
                        "config: remove_loss needs 'dropped'");
        if (variant == TrainVariant::adversarial) adversarial.validate();
    }
};

// ---- JSON -------------------------------------------------------------------

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                           const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError(where + ": unknown key '" + key + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const TrainConfig& c)
{
    nlohmann::json aug = nlohmann::json::array();
    for (const auto& s : c.augment) {
        nlohmann::json js;
        to_json(js, s);
        aug.push_back(js);
    }
    nlohmann::json data = {{"source", c.data.source}};
    if (c.data.source == "synthetic")
        data.update({{"seed", c.data.seed}, {"train", c.data.train}, {"test", c.data.test}});
    else
        data.update({{"train_dir", c.data.train_dir}, {"test_dir", c.data.test_dir}});
    nlohmann::json j = {
        {"seed", c.seed},
        {"n", c.n},
        {"strength", c.encrypt.strength},
        {"weights",
         {{"lambda1", c.weights.lambda1},
          {"lambda2", c.weights.lambda2},
          {"lambda3", c.weights.lambda3},
          {"lambda4", c.weights.lambda4},
          {"lambda5", c.weights.lambda5}}},
        {"k", c.filter.k},
        {"learning_rate", c.learning_rate},
        {"batch_size", c.batch_size},
        {"epochs", c.epochs},
        {"optimizer", {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.adam_eps}}},
        {"augment", aug},
        {"manipulator", {{"kind", to_string(c.manipulator.kind)}, {"seed", c.manipulator.seed}}},
        {"encoder",
         {{"stem1", c.encoder.stem1}, {"stem2", c.encoder.stem2}, {"width", c.encoder.width},
          {"blocks", c.encoder.blocks}}},
        {"data", data},
        {"variant", to_string(c.variant)},
        {"divergence_factor", c.divergence_factor},
    };
    if (c.dropped) j["dropped"] = to_string(*c.dropped);
    if (c.variant == TrainVariant::adversarial)
        j["adversarial"] = {{"attack", c.adversarial.attack == Attack::fgsm ? "fgsm" : "pgd"},
                            {"epsilon", c.adversarial.epsilon},
                            {"steps", c.adversarial.steps}};
    return j;
}

/// Strict parse: seed, manipulator and data are required; unknown keys are
/// rejected. Keys in `extra_keys` are skipped (owned by the caller).
inline TrainConfig train_config_from_json(const nlohmann::json& j, std::initializer_list<std::string_view> extra_keys = {})
{
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    static constexpr std::string_view kKnown[] = {"seed",     "n",         "strength", "weights",      "k",
                                                  "learning_rate", "batch_size", "epochs", "optimizer", "augment",
                                                  "manipulator",   "encoder",    "data",   "variant",   "dropped",
                                                  "adversarial",   "divergence_factor"};
    for (const auto& [key, value] : j.items()) {
        const bool known = std::find(std::begin(kKnown), std::end(kKnown), key) != std::end(kKnown) ||
                           std::find(extra_keys.begin(), extra_keys.end(), key) != extra_keys.end();
        if (!known) throw ConfigError("config: unknown key '" + key + "'");
    }
    for (const char* req : {"seed", "manipulator", "data"})
        if (!j.contains(req)) throw ConfigError(std::string("config: missing required field '") + req + "'");
    TrainConfig c;
    try {
        c.seed = j.at("seed").get<std::uint64_t>();
        detail::read_field(j, "n", c.n);
        detail::read_field(j, "strength", c.encrypt.strength);
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            detail::reject_unknown(w, {"lambda1", "lambda2", "lambda3", "lambda4", "lambda5"}, "weights");
            detail::read_field(w, "lambda1", c.weights.lambda1);
            detail::read_field(w, "lambda2", c.weights.lambda2);
            detail::read_field(w, "lambda3", c.weights.lambda3);
            detail::read_field(w, "lambda4", c.weights.lambda4);
            detail::read_field(w, "lambda5", c.weights.lambda5);
        }
        detail::read_field(j, "k", c.filter.k);
        detail::read_field(j, "learning_rate", c.learning_rate);
        detail::read_field(j, "batch_size", c.batch_size);
        detail::read_field(j, "epochs", c.epochs);
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            detail::reject_unknown(o, {"beta1", "beta2", "eps"}, "optimizer");
            detail::read_field(o, "beta1", c.beta1);
            detail::read_field(o, "beta2", c.beta2);
            detail::read_field(o, "eps", c.adam_eps);
        }
        if (j.contains("augment"))
            for (const auto& s : j.at("augment")) c.augment.push_back(s.get<AugmentStep>());
        const auto& m = j.at("manipulator");
        detail::reject_unknown(m, {"kind", "seed"}, "manipulator");
        if (!m.contains("kind")) throw ConfigError("config: missing required field 'manipulator.kind'");
        c.manipulator.kind = parse_manipulator_kind(m.at("kind").get<std::string>());
        detail::read_field(m, "seed", c.manipulator.seed);
        if (j.contains("encoder")) {
            const auto& e = j.at("encoder");
            detail::reject_unknown(e, {"stem1", "stem2", "width", "blocks"}, "encoder");
            detail::read_field(e, "stem1", c.encoder.stem1);
            detail::read_field(e, "stem2", c.encoder.stem2);
            detail::read_field(e, "width", c.encoder.width);
            detail::read_field(e, "blocks", c.encoder.blocks);
        }
        const auto& d = j.at("data");
        detail::reject_unknown(d, {"source", "seed", "train", "test", "train_dir", "test_dir"}, "data");
        detail::read_field(d, "source", c.data.source);
        if (c.data.source == "synthetic") {
            detail::read_field(d, "seed", c.data.seed);
            detail::read_field(d, "train", c.data.train);
            detail::read_field(d, "test", c.data.test);
        } else if (c.data.source == "folder") {
            if (!d.contains("train_dir")) throw ConfigError("config: missing required field 'data.train_dir'");
            detail::read_field(d, "train_dir", c.data.train_dir);
            detail::read_field(d, "test_dir", c.data.test_dir);
        } else {
            throw ConfigError("config: data.source must be 'synthetic' or 'folder'");
        }
        if (j.contains("variant")) c.variant = parse_train_variant(j.at("variant").get<std::string>());
        if (j.contains("dropped")) c.dropped = parse_loss_term(j.at("dropped").get<std::string>());
        if (j.contains("adversarial")) {
            const auto& a = j.at("adversarial");
            detail::reject_unknown(a, {"attack", "epsilon", "steps"}, "adversarial");
            const std::string attack = a.value("attack", std::string("fgsm"));
            if (attack != "fgsm" && attack != "pgd") throw ConfigError("adversarial: attack must be fgsm or pgd");
            c.adversarial.attack = attack == "fgsm" ? Attack::fgsm : Attack::pgd;
            detail::read_field(a, "epsilon", c.adversarial.epsilon);
            detail::read_field(a, "steps", c.adversarial.steps);
        }
        detail::read_field(j, "divergence_factor", c.divergence_factor);
        if (c.variant == TrainVariant::remove_loss && c.dropped) c.weights[*c.dropped] = 0.0;
        c.validate();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

/// FNV-1a of the canonical (sorted-key, compact) JSON form.
inline std::string config_hash(const TrainConfig& c)
{
    return hex64(fnv1a(to_json(c).dump()));
}

// ---- log ----------------------------------------------------------------------

struct StepRecord {
    int epoch = 0;
    long step = 0;
    LossBreakdown loss;      // batch means of the template-learning terms
    double detection = 0.0;  // detection objective (or passive cross-entropy)
    double objective = 0.0;  // loss.total + detection
    double real_score = 0.0, fake_score = 0.0;  // batch means of max-cosine scores
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<double> epoch_pairwise_mean;  // mean pairwise normalized cosine after each epoch
    std::string config_hash;
    std::string variant;
    double wall_seconds = 0.0;  // kept out of the JSON-lines records so they replay bit-identically
};

inline nlohmann::json step_json(const StepRecord& r, const TrainLog& log)
{
    nlohmann::json j = {{"epoch", r.epoch},       {"step", r.step},           {"J_m", r.loss.j_m},
                        {"J_r", r.loss.j_r},      {"J_c", r.loss.j_c},        {"J_s", r.loss.j_s},
                        {"J_p", r.loss.j_p},      {"total", r.loss.total},    {"detection", r.detection},
                        {"objective", r.objective}, {"real_score", r.real_score}, {"fake_score", r.fake_score},
                        {"config_hash", log.config_hash}, {"variant", log.variant}};
    j["lambda"] = {r.loss.weights.lambda1, r.loss.weights.lambda2, r.loss.weights.lambda3, r.loss.weights.lambda4,
                   r.loss.weights.lambda5};
    const auto e = static_cast<std::size_t>(r.epoch);
    if (e < log.epoch_pairwise_mean.size()) j["epoch_pairwise_mean"] = log.epoch_pairwise_mean[e];
    return j;
}

/// One JSON object per step.
inline void write_log_jsonl(std::ostream& os, const TrainLog& log)
{
    for (const auto& r : log.steps) os << step_json(r, log).dump() << '\n';
}

inline TrainLog read_log_jsonl(std::istream& is)
{
    TrainLog log;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        StepRecord r;
        r.epoch = j.at("epoch").get<int>();
        r.step = j.at("step").get<long>();
        r.loss.j_m = j.at("J_m").get<double>();
        r.loss.j_r = j.at("J_r").get<double>();
        r.loss.j_c = j.at("J_c").get<double>();
        r.loss.j_s = j.at("J_s").get<double>();
        r.loss.j_p = j.at("J_p").get<double>();
        r.loss.total = j.at("total").get<double>();
        const auto& l = j.at("lambda");
        r.loss.weights = {l[0].get<double>(), l[1].get<double>(), l[2].get<double>(), l[3].get<double>(),
                          l[4].get<double>()};
        r.detection = j.at("detection").get<double>();
        r.objective = j.at("objective").get<double>();
        r.real_score = j.at("real_score").get<double>();
        r.fake_score = j.at("fake_score").get<double>();
        log.config_hash = j.at("config_hash").get<std::string>();
        log.variant = j.at("variant").get<std::string>();
        if (j.contains("epoch_pairwise_mean")) {
            const auto e = static_cast<std::size_t>(r.epoch);
            if (log.epoch_pairwise_mean.size() <= e) log.epoch_pairwise_mean.resize(e + 1);
            log.epoch_pairwise_mean[e] = j.at("epoch_pairwise_mean").get<double>();
        }
        log.steps.push_back(r);
    }
    return log;
}

// ---- training -----------------------------------------------------------------

struct TrainResult {
    TemplateSet set;
    RecoveryEncoder<float> encoder;
    TrainLog log;
};

struct PassiveResult {
    PassiveClassifier<float> classifier;
    TemplateSet set;  // fixed at init, used only to encrypt
    TrainLog log;
};

/// Called after each step; return false to stop early.
using StepCallback = std::function<bool(const StepRecord&)>;

namespace detail {

/// Random draws for one batch, fixed before any gradient is computed so that
/// repeated evaluations (pgd) see the same batch.
struct BatchPlan {
    std::vector<std::size_t> image, templ;
    std::vector<AugmentTrace> traces;
};

inline BatchPlan draw_batch(std::span<const std::size_t> ids, std::size_t n, const AugmentRecipe& recipe, int side,
                            RngStream& rng)
{
    BatchPlan p;
    for (std::size_t id : ids) {
        p.image.push_back(id);
        p.templ.push_back(select_index(n, rng));
        AugmentTrace t;
        for (const auto& s : recipe) draw_step(s, side, side, 3, rng, t.ops);
        p.traces.push_back(std::move(t));
    }
    return p;
}

/// Encrypted-and-augmented inputs for a plan.
inline std::vector<Image<float>> build_inputs(const BatchPlan& p, std::span<const Image<float>> data,
                                              std::span<const Plane<float>> planes, const EncryptConfig& enc)
{
    std::vector<Image<float>> out;
    for (std::size_t b = 0; b < p.image.size(); ++b) {
        Image<float> x = encrypt(data[p.image[b]], planes[p.templ[b]], enc);
        for (const auto& op : p.traces[b].ops) x = apply_augment(op, x);
        out.push_back(std::move(x));
    }
    return out;
}

inline Tensor<float> concat(const Tensor<float>& a, const Tensor<float>& b)
{
    Tensor<float> out(a.n() + b.n(), a.c(), a.h(), a.w());
    std::copy(a.storage().begin(), a.storage().end(), out.storage().begin());
    std::copy(b.storage().begin(), b.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

struct StepOutcome {
    StepRecord record;
    std::vector<Plane<float>> grad_set;  // empty unless template gradients were requested
};

/// Forward and backward for one batch. Encoder parameter gradients are
/// accumulated into the encoder; template gradients are returned.
inline StepOutcome template_step(const BatchPlan& plan, std::span<const Image<float>> data,
                                 std::span<const Plane<float>> planes, RecoveryEncoder<float>& enc,
                                 const Manipulator<float>& g, const TrainConfig& cfg, const LowPassWindow<float>& window,
                                 bool want_template_grad)
{
    const int batch = static_cast<int>(plan.image.size());
    const int side = planes[0].height();
    const auto inputs = build_inputs(plan, data, planes, cfg.encrypt);
    const Tensor<float> real = Tensor<float>::stack(std::span<const Image<float>>(inputs));
    const Tensor<float> fake = g.forward(real);
    RecoveryEncoder<float>::Tape tape;
    const Tensor<float> out = enc.forward(concat(real, fake), Mode::train, &tape);

    StepOutcome res;
    TotalLossGrad<float> grad(planes.size(), side, side);
    Tensor<float> gout(2 * batch, 1, side, side);
    const float inv_b = 1.0f / static_cast<float>(batch);
    LossBreakdown mean;
    mean.weights = cfg.weights;
    std::vector<Plane<float>> rec(2 * batch);
    for (int b = 0; b < 2 * batch; ++b) rec[b] = out.plane(b);
    for (int b = 0; b < batch; ++b) {
        std::fill(grad.recovered.storage().begin(), grad.recovered.storage().end(), 0.0f);
        std::fill(grad.fake_recovered.storage().begin(), grad.fake_recovered.storage().end(), 0.0f);
        const LossBreakdown lb =
            total_loss_backward(planes, plan.templ[b], rec[b], rec[batch + b], cfg.weights, window, inv_b, grad);
        mean.j_m += lb.j_m / batch;
        mean.j_r += lb.j_r / batch;
        mean.j_c += lb.j_c / batch;
        mean.j_s += lb.j_s / batch;
        mean.j_p += lb.j_p / batch;
        std::copy(grad.recovered.storage().begin(), grad.recovered.storage().end(),
                  gout.sample(b));
        std::copy(grad.fake_recovered.storage().begin(), grad.fake_recovered.storage().end(),
                  gout.sample(batch + b));
    }
    mean.total = mean.weighted_sum();

    // Detection objective over both branches: label 1 for encrypted real, 0 for manipulated.
    std::vector<float> scores(2 * batch);
    std::vector<std::size_t> arg(2 * batch);
    std::vector<int> labels(2 * batch);
    for (int b = 0; b < 2 * batch; ++b) {
        const Score s = max_cosine(planes, rec[b]);
        scores[b] = static_cast<float>(s.score);
        arg[b] = s.argmax;
        labels[b] = b < batch ? 1 : 0;
    }
    const double det = detection_objective<float>(scores, labels);
    const auto gscore = detection_objective_grad<float>(scores, labels);
    const std::size_t hw = static_cast<std::size_t>(side) * side;
    for (int b = 0; b < 2 * batch; ++b) {
        if (gscore[b] == 0.0f) continue;
        cosine_backward<float>(rec[b].values(), planes[arg[b]].values(), gscore[b],
                               std::span<float>(gout.sample(b), hw), grad.set[arg[b]].values());
    }

    const Tensor<float> gin = enc.backward(tape, gout, want_template_grad);
    if (want_template_grad) {
        Tensor<float> greal(batch, 3, side, side), gfake(batch, 3, side, side);
        const std::size_t per = 3 * hw;
        std::copy_n(gin.data(), batch * per, greal.data());
        std::copy_n(gin.data() + batch * per, batch * per, gfake.data());
        const Tensor<float> gthrough = g.backward(real, gfake);
        for (std::size_t i = 0; i < greal.size(); ++i) greal[i] += gthrough[i];
        for (int b = 0; b < batch; ++b) {
            const Image<float> gx = augment_backward(plan.traces[b], greal.image(b));
            auto gs = grad.set[plan.templ[b]].values();
            const float m = static_cast<float>(cfg.encrypt.strength);
            for (int c = 0; c < 3; ++c) {
                const auto ch = gx.channel(c);
                for (std::size_t j = 0; j < hw; ++j) gs[j] += m * ch[j];
            }
        }
        res.grad_set = std::move(grad.set);
    }

    double rs = 0, fs = 0;
    for (int b = 0; b < batch; ++b) {
        rs += scores[b];
        fs += scores[batch + b];
    }
    res.record.loss = mean;
    res.record.detection = det;
    res.record.objective = mean.total + det;
    res.record.real_score = rs / batch;
    res.record.fake_score = fs / batch;
    return res;
}

inline std::vector<std::size_t> shuffled(std::size_t n, RngStream& rng)
{
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

class DivergenceGuard {
public:
    explicit DivergenceGuard(double factor) : factor_(factor) {}

    void check(const StepRecord& r)
    {
        if (!std::isfinite(r.objective) || !std::isfinite(r.loss.total))
            throw DivergenceError("training diverged at step " + std::to_string(r.step) + ": non-finite loss (total " +
                                  std::to_string(r.loss.total) + ", detection " + std::to_string(r.detection) + ")");
        if (!first_) first_ = std::max(1.0, std::abs(r.objective));
        if (std::abs(r.objective) > factor_ * *first_)
            throw DivergenceError("training diverged at step " + std::to_string(r.step) + ": objective " +
                                  std::to_string(r.objective) + " exceeds " + std::to_string(factor_) +
                                  "x the first step's");
    }

private:
    double factor_;
    std::optional<double> first_;
};

inline void require_corpus(std::span<const Image<float>> data, int side)
{
    require(!data.empty(), "train: empty corpus");
    for (const auto& img : data)
        require_shape(img.channels() == 3 && img.height() == side && img.width() == side,
                      "train: corpus images must be 3x" + std::to_string(side) + "x" + std::to_string(side));
}

inline std::vector<nn::ParamSlot<float>> encoder_slots(RecoveryEncoder<float>& enc)
{
    std::vector<nn::ParamSlot<float>> slots;
    for (auto* p : enc.parameters()) slots.push_back({p->value, p->grad});
    return slots;
}

}  // namespace detail

/// Joint optimization of templates and encoder. Every variant except the
/// passive classifier goes through here; `cfg.variant` selects the update
/// rule for the template planes.
inline TrainResult train(const TrainConfig& cfg, std::span<const Image<float>> data, const StepCallback& on_step = {})
{
    cfg.validate();
    detail::require(cfg.variant != TrainVariant::passive, "train: use train_passive_classifier for the passive variant");
    const int side = cfg.encoder.input_side;
    detail::require_corpus(data, side);
    const auto t0 = std::chrono::steady_clock::now();

    RngStream root(cfg.seed);
    RngStream init_rng = root.fork(1), enc_rng = root.fork(2), data_rng = root.fork(3);
    const TemplateSet init = init_template_set(cfg.n, side, init_rng);
    std::vector<Plane<float>> planes(init.planes().begin(), init.planes().end());
    RecoveryEncoder<float> enc = init_encoder<float>(enc_rng, cfg.encoder);
    const Manipulator<float> g = make_manipulator<float>(cfg.manipulator.kind, cfg.manipulator.seed, side);
    const std::uint64_t g_checksum = g.checksum();
    const LowPassWindow<float> window(side, side, cfg.filter);

    const bool fixed = cfg.variant == TrainVariant::fixed_template;
    const bool adversarial = cfg.variant == TrainVariant::adversarial;
    LossWeights weights = cfg.weights;
    if (fixed || adversarial) {
        // Losses that only shape the templates are off when the templates do not learn
        // by gradient descent.
        weights.lambda1 = 0;
        weights.lambda3 = 0;
        weights.lambda5 = 0;
    }
    TrainConfig run = cfg;
    run.weights = weights;

    std::vector<nn::ParamSlot<float>> slots;
    std::vector<std::vector<float>> plane_grads(planes.size(), std::vector<float>(planes[0].size()));
    if (!fixed && !adversarial)
        for (std::size_t i = 0; i < planes.size(); ++i) slots.push_back({planes[i].values(), plane_grads[i]});
    for (const auto& s : detail::encoder_slots(enc)) slots.push_back(s);
    nn::Adam<float> opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);

    TrainLog log;
    log.config_hash = config_hash(cfg);
    log.variant = to_string(cfg.variant);
    detail::DivergenceGuard guard(cfg.divergence_factor);
    // pgd step size: the ball can be crossed in about 2.5 / steps of a step budget.
    const double adv_alpha = cfg.adversarial.attack == Attack::fgsm
                                 ? cfg.adversarial.epsilon
                                 : 2.5 * cfg.adversarial.epsilon / cfg.adversarial.steps;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = detail::shuffled(data.size(), data_rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t len = std::min<std::size_t>(cfg.batch_size, order.size() - start);
            const auto plan = detail::draw_batch(std::span(order).subspan(start, len), planes.size(), cfg.augment,
                                                 side, data_rng);
            enc.zero_grad();
            detail::StepOutcome out;
            if (adversarial) {
                const int iters = cfg.adversarial.steps;
                for (int it = 0; it < iters; ++it) {
                    enc.zero_grad();
                    out = detail::template_step(plan, data, planes, enc, g, run, window, true);
                    for (std::size_t i = 0; i < planes.size(); ++i) {
                        auto v = planes[i].values();
                        const auto s0 = init[i].values();
                        const auto gr = out.grad_set[i].values();
                        for (std::size_t j = 0; j < v.size(); ++j) {
                            const float sgn = gr[j] > 0 ? 1.0f : (gr[j] < 0 ? -1.0f : 0.0f);
                            const float e = static_cast<float>(cfg.adversarial.epsilon);
                            v[j] = std::clamp(static_cast<float>(v[j] - adv_alpha * sgn), s0[j] - e, s0[j] + e);
                        }
                    }
                }
            } else {
                out = detail::template_step(plan, data, planes, enc, g, run, window, !fixed);
                if (!fixed)
                    for (std::size_t i = 0; i < planes.size(); ++i)
                        std::copy(out.grad_set[i].storage().begin(), out.grad_set[i].storage().end(),
                                  plane_grads[i].begin());
            }
            opt.step(slots);
            out.record.epoch = epoch;
            out.record.step = step++;
            guard.check(out.record);
            log.steps.push_back(out.record);
            if (on_step && !on_step(out.record)) break;
        }
        if (g.checksum() != g_checksum) throw Error("train: manipulator parameters changed");
        log.epoch_pairwise_mean.push_back(pairwise_cosine_stats(std::span<const Plane<float>>(planes)).mean);
    }
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {TemplateSet(std::move(planes), cfg.seed), std::move(enc), std::move(log)};
}

inline TrainResult train_fixed_template(TrainConfig cfg, std::span<const Image<float>> data,
                                        const StepCallback& on_step = {})
{
    cfg.variant = TrainVariant::fixed_template;
    return train(cfg, data, on_step);
}

inline TrainResult remove_loss_variant(TrainConfig cfg, std::span<const Image<float>> data, LossTerm dropped,
                                       const StepCallback& on_step = {})
{
    cfg.variant = TrainVariant::remove_loss;
    cfg.dropped = dropped;
    cfg.weights[dropped] = 0.0;
    return train(cfg, data, on_step);
}

inline TrainResult remove_loss_variant(TrainConfig cfg, std::span<const Image<float>> data, std::string_view dropped,
                                       const StepCallback& on_step = {})
{
    return remove_loss_variant(std::move(cfg), data, parse_loss_term(dropped), on_step);
}

inline TrainResult train_adversarial_baseline(TrainConfig cfg, std::span<const Image<float>> data, Attack attack,
                                              double epsilon, int steps, const StepCallback& on_step = {})
{
    cfg.variant = TrainVariant::adversarial;
    cfg.adversarial = {attack, epsilon, steps};
    cfg.adversarial.validate();
    return train(cfg, data, on_step);
}

/// Binary classifier on encrypted-real (label 1) vs manipulated (label 0)
/// pairs. The template set is drawn at init and never updated.
inline PassiveResult train_passive_classifier(TrainConfig cfg, std::span<const Image<float>> data,
                                              const StepCallback& on_step = {})
{
    cfg.variant = TrainVariant::passive;
    cfg.validate();
    const int side = cfg.encoder.input_side;
    detail::require_corpus(data, side);
    const auto t0 = std::chrono::steady_clock::now();
    RngStream root(cfg.seed);
    RngStream init_rng = root.fork(1), clf_rng = root.fork(4), data_rng = root.fork(3);
    TemplateSet set = init_template_set(cfg.n, side, init_rng);
    ClassifierArch arch = cfg.classifier;
    arch.input_side = side;
    PassiveClassifier<float> clf = init_classifier<float>(clf_rng, arch);
    const Manipulator<float> g = make_manipulator<float>(cfg.manipulator.kind, cfg.manipulator.seed, side);
    std::vector<nn::ParamSlot<float>> slots;
    for (auto* p : clf.parameters()) slots.push_back({p->value, p->grad});
    nn::Adam<float> opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);

    TrainLog log;
    log.config_hash = config_hash(cfg);
    log.variant = to_string(cfg.variant);
    detail::DivergenceGuard guard(cfg.divergence_factor);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = detail::shuffled(data.size(), data_rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t len = std::min<std::size_t>(cfg.batch_size, order.size() - start);
            const auto plan = detail::draw_batch(std::span(order).subspan(start, len), set.size(), cfg.augment, side,
                                                 data_rng);
            const auto inputs = detail::build_inputs(plan, data, set.planes(), cfg.encrypt);
            const Tensor<float> real = Tensor<float>::stack(std::span<const Image<float>>(inputs));
            const Tensor<float> x = detail::concat(real, g.forward(real));
            clf.zero_grad();
            typename PassiveClassifier<float>::Tape tape;
            const auto logits = clf.forward(x, Mode::train, &tape);
            std::vector<LogitPair> lp(x.n());
            std::vector<int> labels(x.n());
            for (int i = 0; i < x.n(); ++i) {
                lp[i] = {logits(i, 0), logits(i, 1)};
                labels[i] = i < static_cast<int>(len) ? 1 : 0;
            }
            StepRecord r;
            r.loss.weights = LossWeights::zero();
            r.detection = passive_cross_entropy(lp, labels);
            r.objective = r.detection;
            const auto gl = passive_cross_entropy_grad(lp, labels);
            nn::RowMat<float> glog(x.n(), 2);
            double rs = 0, fs = 0;
            for (int i = 0; i < x.n(); ++i) {
                glog(i, 0) = static_cast<float>(gl[i][0]);
                glog(i, 1) = static_cast<float>(gl[i][1]);
                const double p = real_probability(lp[i][0], lp[i][1]);
                (labels[i] == 1 ? rs : fs) += p / static_cast<double>(len);
            }
            r.real_score = rs;
            r.fake_score = fs;
            clf.backward(tape, glog);
            opt.step(slots);
            r.epoch = epoch;
            r.step = step++;
            guard.check(r);
            log.steps.push_back(r);
            if (on_step && !on_step(r)) break;
        }
        log.epoch_pairwise_mean.push_back(pairwise_cosine_stats(set).mean);
    }
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(clf), std::move(set), std::move(log)};
}

/// Passive baseline evaluated with the same protocol as evaluate_detection;
/// the score is the classifier's probability of "encrypted real".
inline DetectionReport evaluate_passive(PassiveClassifier<float>& clf, const TemplateSet& set,
                                        const Manipulator<float>& g, std::span<const Image<float>> images,
                                        const EvalConfig& cfg, double far = 0.005)
{
    detail::require(!images.empty(), "evaluate_passive: empty corpus");
    RngStream rng = RngStream(cfg.seed).fork(0x6576616CULL);
    std::vector<Image<float>> inputs;
    std::vector<long long> used;
    for (const auto& img : images) {
        const std::size_t t = select_index(set.size(), rng);
        Image<float> real = encrypt(img, set[t], cfg.encrypt);
        Image<float> fake = g(real);
        inputs.push_back(std::move(real));
        inputs.push_back(std::move(fake));
        used.insert(used.end(), {static_cast<long long>(t), static_cast<long long>(t)});
    }
    DetectionReport r;
    for (std::size_t i = 0; i < inputs.size(); i += kRecoverBatch) {
        const auto chunk = std::span<const Image<float>>(inputs).subspan(i, std::min(kRecoverBatch, inputs.size() - i));
        const auto logits = clf.forward(Tensor<float>::stack(chunk), Mode::eval);
        for (int j = 0; j < logits.rows(); ++j) {
            DetectionRow row;
            const std::size_t k = i + static_cast<std::size_t>(j);
            row.path = std::to_string(k / 2) + (k % 2 == 0 ? ":real" : ":" + to_string(g.kind()));
            row.score = real_probability(logits(j, 0), logits(j, 1));
            row.argmax = row.score >= 0.5 ? 1 : 0;
            row.label = k % 2 == 0 ? 1 : 0;
            row.encryption_index = used[k];
            r.rows.push_back(row);
        }
    }
    aggregate(r, std::nullopt, far);
    return r;
}

}  // namespace pimd
