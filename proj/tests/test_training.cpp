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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pimd/corpus.hpp"
#include "pimd/experiment.hpp"
#include "pimd/training.hpp"

using namespace pimd;
using Catch::Approx;

namespace {

TrainConfig small_config(std::uint64_t seed = 3)
{
    TrainConfig c;
    c.seed = seed;
    c.encoder = EncoderArch{.stem1 = 4, .stem2 = 4, .width = 4, .blocks = 2, .input_side = 32};
    c.classifier.channels = {4, 4, 4, 4, 4, 4, 4, 4};
    c.filter.k = 8;
    c.epochs = 2;
    c.batch_size = 4;
    c.learning_rate = 1e-3;
    return c;
}

std::vector<Image<float>> small_data(std::size_t n = 8) { return synthetic_corpus<float>(9, n, 0, 32).images; }

std::vector<float> flat_params(RecoveryEncoder<float>& enc)
{
    std::vector<float> out;
    for (auto* p : enc.parameters()) out.insert(out.end(), p->value.begin(), p->value.end());
    return out;
}

}  // namespace

TEST_CASE("zero learning rate leaves templates and encoder at their initial values")
{
    auto c = small_config();
    c.learning_rate = 0.0;
    const auto data = small_data();
    auto r = train(c, data);
    RngStream root(c.seed);
    auto init_rng = root.fork(1), enc_rng = root.fork(2);
    CHECK(std::ranges::equal(r.set.planes(), init_template_set(c.n, 32, init_rng).planes()));
    auto enc0 = init_encoder<float>(enc_rng, c.encoder);
    CHECK(flat_params(r.encoder) == flat_params(enc0));
    CHECK(r.log.steps.size() == 4);
}

TEST_CASE("single template logs a zero pairwise term")
{
    auto c = small_config();
    c.n = 1;
    const auto r = train(c, small_data());
    for (const auto& s : r.log.steps) CHECK(s.loss.j_p == 0.0);
    CHECK(r.log.epoch_pairwise_mean == std::vector<double>{0.0, 0.0});
}

TEST_CASE("training is deterministic")
{
    auto c = small_config();
    c.augment = {AugmentStep{.kind = AugmentKind::blur_jpeg}, AugmentStep{.kind = AugmentKind::random_crop, .crop_max = 6},
                 AugmentStep{.kind = AugmentKind::gaussian_noise}};
    const auto data = small_data();
    auto a = train(c, data), b = train(c, data);
    CHECK(a.set == b.set);
    CHECK(a.encoder.checksum() == b.encoder.checksum());
    std::ostringstream la, lb;
    write_log_jsonl(la, a.log);
    write_log_jsonl(lb, b.log);
    CHECK(la.str() == lb.str());
    c.seed = 4;
    CHECK(train(c, data).set != a.set);
}

TEST_CASE("learning moves templates and encoder")
{
    auto c = small_config();
    const auto data = small_data();
    auto r = train(c, data);
    RngStream root(c.seed);
    auto init_rng = root.fork(1);
    CHECK(!std::ranges::equal(r.set.planes(), init_template_set(c.n, 32, init_rng).planes()));
    for (const auto& s : r.log.steps) {
        CHECK(std::isfinite(s.objective));
        CHECK(s.loss.total == Approx(s.loss.weighted_sum()));
        CHECK(s.objective == Approx(s.loss.total + s.detection));
    }
}

TEST_CASE("fixed-template variant keeps the initial set")
{
    auto r = train_fixed_template(small_config(), small_data());
    RngStream root(3);
    auto init_rng = root.fork(1);
    CHECK(std::ranges::equal(r.set.planes(), init_template_set(3, 32, init_rng).planes()));
    CHECK(r.log.variant == "fixed_template");
}

TEST_CASE("remove-loss variant zeroes one weight")
{
    auto r = remove_loss_variant(small_config(), small_data(), "J_c");
    for (const auto& s : r.log.steps) {
        CHECK(s.loss.weights.lambda3 == 0.0);
        CHECK(s.loss.weights.lambda1 == 100.0);
    }
    CHECK_THROWS_AS(remove_loss_variant(small_config(), small_data(), "J_x"), InvalidArgument);
}

TEST_CASE("adversarial baseline stays inside the epsilon ball")
{
    const double eps = 0.02;
    for (auto attack : {Attack::fgsm, Attack::pgd}) {
        auto r = train_adversarial_baseline(small_config(), small_data(), attack, eps, attack == Attack::pgd ? 3 : 1);
        RngStream root(3);
        auto init_rng = root.fork(1);
        const auto init = init_template_set(3, 32, init_rng);
        double moved = 0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < init[i].size(); ++j) {
                const double d = std::abs(double(r.set[i][j]) - init[i][j]);
                CHECK(d <= eps + 1e-6);
                moved = std::max(moved, d);
            }
        CHECK(moved > 0);
    }
    CHECK_THROWS_AS(train_adversarial_baseline(small_config(), small_data(), Attack::fgsm, eps, 3), InvalidArgument);
}

TEST_CASE("passive classifier trains")
{
    auto r = train_passive_classifier(small_config(), small_data());
    CHECK(r.log.steps.size() == 4);
    for (const auto& s : r.log.steps) CHECK(std::isfinite(s.objective));
    const auto g = make_manipulator<float>(ManipulatorKind::fixed_conv, 0, 32);
    const auto rep = evaluate_passive(r.classifier, r.set, g, synthetic_corpus<float>(9, 6, 100, 32).images, {});
    CHECK(rep.rows.size() == 12);
    CHECK(rep.ap.has_value());
}

TEST_CASE("divergence guard")
{
    detail::DivergenceGuard guard(1e6);
    StepRecord r;
    r.objective = r.loss.total = 10.0;
    guard.check(r);
    r.objective = 5e6;
    guard.check(r);
    r.objective = 2e7;
    CHECK_THROWS_AS(guard.check(r), DivergenceError);
    r.objective = std::nan("");
    CHECK_THROWS_AS(guard.check(r), DivergenceError);
}

TEST_CASE("config parsing")
{
    const auto good = nlohmann::json::parse(R"({
        "seed": 5, "manipulator": {"kind": "color_warp", "seed": 2},
        "data": {"source": "synthetic", "seed": 1, "train": 10, "test": 4},
        "n": 10, "strength": 0.5, "augment": [{"name": "blur", "probability": 0.2}],
        "encoder": {"width": 8}, "variant": "remove_loss", "dropped": "J_s"})");
    const auto c = train_config_from_json(good);
    CHECK(c.seed == 5);
    CHECK(c.n == 10);
    CHECK(c.encrypt.strength == 0.5);
    CHECK(c.manipulator.kind == ManipulatorKind::color_warp);
    CHECK(c.encoder.width == 8);
    CHECK(c.weights.lambda4 == 0.0);
    CHECK(c.augment.size() == 1);
    CHECK(c.learning_rate == 1e-5);
    CHECK(c.batch_size == 4);
    CHECK(c.epochs == 10);
    CHECK(c.filter.k == 50);
    // canonical form round-trips to the same hash
    CHECK(config_hash(train_config_from_json(to_json(c))) == config_hash(c));

    for (const char* field : {"seed", "manipulator", "data"}) {
        auto j = good;
        j.erase(field);
        try {
            train_config_from_json(j);
            FAIL("expected a config error");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(field) != std::string::npos);
        }
    }
    auto unknown = good;
    unknown["lerning_rate"] = 1;
    CHECK_THROWS_AS(train_config_from_json(unknown), ConfigError);
    auto bad = good;
    bad["epochs"] = 0;
    CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
    bad = good;
    bad["manipulator"]["kind"] = "stargan";
    CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
}

TEST_CASE("train log JSON lines round trip")
{
    auto r = train(small_config(), small_data());
    std::stringstream ss;
    write_log_jsonl(ss, r.log);
    const auto back = read_log_jsonl(ss);
    REQUIRE(back.steps.size() == r.log.steps.size());
    CHECK(back.config_hash == r.log.config_hash);
    CHECK(back.epoch_pairwise_mean == r.log.epoch_pairwise_mean);
    for (std::size_t i = 0; i < back.steps.size(); ++i) {
        CHECK(back.steps[i].objective == r.log.steps[i].objective);
        CHECK(back.steps[i].loss.j_r == r.log.steps[i].loss.j_r);
    }
}

TEST_CASE("desk run lowers the recovery loss", "[desk]")
{
    TrainConfig c;
    c.seed = 1;
    c.encoder.width = 8;
    c.encoder.stem2 = 8;
    const auto data = synthetic_corpus<float>(0, 500).images;
    const auto r = train(c, data);
    double first = 0, last = 0;
    int nf = 0, nl = 0;
    for (const auto& s : r.log.steps) {
        if (s.epoch == 0) first += s.loss.j_r, ++nf;
        if (s.epoch == c.epochs - 1) last += s.loss.j_r, ++nl;
    }
    INFO("first-epoch mean J_r " << first / nf << ", final-epoch mean J_r " << last / nl);
    CHECK(last / nl < first / nf);
}
