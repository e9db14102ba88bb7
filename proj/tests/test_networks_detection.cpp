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
#include <sstream>

#include "helpers.hpp"
#include "pimd/detection.hpp"
#include "pimd/metrics.hpp"
#include "pimd/networks.hpp"

using namespace pimd;
using Catch::Approx;

namespace {

constexpr EncoderArch kTiny{.stem1 = 3, .stem2 = 4, .width = 4, .blocks = 2, .input_side = 16};

// Zero-initialized biases put pre-activations exactly on ReLU kinks, where
// central differences are meaningless.
template <typename Net>
void jitter_biases(Net& net, RngStream& rng)
{
    for (auto* p : net.parameters())
        if (p->name.ends_with(".bias"))
            for (auto& v : p->value) v = rng.uniform(-0.1, 0.1);
}

/// Relative check, except that a gradient which is zero analytically (a conv
/// bias feeding batch norm) only has to be zero up to difference noise.
bool grad_close(std::span<const double> num, std::span<const double> ana, double tol)
{
    double nn = 0, na = 0;
    for (std::size_t i = 0; i < num.size(); ++i) {
        nn += num[i] * num[i];
        na += ana[i] * ana[i];
    }
    if (std::sqrt(nn) < 1e-7 && std::sqrt(na) < 1e-7) return true;
    return test::rel_error(num, ana) <= tol;
}

double weighted(const Tensor<double>& y, const std::vector<double>& w)
{
    double acc = 0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * y[i];
    return acc;
}

}  // namespace

TEST_CASE("encoder input gradient matches central differences")
{
    auto rng = make_rng(1);
    auto enc = init_encoder<double>(rng, kTiny);
    jitter_biases(enc, rng);
    Tensor<double> x(2, 3, 16, 16);
    for (auto& v : x.storage()) v = rng.uniform();
    std::vector<double> w(2 * 16 * 16);
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (Mode mode : {Mode::train, Mode::eval}) {
        RecoveryEncoder<double>::Tape tape;
        const auto y = enc.forward(x, mode, &tape);
        Tensor<double> gy(2, 1, 16, 16);
        std::copy(w.begin(), w.end(), gy.data());
        enc.zero_grad();
        const auto gx = enc.backward(tape, gy);
        const auto num = test::numeric_grad(x.storage(), [&] { return weighted(enc.forward(x, mode), w); });
        CHECK(test::rel_error(num, std::span<const double>(gx.storage())) <= 1e-3);
    }
}

TEST_CASE("encoder parameter gradients match central differences")
{
    auto rng = make_rng(2);
    auto enc = init_encoder<double>(rng, kTiny);
    jitter_biases(enc, rng);
    Tensor<double> x(2, 3, 16, 16);
    for (auto& v : x.storage()) v = rng.uniform();
    std::vector<double> w(2 * 16 * 16);
    for (auto& v : w) v = rng.uniform(-1, 1);
    RecoveryEncoder<double>::Tape tape;
    enc.forward(x, Mode::train, &tape);
    Tensor<double> gy(2, 1, 16, 16);
    std::copy(w.begin(), w.end(), gy.data());
    enc.zero_grad();
    enc.backward(tape, gy, false);
    for (auto* p : enc.parameters()) {
        INFO(p->name);
        const auto num = test::numeric_grad(p->value, [&] { return weighted(enc.forward(x, Mode::train), w); });
        CHECK(grad_close(num, p->grad, 1e-3));
    }
}

TEST_CASE("encoder contract")
{
    auto r1 = make_rng(3), r2 = make_rng(3), r3 = make_rng(4);
    auto a = init_encoder<float>(r1), b = init_encoder<float>(r2), c = init_encoder<float>(r3);
    CHECK(a.checksum() == b.checksum());
    CHECK(a.checksum() != c.checksum());
    auto img_rng = make_rng(5);
    Image<float> img(3, 128, 128);
    for (auto& v : img.values()) v = static_cast<float>(img_rng.uniform());
    const auto p1 = a.recover(img), p2 = a.recover(img);
    CHECK(p1.height() == 128);
    CHECK(p1.width() == 128);
    CHECK(p1 == p2);
    CHECK(all_finite(p1.values()));
    CHECK_THROWS_AS(a.recover(Image<float>(3, 64, 64)), ShapeError);
}

TEST_CASE("encoder weights round trip bit exactly")
{
    auto rng = make_rng(6);
    auto enc = init_encoder<float>(rng, EncoderArch{.stem1 = 4, .stem2 = 8, .width = 8, .blocks = 3});
    // move the running statistics off their defaults
    Tensor<float> x(2, 3, 128, 128);
    for (auto& v : x.storage()) v = static_cast<float>(rng.uniform());
    enc.forward(x, Mode::train);
    std::stringstream ss;
    nn::write_weights(ss, std::as_const(enc).state());
    const std::string bytes = ss.str();
    std::stringstream in(bytes);
    auto back = read_encoder(in);
    CHECK(back.arch() == enc.arch());
    CHECK(back.checksum() == enc.checksum());
    std::stringstream again;
    nn::write_weights(again, std::as_const(back).state());
    CHECK(again.str() == bytes);
}

TEST_CASE("passive classifier contract")
{
    auto rng = make_rng(7);
    ClassifierArch arch;
    arch.input_side = 32;
    auto clf = init_classifier<float>(rng, arch);
    Tensor<float> x(3, 3, 32, 32);
    for (auto& v : x.storage()) v = static_cast<float>(rng.uniform());
    const auto l1 = clf.forward(x, Mode::eval), l2 = clf.forward(x, Mode::eval);
    CHECK(l1.cols() == 2);
    CHECK(l1 == l2);
    for (int i = 0; i < 3; ++i) {
        const double p1 = real_probability(l1(i, 0), l1(i, 1));
        const double e0 = std::exp(double(l1(i, 0))), e1 = std::exp(double(l1(i, 1)));
        CHECK(p1 == Approx(e1 / (e0 + e1)).epsilon(1e-9));
        CHECK(e0 / (e0 + e1) + e1 / (e0 + e1) == Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("passive classifier gradients match central differences")
{
    auto rng = make_rng(8);
    ClassifierArch arch;
    arch.channels = {2, 2, 2, 2, 2, 2, 2, 2};
    arch.fc1 = 4;
    arch.fc2 = 3;
    arch.input_side = 16;
    auto clf = init_classifier<double>(rng, arch);
    jitter_biases(clf, rng);
    Tensor<double> x(3, 3, 16, 16);
    for (auto& v : x.storage()) v = rng.uniform();
    nn::RowMat<double> w(3, 2);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) w(i, j) = rng.uniform(-1, 1);
    PassiveClassifier<double>::Tape tape;
    clf.forward(x, Mode::train, &tape);
    clf.zero_grad();
    clf.backward(tape, w);
    auto f = [&] { return clf.forward(x, Mode::train).cwiseProduct(w).sum(); };
    for (auto* p : clf.parameters()) {
        INFO(p->name);
        CHECK(grad_close(test::numeric_grad(p->value, f), p->grad, 1e-3));
    }
}

TEST_CASE("max-cosine scoring")
{
    auto rng = make_rng(9);
    std::vector<Plane<float>> planes;
    for (int i = 0; i < 4; ++i) {
        Plane<float> p(8, 8);
        for (auto& v : p.values()) v = static_cast<float>(rng.uniform(-1, 1));
        planes.push_back(p);
    }
    const TemplateSet set(planes, 0);
    for (std::size_t j = 0; j < 4; ++j) {
        const auto s = max_cosine(set, planes[j]);
        CHECK(s.score == Approx(1.0).epsilon(1e-6));
        CHECK(s.argmax == j);
    }
    const auto z = max_cosine(set, Plane<float>(8, 8));
    CHECK(z.score == 0.0);

    // two templates with cosines 0.6 and -0.2 against the recovered plane
    const Plane<double> a(1, 2, std::vector<double>{1, 0}), b(1, 2, std::vector<double>{0, 1});
    const Plane<double> r(1, 2, std::vector<double>{0.6, 0.8});
    const Plane<double> c(1, 2, std::vector<double>{-0.2 * 0.6 - std::sqrt(1 - 0.04) * 0.8,
                                                    -0.2 * 0.8 + std::sqrt(1 - 0.04) * 0.6});
    const std::vector<Plane<double>> two = {a, c};
    const auto s = max_cosine<double>(two, r);
    CHECK(s.score == Approx(0.6));
    CHECK(s.argmax == 0);
    CHECK(cosine<double>(c.values(), r.values()) == Approx(-0.2));
    (void)b;
}

TEST_CASE("oracle encoder scores 1 with the right index")
{
    auto rng = make_rng(10);
    const auto set = init_template_set(3, 16, rng);
    std::size_t want = 2;
    auto oracle = [&](const Image<float>&) { return set[want]; };
    const Image<float> img(3, 16, 16);
    const auto s = score_image(oracle, set, img);
    CHECK(s.score == Approx(1.0));
    CHECK(s.argmax == want);
}

TEST_CASE("report aggregates recompute from the CSV rows")
{
    auto rng = make_rng(11);
    DetectionReport r;
    for (int i = 0; i < 60; ++i) {
        DetectionRow row;
        row.path = i % 7 == 0 ? "dir, with \"quotes\"/img" + std::to_string(i) + ".png" : "img" + std::to_string(i);
        row.label = i % 2;
        row.score = row.label ? rng.uniform(0.3, 1.0) : rng.uniform(-0.2, 0.6);
        row.argmax = static_cast<std::size_t>(rng.below(3));
        row.encryption_index = static_cast<long long>(rng.below(3));
        r.rows.push_back(row);
    }
    aggregate(r, std::nullopt, 0.05);
    std::stringstream csv;
    write_report_csv(csv, r);
    DetectionReport back;
    back.rows = read_report_csv(csv);
    REQUIRE(back.rows.size() == r.rows.size());
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        CHECK(back.rows[i].path == r.rows[i].path);
        CHECK(back.rows[i].score == r.rows[i].score);
        CHECK(back.rows[i].argmax == r.rows[i].argmax);
        CHECK(back.rows[i].label == r.rows[i].label);
        CHECK(back.rows[i].encryption_index == r.rows[i].encryption_index);
    }
    aggregate(back, std::nullopt, 0.05);
    CHECK(*back.ap == *r.ap);
    CHECK(*back.tdr == *r.tdr);
    CHECK(*back.threshold == *r.threshold);
    const auto j = report_json(r);
    CHECK(j.at("ap").get<double>() == *r.ap);
}
