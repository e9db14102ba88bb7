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
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pimd/core/errors.hpp"
#include "pimd/core/hash.hpp"
#include "pimd/core/rng.hpp"
#include "pimd/core/tensor.hpp"
#include "pimd/nn/layers.hpp"
#include "pimd/nn/weights_io.hpp"

namespace pimd {

using nn::Mode;

/// Layout of the recovery encoder: two stem convolutions, `blocks` blocks of
/// conv3x3-BN-ReLU at `width` channels, and a 1x1 head to one channel.
struct EncoderArch {
    int stem1 = 16;
    int stem2 = 32;
    int width = 32;
    int blocks = 10;
    int input_side = kImageSide;

    friend bool operator==(const EncoderArch&, const EncoderArch&) = default;
};

template <typename T>
class RecoveryEncoder {
public:
    struct Tape {
        Tensor<T> input;
        std::vector<Tensor<T>> activated; // post-ReLU output of stems and blocks; each feeds the next conv
        std::vector<typename nn::BatchNorm2d<T>::Cache> bn;
    };

    RecoveryEncoder() : RecoveryEncoder(EncoderArch{}) {}
    explicit RecoveryEncoder(const EncoderArch& arch) : arch_(arch)
    {
        detail::require(arch.stem1 > 0 && arch.stem2 > 0 && arch.width > 0 && arch.blocks >= 0 && arch.input_side > 0,
                        "EncoderArch: dimensions must be positive");
        stem1_ = nn::Conv2d<T>("stem1", 3, arch.stem1, 3);
        stem2_ = nn::Conv2d<T>("stem2", arch.stem1, arch.stem2, 3);
        int in = arch.stem2;
        for (int b = 0; b < arch.blocks; ++b) {
            const std::string name = "block" + std::to_string(b);
            convs_.emplace_back(name + ".conv", in, arch.width, 3);
            bns_.emplace_back(name + ".bn", arch.width);
            in = arch.width;
        }
        head_ = nn::Conv2d<T>("head", in, 1, 1);
    }

    const EncoderArch& arch() const { return arch_; }

    void init(RngStream& rng)
    {
        stem1_.init(rng);
        stem2_.init(rng);
        for (auto& c : convs_) c.init(rng);
        head_.init(rng, 1.0);
    }

    /// Batch forward: (N, 3, S, S) -> (N, 1, S, S). A tape is required for backward.
    Tensor<T> forward(const Tensor<T>& x, Mode mode, Tape* tape = nullptr)
    {
        detail::require_shape(x.c() == 3 && x.h() == arch_.input_side && x.w() == arch_.input_side,
                              "RecoveryEncoder: expected input of shape 3x" + std::to_string(arch_.input_side) + "x" +
                                  std::to_string(arch_.input_side));
        if (tape) {
            tape->activated.clear();
            tape->bn.assign(convs_.size(), {});
            tape->input = x;
        }
        Tensor<T> hold;
        auto record = [&](Tensor<T>&& t) -> const Tensor<T>& {
            if (!tape) {
                hold = std::move(t);
                return hold;
            }
            tape->activated.push_back(std::move(t));
            return tape->activated.back();
        };
        Tensor<T> z = stem1_.forward(x);
        nn::relu_inplace(z);
        const Tensor<T>* a = &record(std::move(z));
        z = stem2_.forward(*a);
        nn::relu_inplace(z);
        a = &record(std::move(z));
        for (std::size_t b = 0; b < convs_.size(); ++b) {
            z = bns_[b].forward(convs_[b].forward(*a), mode, tape ? &tape->bn[b] : nullptr);
            nn::relu_inplace(z);
            a = &record(std::move(z));
        }
        return head_.forward(*a);
    }

    /// Single-image eval-mode convenience.
    Plane<T> recover(const Image<T>& image)
    {
        const Tensor<T> x = Tensor<T>::stack(std::span<const Image<T>>(&image, 1));
        return forward(x, Mode::eval).plane(0);
    }

    /// Accumulates parameter gradients; returns dL/dinput (empty when not needed).
    Tensor<T> backward(const Tape& tape, const Tensor<T>& gy, bool need_input_grad = true)
    {
        const auto& act = tape.activated;
        std::size_t ai = act.size() - 1;
        Tensor<T> g = head_.backward(act[ai], gy);
        for (std::size_t b = convs_.size(); b-- > 0;) {
            nn::relu_backward_inplace(act[ai], g);
            g = bns_[b].backward(tape.bn[b], g);
            g = convs_[b].backward(act[--ai], g);
        }
        nn::relu_backward_inplace(act[ai], g);
        g = stem2_.backward(act[ai - 1], g);
        nn::relu_backward_inplace(act[ai - 1], g);
        return stem1_.backward(tape.input, g, need_input_grad);
    }

    std::vector<nn::Param<T>*> parameters()
    {
        std::vector<nn::Param<T>*> out{&stem1_.weight, &stem1_.bias, &stem2_.weight, &stem2_.bias};
        for (std::size_t b = 0; b < convs_.size(); ++b) {
            out.push_back(&convs_[b].weight);
            out.push_back(&convs_[b].bias);
            out.push_back(&bns_[b].gamma);
            out.push_back(&bns_[b].beta);
        }
        out.push_back(&head_.weight);
        out.push_back(&head_.bias);
        return out;
    }

    /// Parameters followed by batch-norm running statistics; the serialized state.
    std::vector<nn::Param<T>*> state()
    {
        auto out = parameters();
        for (auto& bn : bns_) {
            out.push_back(&bn.running_mean);
            out.push_back(&bn.running_var);
        }
        return out;
    }

    std::vector<const nn::Param<T>*> state() const
    {
        auto mut = const_cast<RecoveryEncoder*>(this)->state();
        return {mut.begin(), mut.end()};
    }

    void zero_grad()
    {
        for (auto* p : parameters()) p->zero_grad();
    }

    std::uint64_t checksum() const
    {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (const auto* p : state())
            for (T v : p->value) {
                const float f = static_cast<float>(v);
                h = fnv1a({reinterpret_cast<const char*>(&f), sizeof f}, h);
            }
        return h;
    }

    std::size_t parameter_count()
    {
        std::size_t n = 0;
        for (auto* p : parameters()) n += p->size();
        return n;
    }

private:
    EncoderArch arch_;
    nn::Conv2d<T> stem1_, stem2_, head_;
    std::vector<nn::Conv2d<T>> convs_;
    std::vector<nn::BatchNorm2d<T>> bns_;
};

template <typename T>
RecoveryEncoder<T> init_encoder(RngStream& rng, const EncoderArch& arch = {})
{
    RecoveryEncoder<T> enc(arch);
    enc.init(rng);
    return enc;
}

/// Eight conv3x3-BN-ReLU blocks, global average pooling, and three fully
/// connected layers producing two logits (index 1 = encrypted real).
struct ClassifierArch {
    std::array<int, 8> channels = {16, 16, 32, 32, 64, 64, 128, 128};
    std::array<int, 8> strides = {1, 2, 1, 2, 1, 2, 1, 2};
    int fc1 = 64;
    int fc2 = 32;
    int input_side = kImageSide;
};

template <typename T>
class PassiveClassifier {
public:
    struct Tape {
        std::vector<Tensor<T>> conv_in;
        std::vector<Tensor<T>> activated;
        std::vector<typename nn::BatchNorm2d<T>::Cache> bn;
        int pooled_h = 0, pooled_w = 0;
        nn::RowMat<T> pooled, h1, h2;
    };

    PassiveClassifier() : PassiveClassifier(ClassifierArch{}) {}
    explicit PassiveClassifier(const ClassifierArch& arch) : arch_(arch)
    {
        int in = 3;
        for (int b = 0; b < 8; ++b) {
            const std::string name = "block" + std::to_string(b);
            convs_.emplace_back(name + ".conv", in, arch.channels[b], 3, arch.strides[b], 1);
            bns_.emplace_back(name + ".bn", arch.channels[b]);
            in = arch.channels[b];
        }
        fc1_ = nn::Linear<T>("fc1", in, arch.fc1);
        fc2_ = nn::Linear<T>("fc2", arch.fc1, arch.fc2);
        fc3_ = nn::Linear<T>("fc3", arch.fc2, 2);
    }

    void init(RngStream& rng)
    {
        for (auto& c : convs_) c.init(rng);
        fc1_.init(rng);
        fc2_.init(rng);
        fc3_.init(rng, 1.0);
    }

    /// (N, 3, S, S) -> (N, 2) logits.
    nn::RowMat<T> forward(const Tensor<T>& x, Mode mode, Tape* tape = nullptr)
    {
        detail::require_shape(x.c() == 3 && x.h() == arch_.input_side && x.w() == arch_.input_side,
                              "PassiveClassifier: expected input of shape 3x" + std::to_string(arch_.input_side) +
                                  "x" + std::to_string(arch_.input_side));
        Tape local;
        Tape& t = tape ? *tape : local;
        t.conv_in.clear();
        t.activated.clear();
        t.bn.assign(convs_.size(), {});
        Tensor<T> a = x;
        for (std::size_t b = 0; b < convs_.size(); ++b) {
            if (tape) t.conv_in.push_back(a);
            a = bns_[b].forward(convs_[b].forward(a), mode, tape ? &t.bn[b] : nullptr);
            nn::relu_inplace(a);
            if (tape) t.activated.push_back(a);
        }
        const std::size_t hw = static_cast<std::size_t>(a.h()) * a.w();
        t.pooled_h = a.h();
        t.pooled_w = a.w();
        t.pooled = nn::RowMat<T>(a.n(), a.c());
        for (int i = 0; i < a.n(); ++i)
            for (int c = 0; c < a.c(); ++c) {
                T s{0};
                const T* p = a.sample(i) + c * hw;
                for (std::size_t j = 0; j < hw; ++j) s += p[j];
                t.pooled(i, c) = s / static_cast<T>(hw);
            }
        t.h1 = fc1_.forward(t.pooled).cwiseMax(T{0});
        t.h2 = fc2_.forward(t.h1).cwiseMax(T{0});
        return fc3_.forward(t.h2);
    }

    void backward(const Tape& t, const nn::RowMat<T>& glogits)
    {
        nn::RowMat<T> g = fc3_.backward(t.h2, glogits);
        g = g.cwiseProduct((t.h2.array() > T{0}).matrix().template cast<T>());
        g = fc2_.backward(t.h1, g);
        g = g.cwiseProduct((t.h1.array() > T{0}).matrix().template cast<T>());
        g = fc1_.backward(t.pooled, g);
        const int n = static_cast<int>(g.rows()), c = static_cast<int>(g.cols());
        Tensor<T> ga(n, c, t.pooled_h, t.pooled_w);
        const std::size_t hw = static_cast<std::size_t>(t.pooled_h) * t.pooled_w;
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch) {
                const T v = g(i, ch) / static_cast<T>(hw);
                T* p = ga.sample(i) + ch * hw;
                std::fill(p, p + hw, v);
            }
        for (std::size_t b = convs_.size(); b-- > 0;) {
            nn::relu_backward_inplace(t.activated[b], ga);
            ga = bns_[b].backward(t.bn[b], ga);
            ga = convs_[b].backward(t.conv_in[b], ga, b > 0);
        }
    }

    std::vector<nn::Param<T>*> parameters()
    {
        std::vector<nn::Param<T>*> out;
        for (std::size_t b = 0; b < convs_.size(); ++b) {
            out.push_back(&convs_[b].weight);
            out.push_back(&convs_[b].bias);
            out.push_back(&bns_[b].gamma);
            out.push_back(&bns_[b].beta);
        }
        for (auto* l : {&fc1_, &fc2_, &fc3_}) {
            out.push_back(&l->weight);
            out.push_back(&l->bias);
        }
        return out;
    }

    std::vector<nn::Param<T>*> state()
    {
        auto out = parameters();
        for (auto& bn : bns_) {
            out.push_back(&bn.running_mean);
            out.push_back(&bn.running_var);
        }
        return out;
    }

    std::vector<const nn::Param<T>*> state() const
    {
        auto mut = const_cast<PassiveClassifier*>(this)->state();
        return {mut.begin(), mut.end()};
    }

    void zero_grad()
    {
        for (auto* p : parameters()) p->zero_grad();
    }

private:
    ClassifierArch arch_;
    std::vector<nn::Conv2d<T>> convs_;
    std::vector<nn::BatchNorm2d<T>> bns_;
    nn::Linear<T> fc1_, fc2_, fc3_;
};

template <typename T>
PassiveClassifier<T> init_classifier(RngStream& rng, const ClassifierArch& arch = {})
{
    PassiveClassifier<T> clf(arch);
    clf.init(rng);
    return clf;
}

/// Softmax probability of the "encrypted real" class.
inline double real_probability(double logit_fake, double logit_real)
{
    return 1.0 / (1.0 + std::exp(logit_fake - logit_real));
}

template <typename T>
void save_encoder(const std::filesystem::path& path, const RecoveryEncoder<T>& enc)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    nn::write_weights(os, enc.state());
    if (!os) throw FormatError("write failed: " + path.string());
}

/// Recovers the architecture from tensor shapes, then loads the values.
inline RecoveryEncoder<float> read_encoder(std::istream& is, int input_side = kImageSide)
{
    const auto stored = nn::read_weights(is);
    auto dim = [&](const std::string& name, std::size_t axis) {
        const auto it = stored.find(name);
        if (it == stored.end() || it->second.shape.size() <= axis)
            throw FormatError("weights file lacks tensor '" + name + "'");
        return it->second.shape[axis];
    };
    EncoderArch arch;
    arch.input_side = input_side;
    arch.stem1 = dim("stem1.weight", 0);
    arch.stem2 = dim("stem2.weight", 0);
    arch.blocks = 0;
    while (stored.count("block" + std::to_string(arch.blocks) + ".conv.weight")) ++arch.blocks;
    arch.width = arch.blocks > 0 ? dim("block0.conv.weight", 0) : arch.stem2;
    RecoveryEncoder<float> enc(arch);
    nn::assign_weights(stored, enc.state());
    return enc;
}

inline RecoveryEncoder<float> load_encoder(const std::filesystem::path& path, int input_side = kImageSide)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open weights file " + path.string());
    return read_encoder(is, input_side);
}

}  // namespace pimd
