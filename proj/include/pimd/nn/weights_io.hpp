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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pimd/core/binary_io.hpp"
#include "pimd/core/errors.hpp"
#include "pimd/nn/layers.hpp"

namespace pimd::nn {

inline constexpr std::uint16_t kWeightsFormatVersion = 1;

// Weights file:
//   "PIMW" | u16 version | u32 count
//   count x { u32 name_len | name bytes | u32 rank | rank x u32 dim }
//   payloads of every tensor in manifest order, f32 row-major
// All little-endian.
template <typename T>
void write_weights(std::ostream& os, const std::vector<const Param<T>*>& tensors)
{
    binio::put_magic(os, "PIMW");
    binio::put_uint<std::uint16_t>(os, kWeightsFormatVersion);
    binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto* p : tensors) {
        binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(p->shape.size()));
        for (int d : p->shape) binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    }
    for (const auto* p : tensors)
        for (T v : p->value) binio::put_f32(os, static_cast<float>(v));
}

struct NamedTensor {
    std::vector<int> shape;
    std::vector<float> values;
};

inline std::map<std::string, NamedTensor> read_weights(std::istream& is)
{
    binio::expect_magic(is, "PIMW");
    const auto version = binio::get_uint<std::uint16_t>(is);
    if (version != kWeightsFormatVersion)
        throw FormatError("unsupported weights format version " + std::to_string(version));
    const auto count = binio::get_uint<std::uint32_t>(is);
    if (count > 100000) throw FormatError("implausible tensor count in weights file");
    std::vector<std::pair<std::string, NamedTensor>> manifest;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = binio::get_uint<std::uint32_t>(is);
        if (len > 4096) throw FormatError("implausible tensor name length");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw FormatError("unexpected end of file");
        const auto rank = binio::get_uint<std::uint32_t>(is);
        if (rank > 8) throw FormatError("implausible tensor rank");
        NamedTensor t;
        std::size_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.shape.push_back(static_cast<int>(binio::get_uint<std::uint32_t>(is)));
            n *= static_cast<std::size_t>(t.shape.back());
        }
        if (n > (1u << 28)) throw FormatError("implausible tensor size");
        t.values.resize(n);
        manifest.emplace_back(std::move(name), std::move(t));
    }
    std::map<std::string, NamedTensor> out;
    for (auto& [name, t] : manifest) {
        for (auto& v : t.values) v = binio::get_f32(is);
        if (!out.emplace(name, std::move(t)).second) throw FormatError("duplicate tensor '" + name + "'");
    }
    return out;
}

/// Copies stored values into tensors by name; names and shapes must match exactly.
template <typename T>
void assign_weights(const std::map<std::string, NamedTensor>& stored, const std::vector<Param<T>*>& tensors)
{
    if (stored.size() != tensors.size()) throw FormatError("weights file does not match the architecture");
    for (auto* p : tensors) {
        const auto it = stored.find(p->name);
        if (it == stored.end()) throw FormatError("weights file lacks tensor '" + p->name + "'");
        if (it->second.shape != p->shape) throw FormatError("shape mismatch for tensor '" + p->name + "'");
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(it->second.values[i]);
    }
}

}  // namespace pimd::nn
