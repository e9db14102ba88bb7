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

#include <stdexcept>
#include <string>

namespace pimd {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or plane dimensions do not agree with an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value violates a documented precondition (n = 0, m outside [0,1], ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed or incomplete experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite or runaway loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// JPEG/PNG encode or decode failure.
class CodecError : public Error {
public:
    using Error::Error;
};

/// Artifact file (template set, weights) could not be read or is malformed.
class FormatError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what)
{
    if (!cond) throw InvalidArgument(what);
}

inline void require_shape(bool cond, const std::string& what)
{
    if (!cond) throw ShapeError(what);
}

}  // namespace detail
}  // namespace pimd
