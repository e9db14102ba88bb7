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

#include "pimd/augment.hpp"
#include "pimd/core/cosine.hpp"
#include "pimd/core/errors.hpp"
#include "pimd/core/hash.hpp"
#include "pimd/core/rng.hpp"
#include "pimd/core/settings.hpp"
#include "pimd/core/tensor.hpp"
#include "pimd/corpus.hpp"
#include "pimd/detection.hpp"
#include "pimd/experiment.hpp"
#include "pimd/fourier.hpp"
#include "pimd/image_io.hpp"
#include "pimd/losses.hpp"
#include "pimd/manipulators.hpp"
#include "pimd/metrics.hpp"
#include "pimd/networks.hpp"
#include "pimd/plot.hpp"
#include "pimd/template_set.hpp"
#include "pimd/training.hpp"
