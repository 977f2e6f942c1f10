// Copyright (c) 2026 The defsdf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "defsdf/autodiff.hpp"
#include "defsdf/common.hpp"
#include "defsdf/config.hpp"
#include "defsdf/datagen.hpp"
#include "defsdf/fieldnet.hpp"
#include "defsdf/geometry.hpp"
#include "defsdf/inference.hpp"
#include "defsdf/io.hpp"
#include "defsdf/kdtree.hpp"
#include "defsdf/losses.hpp"
#include "defsdf/marching_cubes.hpp"
#include "defsdf/metrics.hpp"
#include "defsdf/optim.hpp"
#include "defsdf/reconstruct.hpp"
#include "defsdf/sdf_sampling.hpp"
#include "defsdf/training.hpp"
