// Copyright 2026 The segcond Authors
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

#include "segcond/attention_core.hpp"
#include "segcond/attention_masks.hpp"
#include "segcond/dataset_pipeline.hpp"
#include "segcond/error.hpp"
#include "segcond/evaluation.hpp"
#include "segcond/layout.hpp"
#include "segcond/manifest.hpp"
#include "segcond/png_io.hpp"
#include "segcond/rng.hpp"
#include "segcond/shape_conditioning.hpp"
#include "segcond/tensor.hpp"
#include "segcond/token_grid.hpp"
