/*
 * Copyright (c) 2026 The tern authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "tern/analysis.hpp"
#include "tern/autodiff.hpp"
#include "tern/common.hpp"
#include "tern/config.hpp"
#include "tern/counters.hpp"
#include "tern/dataset.hpp"
#include "tern/infer.hpp"
#include "tern/kernels.hpp"
#include "tern/model.hpp"
#include "tern/model_io.hpp"
#include "tern/optim.hpp"
#include "tern/packed.hpp"
#include "tern/rel.hpp"
#include "tern/ternary.hpp"
#include "tern/ternary_exec.hpp"
#include "tern/train.hpp"
