// Copyright 2026 The lidsap Authors
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


// Umbrella header.

#pragma once

#include "lidsap/checkpoint.hpp"
#include "lidsap/commands.hpp"
#include "lidsap/config_io.hpp"
#include "lidsap/encoder.hpp"
#include "lidsap/evaluation.hpp"
#include "lidsap/features.hpp"
#include "lidsap/fft.hpp"
#include "lidsap/gradcheck.hpp"
#include "lidsap/gradcheck_suite.hpp"
#include "lidsap/manifest.hpp"
#include "lidsap/model.hpp"
#include "lidsap/ops.hpp"
#include "lidsap/random.hpp"
#include "lidsap/run_config.hpp"
#include "lidsap/sap.hpp"
#include "lidsap/specaugment.hpp"
#include "lidsap/tensor.hpp"
#include "lidsap/training.hpp"
#include "lidsap/wav.hpp"
