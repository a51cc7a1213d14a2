// Copyright 2026 The ese-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "ese/container.hpp"
#include "ese/csc.hpp"
#include "ese/error.hpp"
#include "ese/fixed_point.hpp"
#include "ese/lstm.hpp"
#include "ese/lut.hpp"
#include "ese/matrix.hpp"
#include "ese/model_io.hpp"
#include "ese/pipeline.hpp"
#include "ese/prune.hpp"
#include "ese/quantized_lstm.hpp"
#include "ese/schedule.hpp"
#include "ese/simulate.hpp"
#include "ese/synthetic.hpp"
