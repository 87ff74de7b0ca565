// Copyright 2026 The NMM Authors.
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

#include "nmm/autodiff.hpp"
#include "nmm/error.hpp"
#include "nmm/graph.hpp"
#include "nmm/io.hpp"
#include "nmm/ising.hpp"
#include "nmm/kernel.hpp"
#include "nmm/learning.hpp"
#include "nmm/parallel.hpp"
#include "nmm/parameterize.hpp"
#include "nmm/predict.hpp"
#include "nmm/random.hpp"
#include "nmm/special_fn.hpp"
#include "nmm/synthetic.hpp"
#include "nmm/variational.hpp"
