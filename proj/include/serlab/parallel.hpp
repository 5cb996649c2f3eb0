// Copyright 2026 The SER Lab Authors. All Rights Reserved.
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

#include <cstddef>
#include <functional>

namespace serlab {

/// Worker count for data-pipeline parallelism. Honors SER_LAB_THREADS; falls
/// back to the hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Callers must
/// make fn(i) depend only on i so results are schedule-independent. The first
/// exception thrown by any task is rethrown after all workers join. Nested
/// calls made from a worker run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t max_workers = 0);

}  // namespace serlab
