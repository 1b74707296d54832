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

#include <cstdint>

namespace tern {

// Arithmetic instrumentation for the conv/dense kernels. Scoped counting keeps
// the hot loops free of any cost when no scope is active (one predictable
// branch per accumulation).
struct OpCounters {
  std::uint64_t weight_mul = 0;  // activation x weight multiplies (FP path)
  std::uint64_t add_sub = 0;     // accumulations (+x / -x in the ternary path)
  std::uint64_t alpha_mul = 0;   // per-output-element alpha scalings

  void reset() { *this = OpCounters{}; }
};

namespace detail {
inline thread_local OpCounters* g_counters = nullptr;
}

class CounterScope {
 public:
  explicit CounterScope(OpCounters& c) : prev_(detail::g_counters) { detail::g_counters = &c; }
  ~CounterScope() { detail::g_counters = prev_; }
  CounterScope(const CounterScope&) = delete;
  CounterScope& operator=(const CounterScope&) = delete;

 private:
  OpCounters* prev_;
};

inline OpCounters* active_counters() { return detail::g_counters; }

inline void count_weight_mul(std::uint64_t n) {
  if (detail::g_counters) detail::g_counters->weight_mul += n;
}
inline void count_add_sub(std::uint64_t n) {
  if (detail::g_counters) detail::g_counters->add_sub += n;
}
inline void count_alpha_mul(std::uint64_t n) {
  if (detail::g_counters) detail::g_counters->alpha_mul += n;
}

}  // namespace tern
