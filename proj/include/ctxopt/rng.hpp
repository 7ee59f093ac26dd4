// Copyright 2026 The ctxopt Authors
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

#ifndef CTXOPT_RNG_HPP_
#define CTXOPT_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace ctxopt {

// FNV-1a, used to fold task ids into seeds.
std::uint64_t hash_string(std::string_view text);

// Combines seed components with splitmix64 so that every (run seed,
// iteration, task, rollout) tuple gets its own stream independent of
// scheduling order.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

// Thin wrapper over mt19937_64. The distributions are hand-rolled because the
// standard ones are implementation-defined, and checkpoints must be
// byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ctxopt

#endif  // CTXOPT_RNG_HPP_
