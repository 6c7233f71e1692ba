// Copyright 2026 The neurosteer Authors
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

// Training objectives. Every loss has a differentiable form over ag::Var
// (estimates as T x 1 columns, references as constants) and a plain scalar
// form used by evaluation code and tests.
#pragma once

#include <span>
#include <string>
#include <utility>

#include "neurosteer/autograd.hpp"
#include "neurosteer/signals.hpp"

namespace neurosteer::loss {

using ag::Matrix;
using ag::Var;

// BCE probability clamp.
inline constexpr double kProbClamp = 1e-7;

// Negative SI-SDR in dB. Zero gradient where the value is clamped.
Var si_sdr_loss(const Matrix& reference, const Var& estimate);
double si_sdr_loss(std::span<const double> reference, std::span<const double> estimate);

// Mean of the two fixed-stream losses: target on stream 0, interferer on 1.
Var se_loss(const Matrix& s, const Matrix& b, const Var& s_hat, const Var& b_hat);
double se_loss(std::span<const double> s, std::span<const double> b, std::span<const double> s_hat,
               std::span<const double> b_hat);

// -y log(p) - (1-y) log(1-p) with p clamped to [1e-7, 1-1e-7].
Var aad_loss(int y, const Var& y_hat);
double aad_loss(int y, double y_hat);

struct LossValue {
  double value = 0.0;
  double se = 0.0;
  double aad = 0.0;
  double alpha = 1.0;
};

// L = se + alpha * aad.
LossValue finetune_loss(double se, double aad, double alpha);
Var finetune_loss(const Var& se, const Var& aad, double alpha);

enum class Permutation { kIdentity, kSwapped };

struct PitResult {
  Var loss;
  Permutation permutation = Permutation::kIdentity;
};

// Minimum over the two output-to-source pairings of the mean SI-SDR loss.
PitResult pit_loss(const Matrix& s, const Matrix& b, const Var& out0, const Var& out1);
std::pair<double, Permutation> pit_loss(std::span<const double> s, std::span<const double> b,
                                        std::span<const double> out0, std::span<const double> out1);

Matrix column(std::span<const double> x);
Matrix column(const signals::AudioSignal& x);

}  // namespace neurosteer::loss
