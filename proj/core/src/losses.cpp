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

#include "neurosteer/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "neurosteer/errors.hpp"

namespace neurosteer::loss {

namespace {

std::span<const double> span_of(const Matrix& m) { return {m.data(), static_cast<size_t>(m.size())}; }

}  // namespace

Matrix column(std::span<const double> x) {
  Matrix m(static_cast<Eigen::Index>(x.size()), 1);
  std::copy(x.begin(), x.end(), m.data());
  return m;
}

Matrix column(const signals::AudioSignal& x) { return column(x.view()); }

double si_sdr_loss(std::span<const double> reference, std::span<const double> estimate) {
  return -signals::si_sdr(reference, estimate);
}

Var si_sdr_loss(const Matrix& reference, const Var& estimate) {
  if (reference.cols() != 1 || estimate.cols() != 1 || reference.rows() != estimate.rows()) {
    throw ShapeError("si_sdr_loss: reference and estimate must be equal-length columns");
  }
  // The metric maps NaN to its floor; a training loss must not hide it.
  const double value = estimate.value().allFinite() ? si_sdr_loss(span_of(reference), span_of(estimate.value()))
                                                    : std::numeric_limits<double>::quiet_NaN();
  Matrix out(1, 1);
  out(0, 0) = value;
  ag::Node* pe = estimate.node();
  const Matrix ref = reference;
  return ag::make_op(std::move(out), {estimate}, [pe, ref, value](const Matrix& g) {
    if (!pe->requires_grad) return;
    // Clamped regions are flat.
    if (value <= -signals::kCapDb || value >= -signals::kFloorDb) return;
    const Matrix& e = pe->value;
    const double eps = signals::kEpsilon;
    const double ref_energy = ref.squaredNorm();
    const double alpha = e.col(0).dot(ref.col(0)) / ref_energy;
    const Matrix residual = e - alpha * ref;
    const double num = alpha * alpha * ref_energy;
    const double den = residual.squaredNorm() + eps * e.squaredNorm();
    // d num / d e = 2 alpha s; d den / d e = 2 r + 2 eps e (r is orthogonal to s).
    const double k = 10.0 / std::numbers::ln10;
    // loss = -k (ln num - ln den)
    pe->accumulate(g(0, 0) * (-k) * ((2.0 * alpha / num) * ref - (2.0 / den) * (residual + eps * e)));
  });
}

Var se_loss(const Matrix& s, const Matrix& b, const Var& s_hat, const Var& b_hat) {
  return ag::scale(ag::add(si_sdr_loss(s, s_hat), si_sdr_loss(b, b_hat)), 0.5);
}

double se_loss(std::span<const double> s, std::span<const double> b, std::span<const double> s_hat,
               std::span<const double> b_hat) {
  return 0.5 * (si_sdr_loss(s, s_hat) + si_sdr_loss(b, b_hat));
}

double aad_loss(int y, double y_hat) {
  if (y != 0 && y != 1) throw Error("aad_loss: label must be 0 or 1");
  const double p = std::clamp(y_hat, kProbClamp, 1.0 - kProbClamp);
  return y == 1 ? -std::log(p) : -std::log(1.0 - p);
}

Var aad_loss(int y, const Var& y_hat) {
  if (y_hat.rows() != 1 || y_hat.cols() != 1) throw ShapeError("aad_loss: y_hat must be a scalar");
  const double p_raw = y_hat.value()(0, 0);
  Matrix out(1, 1);
  out(0, 0) = aad_loss(y, p_raw);
  ag::Node* pp = y_hat.node();
  return ag::make_op(std::move(out), {y_hat}, [pp, y, p_raw](const Matrix& g) {
    if (!pp->requires_grad) return;
    if (p_raw < kProbClamp || p_raw > 1.0 - kProbClamp) return;
    Matrix d(1, 1);
    d(0, 0) = g(0, 0) * (y == 1 ? -1.0 / p_raw : 1.0 / (1.0 - p_raw));
    pp->accumulate(d);
  });
}

LossValue finetune_loss(double se, double aad, double alpha) { return {se + alpha * aad, se, aad, alpha}; }

Var finetune_loss(const Var& se, const Var& aad, double alpha) {
  if (alpha == 0.0) return se;
  return ag::add(se, ag::scale(aad, alpha));
}

PitResult pit_loss(const Matrix& s, const Matrix& b, const Var& out0, const Var& out1) {
  const double direct = se_loss(span_of(s), span_of(b), span_of(out0.value()), span_of(out1.value()));
  const double swapped = se_loss(span_of(s), span_of(b), span_of(out1.value()), span_of(out0.value()));
  if (swapped < direct) return {se_loss(s, b, out1, out0), Permutation::kSwapped};
  return {se_loss(s, b, out0, out1), Permutation::kIdentity};
}

std::pair<double, Permutation> pit_loss(std::span<const double> s, std::span<const double> b,
                                        std::span<const double> out0, std::span<const double> out1) {
  const double direct = se_loss(s, b, out0, out1);
  const double swapped = se_loss(s, b, out1, out0);
  if (swapped < direct) return {swapped, Permutation::kSwapped};
  return {direct, Permutation::kIdentity};
}

}  // namespace neurosteer::loss
