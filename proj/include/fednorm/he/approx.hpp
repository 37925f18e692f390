/*
 * Copyright 2026 The fednorm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <vector>

namespace fednorm::he {

/// Odd polynomial f(x) = sum_{i=0}^{n} C(2i,i)/4^i * x (1 - x^2)^i of degree
/// 2n+1. It maps [-1, 1] into itself, fixes +-1 with vanishing derivatives
/// up to order n, and has slope > 1 at 0, so repeated composition converges
/// to sign(x).
class SignPolynomial {
 public:
  explicit SignPolynomial(int degree) {
    const int n = (degree - 1) / 2;
    coeffs_.resize(static_cast<std::size_t>(n) + 1);
    coeffs_[0] = 1.0;
    for (int i = 1; i <= n; ++i) {
      coeffs_[static_cast<std::size_t>(i)] =
          coeffs_[static_cast<std::size_t>(i - 1)] * (2.0 * i - 1.0) / (2.0 * i);
    }
  }

  int degree() const noexcept { return 2 * (static_cast<int>(coeffs_.size()) - 1) + 1; }

  double operator()(double x) const noexcept {
    const double y = 1.0 - x * x;
    double acc = 0.0;
    for (std::size_t i = coeffs_.size(); i-- > 0;) acc = acc * y + coeffs_[i];
    return x * acc;
  }

  /// `stages`-fold composition.
  double composite(double x, int stages) const noexcept {
    for (int s = 0; s < stages; ++s) x = (*this)(x);
    return x;
  }

 private:
  std::vector<double> coeffs_;
};

/// |x| ~ x * sign_approx(x) on [-1, 1]; exactly 0 at 0.
inline double abs_approx(double x, const SignPolynomial& f, int stages) noexcept {
  return x * f.composite(x, stages);
}

}  // namespace fednorm::he
