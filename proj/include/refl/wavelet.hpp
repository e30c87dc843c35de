// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "refl/image.hpp"
#include "refl/nn/ops.hpp"

namespace refl::wavelet {

// Single-level orthonormal Haar bands, each (H/2)x(W/2)xC. For a 2x2 block
// [a b; c d]:
//   ll = (a+b+c+d)/2   hl = (a-b+c-d)/2 (high-pass along columns)
//   lh = (a+b-c-d)/2 (high-pass along rows)   hh = (a-b-c+d)/2
struct Subbands {
  Image ll, lh, hl, hh;
};

Subbands dwt2(const Image& img);
Image idwt2(const Subbands& sb);

// Mean |LL(x) - LL(y)| over all LL coefficients.
double dwt_lf_loss(const Image& x, const Image& y);
// Batched NCHW form; differentiable in x. Returns a scalar.
nn::Var dwt_lf_loss(const nn::Var& x, const nn::Var& y);

}  // namespace refl::wavelet
