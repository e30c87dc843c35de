// SPDX-License-Identifier: Apache-2.0
#include "refl/wavelet.hpp"

#include <cmath>

#include "refl/error.hpp"

namespace refl::wavelet {

Subbands dwt2(const Image& img) {
  const int h = img.height(), w = img.width(), c = img.channels();
  require(h % 2 == 0 && w % 2 == 0, "dwt2 needs even height and width");
  Subbands sb{Image(h / 2, w / 2, c), Image(h / 2, w / 2, c), Image(h / 2, w / 2, c), Image(h / 2, w / 2, c)};
  for (int r = 0; r < h / 2; ++r)
    for (int x = 0; x < w / 2; ++x)
      for (int ch = 0; ch < c; ++ch) {
        const double a = img.at(2 * r, 2 * x, ch), b = img.at(2 * r, 2 * x + 1, ch);
        const double cc = img.at(2 * r + 1, 2 * x, ch), d = img.at(2 * r + 1, 2 * x + 1, ch);
        sb.ll.at(r, x, ch) = 0.5 * (a + b + cc + d);
        sb.hl.at(r, x, ch) = 0.5 * (a - b + cc - d);
        sb.lh.at(r, x, ch) = 0.5 * (a + b - cc - d);
        sb.hh.at(r, x, ch) = 0.5 * (a - b - cc + d);
      }
  return sb;
}

Image idwt2(const Subbands& sb) {
  require(sb.ll.same_shape(sb.lh) && sb.ll.same_shape(sb.hl) && sb.ll.same_shape(sb.hh),
          "idwt2: subband shapes differ");
  const int h = sb.ll.height(), w = sb.ll.width(), c = sb.ll.channels();
  Image out(2 * h, 2 * w, c);
  for (int r = 0; r < h; ++r)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        const double ll = sb.ll.at(r, x, ch), hl = sb.hl.at(r, x, ch);
        const double lh = sb.lh.at(r, x, ch), hh = sb.hh.at(r, x, ch);
        out.at(2 * r, 2 * x, ch) = 0.5 * (ll + hl + lh + hh);
        out.at(2 * r, 2 * x + 1, ch) = 0.5 * (ll - hl + lh - hh);
        out.at(2 * r + 1, 2 * x, ch) = 0.5 * (ll + hl - lh - hh);
        out.at(2 * r + 1, 2 * x + 1, ch) = 0.5 * (ll - hl - lh + hh);
      }
  return out;
}

double dwt_lf_loss(const Image& x, const Image& y) {
  require_same_shape(x, y, "dwt_lf_loss");
  const Image lx = dwt2(x).ll, ly = dwt2(y).ll;
  double acc = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) acc += std::abs(lx.pixels()[i] - ly.pixels()[i]);
  return lx.size() == 0 ? 0.0 : acc / static_cast<double>(lx.size());
}

nn::Var dwt_lf_loss(const nn::Var& x, const nn::Var& y) {
  require(x.shape() == y.shape(), "dwt_lf_loss: shape mismatch " + nn::shape_str(x.shape()) + " vs " +
                                      nn::shape_str(y.shape()));
  return nn::mean(nn::abs(nn::sub(nn::haar_ll(x), nn::haar_ll(y))));
}

}  // namespace refl::wavelet
