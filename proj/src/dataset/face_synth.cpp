// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "refl/dataset.hpp"
#include "refl/error.hpp"

namespace refl::dataset {

namespace {

using Rgb = std::array<double, 3>;

constexpr std::array<Rgb, 5> kSkin = {{{0.96, 0.84, 0.74},
                                       {0.88, 0.72, 0.58},
                                       {0.76, 0.57, 0.42},
                                       {0.58, 0.41, 0.28},
                                       {0.40, 0.27, 0.18}}};
constexpr std::array<Rgb, 4> kHair = {{{0, 0, 0}, {0.12, 0.09, 0.07}, {0.45, 0.28, 0.12}, {0.85, 0.72, 0.40}}};
constexpr Rgb kSclera = {0.95, 0.95, 0.93};
constexpr Rgb kIris = {0.16, 0.12, 0.10};
constexpr Rgb kFrame = {0.10, 0.10, 0.12};
constexpr Rgb kLips = {0.55, 0.15, 0.18};
constexpr Rgb kMouthOpen = {0.30, 0.05, 0.08};

// Approximate signed distance (pixels) to an axis-aligned ellipse.
double ellipse_sd(double row, double col, double cy, double cx, double ry, double rx) {
  const double u = (row - cy) / ry, v = (col - cx) / rx;
  return (std::sqrt(u * u + v * v) - 1.0) * std::min(ry, rx);
}

double coverage(double sd) { return std::clamp(0.5 - sd, 0.0, 1.0); }

void blend(Image& img, int r, int c, const Rgb& colour, double alpha) {
  if (alpha <= 0.0) return;
  for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) += alpha * (colour[ch] - img.at(r, c, ch));
}

double glasses_alpha(const FaceGeometry& g, double row, double col) {
  const double s = g.size / 64.0;
  double a = 0.0;
  for (double side : {-1.0, 1.0}) {
    const double ex = g.cx + side * g.eye_dx;
    const double outer = ellipse_sd(row, col, g.eye_row, ex, g.eye_ry + 2.6 * s, g.eye_rx + 2.6 * s);
    const double inner = ellipse_sd(row, col, g.eye_row, ex, g.eye_ry + 1.4 * s, g.eye_rx + 1.4 * s);
    a = std::max(a, coverage(outer) - coverage(inner));
  }
  const double bridge_l = g.cx - g.eye_dx + g.eye_rx + 2.0 * s;
  const double bridge_r = g.cx + g.eye_dx - g.eye_rx - 2.0 * s;
  if (col >= bridge_l && col <= bridge_r) a = std::max(a, coverage(std::abs(row - g.eye_row) - 0.5 * s));
  return a;
}

// Returns (alpha, colour) of the mouth layer at a pixel.
std::pair<double, Rgb> mouth_layer(const FaceGeometry& g, int expression, double row, double col) {
  const double s = g.size / 64.0;
  const double w = g.mouth_half_width;
  const double u = (col - g.cx) / w;
  switch (expression) {
    case 0: {
      if (std::abs(u) > 1.0) return {coverage(std::hypot(std::abs(col - g.cx) - w, row - g.mouth_row) - 0.7 * s), kLips};
      return {coverage(std::abs(row - g.mouth_row) - 0.7 * s), kLips};
    }
    case 1: {
      const double uc = std::clamp(u, -1.0, 1.0);
      const double curve = g.mouth_row + 1.5 * s * (1.0 - 2.0 * uc * uc);
      const double dc = std::abs(col - g.cx) > w ? std::abs(col - g.cx) - w : 0.0;
      return {coverage(std::hypot(dc, row - curve) - 0.7 * s), kLips};
    }
    default:
      return {coverage(ellipse_sd(row, col, g.mouth_row, g.cx, 2.6 * s, 0.7 * w)), kMouthOpen};
  }
}

// Smooth value noise on a (cells+1)^2 lattice, bilinearly interpolated.
std::vector<double> value_noise(Rng& rng, int size, int cells, double amplitude) {
  std::vector<double> lattice(static_cast<std::size_t>(cells + 1) * (cells + 1));
  for (auto& v : lattice) v = amplitude * (2.0 * rng.uniform() - 1.0);
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  const double step = static_cast<double>(cells) / size;
  for (int r = 0; r < size; ++r) {
    const double fy = (r + 0.5) * step;
    const int iy = std::min(static_cast<int>(fy), cells - 1);
    const double ty = fy - iy;
    for (int c = 0; c < size; ++c) {
      const double fx = (c + 0.5) * step;
      const int ix = std::min(static_cast<int>(fx), cells - 1);
      const double tx = fx - ix;
      auto at = [&](int y, int x) { return lattice[static_cast<std::size_t>(y) * (cells + 1) + x]; };
      out[static_cast<std::size_t>(r) * size + c] = (1 - ty) * ((1 - tx) * at(iy, ix) + tx * at(iy, ix + 1)) +
                                                     ty * ((1 - tx) * at(iy + 1, ix) + tx * at(iy + 1, ix + 1));
    }
  }
  return out;
}

}  // namespace

std::array<int, kNumAttributes> attribute_values(const Attributes& a) {
  return {a.skin_tone, a.glasses, a.hair, a.expression};
}

Attributes attributes_from_values(const std::array<int, kNumAttributes>& v) {
  Attributes a{v[0], v[1], v[2], v[3]};
  validate(a);
  return a;
}

void validate(const Attributes& a) {
  const auto v = attribute_values(a);
  for (int i = 0; i < kNumAttributes; ++i)
    if (v[i] < 0 || v[i] >= kAttributeCardinality[i])
      fail(ErrorCode::kInvalidArgument, std::string("attribute ") + kAttributeNames[i] + "=" + std::to_string(v[i]) +
                                            " outside [0, " + std::to_string(kAttributeCardinality[i] - 1) + "]");
}

Json to_json(const Attributes& a) {
  Json j = Json::object();
  const auto v = attribute_values(a);
  for (int i = 0; i < kNumAttributes; ++i) j[kAttributeNames[i]] = v[i];
  return j;
}

Attributes attributes_from_json(const Json& j) {
  std::array<int, kNumAttributes> v{};
  for (int i = 0; i < kNumAttributes; ++i) {
    if (!j.contains(kAttributeNames[i])) fail(ErrorCode::kInvalidArgument, std::string("missing attribute ") + kAttributeNames[i]);
    v[i] = j.at(kAttributeNames[i]).get<int>();
  }
  return attributes_from_values(v);
}

Attributes sample_attributes(Rng& rng) {
  std::array<int, kNumAttributes> v{};
  for (int i = 0; i < kNumAttributes; ++i) v[i] = static_cast<int>(rng.uniform_int(0, kAttributeCardinality[i] - 1));
  return attributes_from_values(v);
}

bool FaceGeometry::inside_head(double row, double col) const {
  const double u = (row - cy) / ry, v = (col - cx) / rx;
  return u * u + v * v < 1.0;
}

FaceGeometry face_geometry(std::uint64_t seed, int size) {
  require(size >= 32 && size % 8 == 0, "face size must be a multiple of 8 and at least 32");
  Rng rng(Rng::derive(seed, 1));
  const double s = size / 64.0;
  FaceGeometry g;
  g.size = size;
  g.cx = size / 2.0 + rng.uniform(-3.0, 3.0) * s;
  g.cy = size / 2.0 + rng.uniform(0.0, 3.0) * s;
  g.rx = rng.uniform(17.0, 20.0) * s;
  g.ry = rng.uniform(21.0, 24.0) * s;
  g.eye_row = g.cy - rng.uniform(0.12, 0.22) * g.ry;
  g.eye_dx = rng.uniform(0.36, 0.44) * g.rx;
  g.eye_rx = rng.uniform(2.6, 3.4) * s;
  g.eye_ry = rng.uniform(1.6, 2.2) * s;
  g.mouth_row = g.cy + rng.uniform(0.42, 0.52) * g.ry;
  g.mouth_half_width = rng.uniform(0.28, 0.36) * g.rx;
  g.hair_line = g.cy - 0.7 * g.ry;
  return g;
}

std::vector<std::uint8_t> attribute_region(const FaceGeometry& g, int index) {
  require(index >= 0 && index < kNumAttributes, "attribute index out of range");
  const double s = g.size / 64.0;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(g.size) * g.size, 0);
  for (int r = 0; r < g.size; ++r)
    for (int c = 0; c < g.size; ++c) {
      bool in = false;
      switch (index) {
        case 0:
          in = ellipse_sd(r, c, g.cy, g.cx, g.ry, g.rx) < 1.0;
          break;
        case 1:
          in = std::abs(r - g.eye_row) <= g.eye_ry + 4.0 * s && std::abs(c - g.cx) <= g.eye_dx + g.eye_rx + 4.0 * s;
          break;
        case 2:
          in = ellipse_sd(r, c, g.cy, g.cx, 1.12 * g.ry, 1.12 * g.rx) < 1.0 && r < g.hair_line + 1.0;
          break;
        default:
          in = std::abs(r - g.mouth_row) <= 5.0 * s && std::abs(c - g.cx) <= g.mouth_half_width + 3.0 * s;
      }
      mask[static_cast<std::size_t>(r) * g.size + c] = in ? 1 : 0;
    }
  return mask;
}

SyntheticFace face_synth(std::uint64_t seed, const Attributes& attrs, int size) {
  validate(attrs);
  SyntheticFace face;
  face.seed = seed;
  face.attrs = attrs;
  face.geometry = face_geometry(seed, size);
  const FaceGeometry& g = face.geometry;

  Rng look(Rng::derive(seed, 2));
  const Rgb bg = {look.uniform(0.55, 0.80), look.uniform(0.55, 0.80), look.uniform(0.60, 0.85)};
  const double bg_slope = look.uniform(-0.12, 0.12);
  const auto coarse = value_noise(look, size, 8, 0.035);
  const auto fine = value_noise(look, size, 16, 0.02);

  Image img(size, size, 3);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double t = static_cast<double>(r) / size - 0.5;
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = bg[ch] + bg_slope * t;

      blend(img, r, c, kSkin[attrs.skin_tone], coverage(ellipse_sd(r, c, g.cy, g.cx, g.ry, g.rx)));

      if (attrs.hair > 0) {
        const double cap = coverage(ellipse_sd(r, c, g.cy, g.cx, 1.12 * g.ry, 1.12 * g.rx));
        blend(img, r, c, kHair[attrs.hair], cap * std::clamp(g.hair_line - r + 0.5, 0.0, 1.0));
      }

      for (double side : {-1.0, 1.0}) {
        const double ex = g.cx + side * g.eye_dx;
        blend(img, r, c, kSclera, coverage(ellipse_sd(r, c, g.eye_row, ex, g.eye_ry, g.eye_rx)));
        blend(img, r, c, kIris, coverage(std::hypot(r - g.eye_row, c - ex) - 0.8 * g.eye_ry));
      }

      if (attrs.glasses == 1) blend(img, r, c, kFrame, glasses_alpha(g, r, c));

      const auto [ma, mc] = mouth_layer(g, attrs.expression, r, c);
      blend(img, r, c, mc, ma);

      const double tex = coarse[static_cast<std::size_t>(r) * size + c] + fine[static_cast<std::size_t>(r) * size + c];
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = std::clamp(img.at(r, c, ch) + tex, 0.0, 1.0);
    }
  face.image = std::move(img);
  face.landmarks = {{"left_eye", g.eye_row, g.cx - g.eye_dx},
                    {"right_eye", g.eye_row, g.cx + g.eye_dx},
                    {"mouth", g.mouth_row, g.cx}};
  return face;
}

}  // namespace refl::dataset
