// SPDX-License-Identifier: Apache-2.0
#include "refl/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "refl/error.hpp"

namespace refl::nn {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

// Gradient buffer of parent i, or nullptr when that parent is constant.
Tensor* pgrad(Node& self, std::size_t i) {
  return self.parent_needs_grad[i] ? &self.parents[i]->grad_buffer() : nullptr;
}

const Tensor& pval(Node& self, std::size_t i) { return self.parents[i]->value; }

void check_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorCode::kInvalidArgument,
         std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank)
    fail(ErrorCode::kInvalidArgument, std::string(op) + ": expected rank " + std::to_string(rank) +
                                          ", got " + shape_str(x.shape()));
}

template <class F, class G>
Var unary(const Var& x, F f, G dfdx) {
  Tensor out = Tensor::zeros_like(x.value());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(std::move(out), {x}, [dfdx](Node& self) {
    if (Tensor* gx = pgrad(self, 0)) {
      const Tensor& xv = pval(self, 0);
      for (std::size_t i = 0; i < xv.size(); ++i) (*gx)[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (Tensor* g = pgrad(self, k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (Tensor* g = pgrad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = pval(self, 0);
    const Tensor& bv = pval(self, 1);
    if (Tensor* g = pgrad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (Tensor* g = pgrad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

Var scale(const Var& x, double c) {
  return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var abs(const Var& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var silu(const Var& x) {
  return unary(
      x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Var clamp01(const Var& x) {
  return unary(
      x, [](double v) { return std::clamp(v, 0.0, 1.0); },
      [](double v, double) { return (v >= 0.0 && v <= 1.0) ? 1.0 : 0.0; });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_result(Tensor::scalar(s), {x}, [](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (auto& v : g->values()) v += self.grad[0];
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  require(n > 0, "mean of empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var mean_per_sample(const Var& x) {
  require(x.shape().size() >= 1, "mean_per_sample needs a batch axis");
  const int n = x.shape()[0];
  const std::size_t per = n > 0 ? x.value().size() / static_cast<std::size_t>(n) : 0;
  Tensor out({n});
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) s += x.value()[i * per + j];
    out[i] = s / static_cast<double>(per);
  }
  return make_result(std::move(out), {x}, [n, per](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < per; ++j) (*g)[i * per + j] += self.grad[i] / static_cast<double>(per);
  });
}

Var mul_scalar(const Var& x, const Var& s) {
  require(s.value().size() == 1, "mul_scalar: s must have one element");
  const double sv = s.value()[0];
  Tensor out = x.value();
  for (auto& v : out.values()) v *= sv;
  return make_result(std::move(out), {x, s}, [](Node& self) {
    const Tensor& xv = pval(self, 0);
    const double sv = pval(self, 1)[0];
    if (Tensor* g = pgrad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * sv;
    if (Tensor* g = pgrad(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
      (*g)[0] += acc;
    }
  });
}

Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  require(scalars.size() == weights.size() && !scalars.empty(), "weighted_sum: size mismatch");
  double total = 0.0;
  std::vector<Var> inputs;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    require(scalars[i].value().size() == 1, "weighted_sum: inputs must be scalars");
    total += weights[i] * scalars[i].value()[0];
    inputs.push_back(scalars[i]);
  }
  std::vector<double> w(weights.begin(), weights.end());
  return make_result(Tensor::scalar(total), std::move(inputs), [w](Node& self) {
    for (std::size_t i = 0; i < w.size(); ++i)
      if (Tensor* g = pgrad(self, i)) (*g)[0] += w[i] * self.grad[0];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  check_rank(x, 4, "conv2d");
  check_rank(w, 4, "conv2d weight");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
  const int o = w.shape()[0], k = w.shape()[2];
  if (w.shape()[1] != c || w.shape()[3] != k)
    fail(ErrorCode::kInvalidArgument,
         "conv2d: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: output would be empty");
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.value().size() == static_cast<std::size_t>(o), "conv2d: bias size");

  const int ckk = c * k * k;
  const int hw = ho * wo;
  const bool keep_cols = grad_enabled() && w.requires_grad();
  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(keep_cols ? n : 1) * ckk * hw);

  auto im2col = [=](const double* xin, double* col) {
    for (int ch = 0; ch < c; ++ch)
      for (int ki = 0; ki < k; ++ki)
        for (int kj = 0; kj < k; ++kj) {
          double* row = col + static_cast<std::size_t>((ch * k + ki) * k + kj) * hw;
          const double* plane = xin + static_cast<std::size_t>(ch) * h * wd;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * stride - pad + ki;
            double* dst = row + oh * wo;
            if (ih < 0 || ih >= h) {
              std::fill(dst, dst + wo, 0.0);
              continue;
            }
            const double* src = plane + static_cast<std::size_t>(ih) * wd;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * stride - pad + kj;
              dst[ow] = (iw >= 0 && iw < wd) ? src[iw] : 0.0;
            }
          }
        }
  };

  Tensor out({n, o, ho, wo});
  CMapR wm(w.value().data(), o, ckk);
  for (int b = 0; b < n; ++b) {
    double* col = cols->data() + (keep_cols ? static_cast<std::size_t>(b) * ckk * hw : 0);
    im2col(x.value().data() + static_cast<std::size_t>(b) * c * h * wd, col);
    MapR om(out.data() + static_cast<std::size_t>(b) * o * hw, o, hw);
    om.noalias() = wm * CMapR(col, ckk, hw);
    if (has_bias)
      for (int oc = 0; oc < o; ++oc) om.row(oc).array() += bias.value()[oc];
  }
  if (!keep_cols) cols.reset();

  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs),
                     [=](Node& self) {
                       Tensor* gx = pgrad(self, 0);
                       Tensor* gw = pgrad(self, 1);
                       Tensor* gb = has_bias ? pgrad(self, 2) : nullptr;
                       const Tensor& wv = pval(self, 1);
                       CMapR wm(wv.data(), o, ckk);
                       std::vector<double> dcol(gx ? static_cast<std::size_t>(ckk) * hw : 0);
                       for (int b = 0; b < n; ++b) {
                         CMapR dy(self.grad.data() + static_cast<std::size_t>(b) * o * hw, o, hw);
                         if (gw) {
                           CMapR col(cols->data() + static_cast<std::size_t>(b) * ckk * hw, ckk, hw);
                           MapR(gw->data(), o, ckk).noalias() += dy * col.transpose();
                         }
                         if (gb)
                           for (int oc = 0; oc < o; ++oc) (*gb)[oc] += dy.row(oc).sum();
                         if (gx) {
                           MapR dc(dcol.data(), ckk, hw);
                           dc.noalias() = wm.transpose() * dy;
                           double* gxb = gx->data() + static_cast<std::size_t>(b) * c * h * wd;
                           for (int ch = 0; ch < c; ++ch)
                             for (int ki = 0; ki < k; ++ki)
                               for (int kj = 0; kj < k; ++kj) {
                                 const double* row = dcol.data() + static_cast<std::size_t>((ch * k + ki) * k + kj) * hw;
                                 double* plane = gxb + static_cast<std::size_t>(ch) * h * wd;
                                 for (int oh = 0; oh < ho; ++oh) {
                                   const int ih = oh * stride - pad + ki;
                                   if (ih < 0 || ih >= h) continue;
                                   double* dst = plane + static_cast<std::size_t>(ih) * wd;
                                   for (int ow = 0; ow < wo; ++ow) {
                                     const int iw = ow * stride - pad + kj;
                                     if (iw >= 0 && iw < wd) dst[iw] += row[oh * wo + ow];
                                   }
                                 }
                               }
                         }
                       }
                     });
}

Var upsample_nearest2x(const Var& x) {
  check_rank(x, 4, "upsample_nearest2x");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  Tensor out({n, c, 2 * h, 2 * w});
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.value().data() + p * h * w;
    double* dst = out.data() + p * 4 * h * w;
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (std::size_t p = 0; p < planes; ++p) {
        double* dst = g->data() + p * h * w;
        const double* src = self.grad.data() + p * 4 * h * w;
        for (int i = 0; i < 2 * h; ++i)
          for (int j = 0; j < 2 * w; ++j) dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
      }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  check_rank(a, 4, "concat_channels");
  check_rank(b, 4, "concat_channels");
  const int n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1], h = a.shape()[2], w = a.shape()[3];
  require(b.shape()[0] == n && b.shape()[2] == h && b.shape()[3] == w, "concat_channels: shape mismatch");
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  Tensor out({n, ca + cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.value().data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.value().data() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  return make_result(std::move(out), {a, b}, [=](Node& self) {
    Tensor* ga = pgrad(self, 0);
    Tensor* gb = pgrad(self, 1);
    for (int i = 0; i < n; ++i) {
      const double* src = self.grad.data() + i * (ca + cb) * hw;
      if (ga)
        for (std::size_t j = 0; j < ca * hw; ++j) (*ga)[i * ca * hw + j] += src[j];
      if (gb)
        for (std::size_t j = 0; j < cb * hw; ++j) (*gb)[i * cb * hw + j] += src[ca * hw + j];
    }
  });
}

Var add_spatial_bias(const Var& x, const Var& e) {
  check_rank(x, 4, "add_spatial_bias");
  const int n = x.shape()[0], c = x.shape()[1];
  require(e.shape() == Shape({n, c}), "add_spatial_bias: bias must be [N,C]");
  const std::size_t hw = static_cast<std::size_t>(x.shape()[2]) * x.shape()[3];
  Tensor out = x.value();
  for (int i = 0; i < n * c; ++i)
    for (std::size_t j = 0; j < hw; ++j) out[i * hw + j] += e.value()[i];
  return make_result(std::move(out), {x, e}, [=](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (std::size_t j = 0; j < g->size(); ++j) (*g)[j] += self.grad[j];
    if (Tensor* g = pgrad(self, 1))
      for (int i = 0; i < n * c; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < hw; ++j) acc += self.grad[i * hw + j];
        (*g)[i] += acc;
      }
  });
}

Var global_avg_pool(const Var& x) {
  check_rank(x, 4, "global_avg_pool");
  const int n = x.shape()[0], c = x.shape()[1];
  const std::size_t hw = static_cast<std::size_t>(x.shape()[2]) * x.shape()[3];
  Tensor out({n, c});
  for (int i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < hw; ++j) acc += x.value()[i * hw + j];
    out[i] = acc / static_cast<double>(hw);
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (int i = 0; i < n * c; ++i)
        for (std::size_t j = 0; j < hw; ++j) (*g)[i * hw + j] += self.grad[i] / static_cast<double>(hw);
  });
}

Var normalize_channels(const Var& x, double eps) {
  check_rank(x, 4, "normalize_channels");
  const int n = x.shape()[0], c = x.shape()[1];
  const std::size_t hw = static_cast<std::size_t>(x.shape()[2]) * x.shape()[3];
  Tensor out = Tensor::zeros_like(x.value());
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * hw);
  for (int i = 0; i < n; ++i)
    for (std::size_t p = 0; p < hw; ++p) {
      double ss = eps * eps;
      for (int ch = 0; ch < c; ++ch) {
        const double v = x.value()[(i * c + ch) * hw + p];
        ss += v * v;
      }
      const double nr = std::sqrt(ss);
      (*norms)[i * hw + p] = nr;
      for (int ch = 0; ch < c; ++ch) out[(i * c + ch) * hw + p] = x.value()[(i * c + ch) * hw + p] / nr;
    }
  return make_result(std::move(out), {x}, [=](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (int i = 0; i < n; ++i)
        for (std::size_t p = 0; p < hw; ++p) {
          double dot = 0.0;
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t idx = (i * c + ch) * hw + p;
            dot += self.grad[idx] * self.value[idx];
          }
          const double nr = (*norms)[i * hw + p];
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t idx = (i * c + ch) * hw + p;
            (*g)[idx] += (self.grad[idx] - self.value[idx] * dot) / nr;
          }
        }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  check_rank(x, 2, "linear");
  check_rank(w, 2, "linear weight");
  const int n = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[0];
  require(w.shape()[1] == in, "linear: weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
  const bool has_bias = b.defined();
  Tensor out({n, out_dim});
  MapR(out.data(), n, out_dim).noalias() = CMapR(x.value().data(), n, in) * CMapR(w.value().data(), out_dim, in).transpose();
  if (has_bias)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_dim; ++j) out[i * out_dim + j] += b.value()[j];
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return make_result(std::move(out), std::move(inputs), [=](Node& self) {
    CMapR dy(self.grad.data(), n, out_dim);
    if (Tensor* g = pgrad(self, 0)) MapR(g->data(), n, in).noalias() += dy * CMapR(pval(self, 1).data(), out_dim, in);
    if (Tensor* g = pgrad(self, 1))
      MapR(g->data(), out_dim, in).noalias() += dy.transpose() * CMapR(pval(self, 0).data(), n, in);
    if (has_bias)
      if (Tensor* g = pgrad(self, 2))
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < out_dim; ++j) (*g)[j] += dy(i, j);
  });
}

Var normalize_rows(const Var& x, double eps) {
  check_rank(x, 2, "normalize_rows");
  const int n = x.shape()[0], d = x.shape()[1];
  Tensor out = Tensor::zeros_like(x.value());
  auto norms = std::make_shared<std::vector<double>>(n);
  for (int i = 0; i < n; ++i) {
    double ss = eps * eps;
    for (int j = 0; j < d; ++j) ss += x.value()[i * d + j] * x.value()[i * d + j];
    (*norms)[i] = std::sqrt(ss);
    for (int j = 0; j < d; ++j) out[i * d + j] = x.value()[i * d + j] / (*norms)[i];
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += self.grad[i * d + j] * self.value[i * d + j];
        for (int j = 0; j < d; ++j) (*g)[i * d + j] += (self.grad[i * d + j] - self.value[i * d + j] * dot) / (*norms)[i];
      }
  });
}

Var rowwise_dot(const Var& a, const Var& b) {
  check_same(a, b, "rowwise_dot");
  check_rank(a, 2, "rowwise_dot");
  const int n = a.shape()[0], d = a.shape()[1];
  Tensor out({n});
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += a.value()[i * d + j] * b.value()[i * d + j];
    out[i] = acc;
  }
  return make_result(std::move(out), {a, b}, [=](Node& self) {
    const Tensor& av = pval(self, 0);
    const Tensor& bv = pval(self, 1);
    if (Tensor* g = pgrad(self, 0))
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[i] * bv[i * d + j];
    if (Tensor* g = pgrad(self, 1))
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[i] * av[i * d + j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const int n = parts[0].shape().at(0);
  std::vector<int> widths;
  int total = 0;
  for (const auto& p : parts) {
    check_rank(p, 2, "concat_cols");
    require(p.shape()[0] == n, "concat_cols: row count mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor out({n, total});
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < widths[k]; ++j) out[i * total + off + j] = parts[k].value()[i * widths[k] + j];
    off += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(inputs), [=](Node& self) {
    int off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (Tensor* g = pgrad(self, k))
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < widths[k]; ++j) (*g)[i * widths[k] + j] += self.grad[i * total + off + j];
      off += widths[k];
    }
  });
}

Var embedding(const Var& table, std::span<const int> indices) {
  check_rank(table, 2, "embedding");
  const int v = table.shape()[0], d = table.shape()[1];
  const int n = static_cast<int>(indices.size());
  std::vector<int> idx(indices.begin(), indices.end());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    if (idx[i] < 0 || idx[i] >= v)
      fail(ErrorCode::kInvalidArgument, "embedding index " + std::to_string(idx[i]) + " out of range");
    std::copy_n(table.value().data() + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  }
  return make_result(std::move(out), {table}, [=](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) (*g)[idx[i] * d + j] += self.grad[i * d + j];
  });
}

Var slice_rows(const Var& x, int begin, int end) {
  require(!x.shape().empty(), "slice_rows on scalar");
  const int n = x.shape()[0];
  require(0 <= begin && begin <= end && end <= n, "slice_rows: bad range");
  const std::size_t per = n > 0 ? x.value().size() / static_cast<std::size_t>(n) : 0;
  Shape s = x.shape();
  s[0] = end - begin;
  Tensor out(s);
  std::copy_n(x.value().data() + begin * per, (end - begin) * per, out.data());
  return make_result(std::move(out), {x}, [=](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (std::size_t j = 0; j < (end - begin) * per; ++j) (*g)[begin * per + j] += self.grad[j];
  });
}

Var haar_ll(const Var& x) {
  check_rank(x, 4, "haar_ll");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (h % 2 || w % 2) fail(ErrorCode::kInvalidArgument, "haar_ll: odd spatial size " + shape_str(x.shape()));
  const int h2 = h / 2, w2 = w / 2;
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  Tensor out({n, c, h2, w2});
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.value().data() + p * h * w;
    double* dst = out.data() + p * h2 * w2;
    for (int i = 0; i < h2; ++i)
      for (int j = 0; j < w2; ++j) {
        const double* r0 = src + (2 * i) * w + 2 * j;
        const double* r1 = r0 + w;
        dst[i * w2 + j] = 0.5 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    if (Tensor* g = pgrad(self, 0))
      for (std::size_t p = 0; p < planes; ++p) {
        double* dst = g->data() + p * h * w;
        const double* src = self.grad.data() + p * h2 * w2;
        for (int i = 0; i < h2; ++i)
          for (int j = 0; j < w2; ++j) {
            const double v = 0.5 * src[i * w2 + j];
            dst[(2 * i) * w + 2 * j] += v;
            dst[(2 * i) * w + 2 * j + 1] += v;
            dst[(2 * i + 1) * w + 2 * j] += v;
            dst[(2 * i + 1) * w + 2 * j + 1] += v;
          }
      }
  });
}

Var pairwise_ce(const Var& s_a, const Var& s_b, std::span<const int> winners) {
  check_same(s_a, s_b, "pairwise_ce");
  const int n = static_cast<int>(s_a.value().size());
  require(n > 0 && winners.size() == static_cast<std::size_t>(n), "pairwise_ce: winner count mismatch");
  std::vector<int> win(winners.begin(), winners.end());
  auto probs_a = std::make_shared<std::vector<double>>(n);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    require(win[i] == 0 || win[i] == 1, "pairwise_ce: winner must be 0 or 1");
    const double a = s_a.value()[i], b = s_b.value()[i];
    const double m = std::max(a, b);
    const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    (*probs_a)[i] = std::exp(a - lse);
    loss += lse - (win[i] == 0 ? a : b);
  }
  return make_result(Tensor::scalar(loss / n), {s_a, s_b}, [=](Node& self) {
    const double g0 = self.grad[0] / n;
    Tensor* ga = pgrad(self, 0);
    Tensor* gb = pgrad(self, 1);
    for (int i = 0; i < n; ++i) {
      const double pa = (*probs_a)[i];
      const double ya = win[i] == 0 ? 1.0 : 0.0;
      if (ga) (*ga)[i] += g0 * (pa - ya);
      if (gb) (*gb)[i] += g0 * ((1.0 - pa) - (1.0 - ya));
    }
  });
}

Var softmax_kl(const Var& theta, const Tensor& base) {
  require(theta.value().size() == base.size() && base.size() > 0, "softmax_kl: shape mismatch");
  const std::size_t n = base.size();
  auto log_softmax = [n](const double* v, std::vector<double>& out) {
    const double m = *std::max_element(v, v + n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    const double lse = m + std::log(s);
    for (std::size_t i = 0; i < n; ++i) out[i] = v[i] - lse;
  };
  auto lp = std::make_shared<std::vector<double>>(n);
  auto lq = std::make_shared<std::vector<double>>(n);
  log_softmax(theta.value().data(), *lp);
  log_softmax(base.data(), *lq);
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) kl += std::exp((*lp)[i]) * ((*lp)[i] - (*lq)[i]);
  return make_result(Tensor::scalar(kl), {theta}, [=](Node& self) {
    if (Tensor* g = pgrad(self, 0)) {
      const double klv = self.value[0];
      for (std::size_t i = 0; i < n; ++i) {
        const double p = std::exp((*lp)[i]);
        (*g)[i] += self.grad[0] * p * ((*lp)[i] - (*lq)[i] - klv);
      }
    }
  });
}

}  // namespace refl::nn
