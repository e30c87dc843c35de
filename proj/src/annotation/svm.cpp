// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "refl/annotation.hpp"
#include "refl/error.hpp"

namespace refl::annotation {

namespace {

constexpr double kTau = 1e-12;
constexpr double kTolerance = 1e-3;

double kernel_value(const SvmParams& p, double dot, double sqdist) {
  switch (p.kernel) {
    case Kernel::kLinear:
      return dot;
    case Kernel::kRbf:
      return std::exp(-p.gamma * sqdist);
    default:
      return std::pow(p.gamma * dot + p.coef0, p.degree);
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

// Population variance over every entry of the matrix.
double overall_variance(const std::vector<std::vector<double>>& x) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& r : x)
    for (double v : r) {
      sum += v;
      sq += v * v;
      ++n;
    }
  if (n == 0) return 0.0;
  const double m = sum / n;
  return std::max(0.0, sq / n - m * m);
}

struct Solution {
  std::vector<double> alpha;
  double rho = 0.0;
};

// C-SVC dual by SMO with second-order working-set selection.
Solution smo(const std::vector<double>& K, const std::vector<int>& y, double C) {
  const std::size_t n = y.size();
  auto k = [&](std::size_t i, std::size_t j) { return K[i * n + j]; };
  std::vector<double> alpha(n, 0.0), G(n, -1.0);
  auto up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0); };
  auto low = [&](std::size_t t) { return (y[t] == 1 && alpha[t] > 0) || (y[t] == -1 && alpha[t] < C); };
  const std::size_t max_iter = std::max<std::size_t>(10000000, 100 * n);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t)
      if (up(t) && -y[t] * G[t] >= gmax) {
        gmax = -y[t] * G[t];
        i = t;
      }
    if (i == n) break;
    double gmax2 = -std::numeric_limits<double>::infinity(), best = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!low(t)) continue;
      gmax2 = std::max(gmax2, y[t] * G[t]);
      const double b = gmax + y[t] * G[t];
      if (b > 0) {
        double a = k(i, i) + k(t, t) - 2.0 * k(i, t);
        if (a <= 0) a = kTau;
        if (-(b * b) / a <= best) {
          best = -(b * b) / a;
          j = t;
        }
      }
    }
    if (gmax + gmax2 < kTolerance || j == n) break;

    const double ai = alpha[i], aj = alpha[j];
    const double qij = y[i] * y[j] * k(i, j);
    if (y[i] != y[j]) {
      double quad = k(i, i) + k(j, j) + 2.0 * qij;
      if (quad <= 0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = k(i, i) + k(j, j) - 2.0 * qij;
      if (quad <= 0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - ai, daj = alpha[j] - aj;
    for (std::size_t t = 0; t < n; ++t) G[t] += y[t] * (y[i] * k(i, t) * dai + y[j] * k(j, t) * daj);
  }

  double ub = std::numeric_limits<double>::infinity(), lb = -ub, free_sum = 0.0;
  int free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (alpha[t] >= C) {
      if (y[t] == -1)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] == 1)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else {
      free_sum += yg;
      ++free_count;
    }
  }
  Solution s;
  s.alpha = std::move(alpha);
  s.rho = free_count > 0 ? free_sum / free_count : 0.5 * (ub + lb);
  return s;
}

}  // namespace

const char* to_string(Kernel k) {
  switch (k) {
    case Kernel::kLinear:
      return "linear";
    case Kernel::kRbf:
      return "rbf";
    default:
      return "poly";
  }
}

Kernel kernel_from_string(const std::string& s) {
  if (s == "linear") return Kernel::kLinear;
  if (s == "rbf") return Kernel::kRbf;
  if (s == "poly") return Kernel::kPoly;
  fail(ErrorCode::kInvalidArgument, "unknown kernel '" + s + "'");
}

double SvmModel::decision(const std::vector<double>& features) const {
  const auto x = scaler.apply(features);
  double s = bias;
  for (std::size_t i = 0; i < support.size(); ++i) s += coef[i] * kernel_value(params, dot(support[i], x), sqdist(support[i], x));
  return s;
}

Label SvmModel::predict(const std::vector<double>& features) const {
  return decision(features) > 0.0 ? Label::kA : Label::kB;
}

Json SvmModel::to_json() const {
  Json j = Json::object();
  j["kernel"] = to_string(params.kernel);
  j["C"] = params.C;
  j["gamma"] = params.gamma;
  j["degree"] = params.degree;
  j["coef0"] = params.coef0;
  j["scaler_mean"] = scaler.mean;
  j["scaler_std"] = scaler.stddev;
  j["support"] = support;
  j["coef"] = coef;
  j["bias"] = bias;
  return j;
}

SvmModel SvmModel::from_json(const Json& j) {
  SvmModel m;
  m.params.kernel = kernel_from_string(j.at("kernel").get<std::string>());
  m.params.C = j.at("C").get<double>();
  m.params.gamma = j.at("gamma").get<double>();
  m.params.degree = j.at("degree").get<int>();
  m.params.coef0 = j.at("coef0").get<double>();
  m.scaler.mean = j.at("scaler_mean").get<std::vector<double>>();
  m.scaler.stddev = j.at("scaler_std").get<std::vector<double>>();
  m.support = j.at("support").get<std::vector<std::vector<double>>>();
  m.coef = j.at("coef").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  require(m.coef.size() == m.support.size(), "svm model: coefficient count does not match support vectors");
  return m;
}

SvmModel svm_fit(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                 const SvmParams& params) {
  require(!features.empty(), "svm_fit: empty training set");
  require(features.size() == labels.size(), "svm_fit: feature and label counts differ");
  for (int l : labels) require(l == 1 || l == -1, "svm labels must be +1 or -1");
  require(params.C > 0, "svm C must be positive");
  const bool has_pos = std::count(labels.begin(), labels.end(), 1) > 0;
  const bool has_neg = std::count(labels.begin(), labels.end(), -1) > 0;
  if (!has_pos || !has_neg) fail(ErrorCode::kInvalidArgument, "svm training labels contain a single class");

  SvmModel m;
  m.scaler = Standardizer::fit(features);
  std::vector<std::vector<double>> x;
  x.reserve(features.size());
  for (const auto& f : features) x.push_back(m.scaler.apply(f));
  m.params = params;
  if (m.params.gamma <= 0) {
    const double var = overall_variance(x);
    m.params.gamma = var > 0 ? 1.0 / (static_cast<double>(x[0].size()) * var) : 1.0;
  }
  const std::size_t n = x.size();
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      K[i * n + j] = K[j * n + i] = kernel_value(m.params, dot(x[i], x[j]), sqdist(x[i], x[j]));
  // C weighs the mean hinge loss, so the per-sample box is C / n. Duplicating
  // every sample then leaves the solution unchanged.
  const Solution s = smo(K, labels, m.params.C / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    if (s.alpha[i] > 0) {
      m.support.push_back(x[i]);
      m.coef.push_back(s.alpha[i] * labels[i]);
    }
  m.bias = -s.rho;
  return m;
}

SvmTrainResult svm_train(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                         int cv_folds, const SvmGrid& grid) {
  require(cv_folds >= 2, "cross-validation needs at least two folds");
  require(features.size() >= static_cast<std::size_t>(cv_folds), "fewer labeled samples than folds");
  require(features.size() == labels.size(), "feature and label counts differ");
  if (std::count(labels.begin(), labels.end(), 1) == 0 || std::count(labels.begin(), labels.end(), -1) == 0)
    fail(ErrorCode::kInvalidArgument, "svm training labels contain a single class");

  std::vector<SvmParams> points;
  std::vector<double> cs = grid.C;
  std::sort(cs.begin(), cs.end());
  for (Kernel kern : {Kernel::kLinear, Kernel::kRbf, Kernel::kPoly}) {
    if (std::find(grid.kernels.begin(), grid.kernels.end(), kern) == grid.kernels.end()) continue;
    for (double c : cs) {
      if (kern == Kernel::kLinear) {
        points.push_back({kern, c, 0.0, 3, 0.0});
        continue;
      }
      for (double g : grid.gamma) {
        if (kern == Kernel::kRbf) {
          points.push_back({kern, c, g, 3, 0.0});
          continue;
        }
        for (int d : grid.degree) points.push_back({kern, c, g, d, 0.0});
      }
    }
  }
  require(!points.empty(), "svm grid is empty");

  const std::size_t n = features.size();
  SvmTrainResult res;
  for (const auto& p : points) {
    double acc_sum = 0.0;
    for (int f = 0; f < cv_folds; ++f) {
      std::vector<std::vector<double>> xtr;
      std::vector<int> ytr;
      std::vector<std::size_t> test;
      for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<int>(i % cv_folds) == f) {
          test.push_back(i);
        } else {
          xtr.push_back(features[i]);
          ytr.push_back(labels[i]);
        }
      }
      int correct = 0;
      const bool single = std::all_of(ytr.begin(), ytr.end(), [&](int v) { return v == ytr[0]; });
      if (single) {
        for (std::size_t i : test) correct += labels[i] == ytr[0];
      } else {
        const SvmModel m = svm_fit(xtr, ytr, p);
        for (std::size_t i : test) correct += (m.decision(features[i]) > 0 ? 1 : -1) == labels[i];
      }
      acc_sum += static_cast<double>(correct) / static_cast<double>(test.size());
    }
    res.grid.push_back({p, acc_sum / cv_folds});
  }
  // Strict improvement only: earlier grid points (kernel order, then smaller C) win ties.
  res.best = res.grid[0];
  for (const auto& g : res.grid)
    if (g.cv_accuracy > res.best.cv_accuracy + 1e-12) res.best = g;
  res.model = svm_fit(features, labels, res.best.params);
  return res;
}

}  // namespace refl::annotation
