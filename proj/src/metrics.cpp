// Copyright (c) 2026, The ugcvqa Authors. All rights reserved.
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
#include "ugcvqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "ugcvqa/error.hpp"

namespace ugcvqa {
namespace {

constexpr int kMaxIterations = 5000;

void check_pair(std::span<const double> x, std::span<const double> y, size_t min_n,
                const char* what) {
  if (x.size() != y.size()) {
    throw Error(std::string(what) + ": length mismatch " + std::to_string(x.size()) +
                " vs " + std::to_string(y.size()));
  }
  if (x.size() < min_n) {
    throw Error(std::string(what) + ": needs at least " + std::to_string(min_n) +
                " samples, got " + std::to_string(x.size()));
  }
  for (size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw Error(std::string(what) + ": non-finite input at index " + std::to_string(i));
    }
  }
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sse(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double logistic_sse(const LogisticParams& p, std::span<const double> x,
                    std::span<const double> y) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double r = p(x[i]) - y[i];
    s += r * r;
  }
  return s;
}

}  // namespace

std::vector<double> midranks(std::span<const double> v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double plcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 3, "plcc");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double a = x[i] - mx, b = y[i] - my;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedStatistic("correlation is undefined for a constant vector");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double srocc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 3, "srocc");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  return plcc(rx, ry);
}

double krocc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 3, "krocc");
  const size_t n = x.size();
  // Pairs tied in x only / y only are the tau-b denominator corrections.
  int64_t concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        ++tied_x;
      } else if (dy == 0.0) {
        ++tied_y;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double untied = static_cast<double>(concordant + discordant);
  const double denom = std::sqrt((untied + tied_y) * (untied + tied_x));
  if (denom == 0.0) {
    throw UndefinedStatistic("Kendall correlation is undefined for an all-tied vector");
  }
  return static_cast<double>(concordant - discordant) / denom;
}

double rmse(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 1, "rmse");
  return std::sqrt(sse(x, y) / static_cast<double>(x.size()));
}

double LogisticParams::operator()(double x) const {
  const double z = (x - beta[2]) / std::abs(beta[3]);
  return (beta[0] - beta[1]) / (1.0 + std::exp(-z)) + beta[1];
}

MappingFit fit_linear(std::span<const double> objective, std::span<const double> subjective) {
  check_pair(objective, subjective, 2, "linear fit");
  const double mx = mean(objective), my = mean(subjective);
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < objective.size(); ++i) {
    sxy += (objective[i] - mx) * (subjective[i] - my);
    sxx += (objective[i] - mx) * (objective[i] - mx);
  }
  if (sxx == 0.0) throw Error("mapping fit: objective scores are constant");
  MappingFit fit;
  fit.kind = MappingKind::linear;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.mapped.resize(objective.size());
  for (size_t i = 0; i < objective.size(); ++i) {
    fit.mapped[i] = fit.slope * objective[i] + fit.intercept;
  }
  return fit;
}

MappingFit fit_4pl(std::span<const double> objective, std::span<const double> subjective) {
  check_pair(objective, subjective, 5, "4PL fit");
  const size_t n = objective.size();
  const double mx = mean(objective);
  double var = 0.0;
  for (double v : objective) var += (v - mx) * (v - mx);
  var /= static_cast<double>(n);
  if (var == 0.0) throw Error("4PL fit: objective scores are constant");

  LogisticParams p;
  p.beta = {*std::max_element(subjective.begin(), subjective.end()),
            *std::min_element(subjective.begin(), subjective.end()), mx, std::sqrt(var)};

  double cost = logistic_sse(p, objective, subjective);
  double lambda = 1e-3;
  int iter = 0;
  bool ok = std::isfinite(cost);
  bool converged = false;
  for (; ok && !converged && iter < kMaxIterations; ++iter) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    const double s = std::abs(p.beta[3]);
    const double sign = p.beta[3] >= 0.0 ? 1.0 : -1.0;
    const double span_b = p.beta[0] - p.beta[1];
    for (size_t i = 0; i < n; ++i) {
      const double z = (objective[i] - p.beta[2]) / s;
      const double sig = 1.0 / (1.0 + std::exp(-z));
      const double dsig = sig * (1.0 - sig);
      Eigen::Vector4d j(sig, 1.0 - sig, -span_b * dsig / s, -span_b * dsig * z / s * sign);
      const double r = span_b * sig + p.beta[1] - subjective[i];
      jtj += j * j.transpose();
      jtr += j * r;
    }
    if (!jtj.allFinite() || !jtr.allFinite()) {
      ok = false;
      break;
    }
    if (jtr.lpNorm<Eigen::Infinity>() <= 1e-300) break;

    bool improved = false;
    while (lambda < 1e16) {
      Eigen::Matrix4d a = jtj;
      for (int d = 0; d < 4; ++d) a(d, d) += lambda * std::max(jtj(d, d), 1e-12);
      const Eigen::Vector4d step = a.ldlt().solve(-jtr);
      LogisticParams trial = p;
      for (int d = 0; d < 4; ++d) trial.beta[static_cast<size_t>(d)] += step(d);
      const double trial_cost =
          trial.beta[3] != 0.0 ? logistic_sse(trial, objective, subjective)
                               : std::numeric_limits<double>::infinity();
      if (std::isfinite(trial_cost) && trial_cost < cost) {
        const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
        p = trial;
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = true;
        converged = rel < 1e-15 || cost < 1e-28;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }

  const MappingFit linear = fit_linear(objective, subjective);
  const double linear_cost = sse(linear.mapped, subjective);
  if (!ok || !std::isfinite(cost) || cost > linear_cost) return linear;

  // Only |beta4| enters the curve; report the canonical sign.
  p.beta[3] = std::abs(p.beta[3]);
  MappingFit fit;
  fit.kind = MappingKind::logistic;
  fit.logistic = p;
  fit.iterations = iter;
  fit.mapped.resize(n);
  for (size_t i = 0; i < n; ++i) fit.mapped[i] = p(objective[i]);
  return fit;
}

EvaluationReport evaluate(std::span<const double> predictions, std::span<const double> labels) {
  check_pair(predictions, labels, 3, "evaluate");
  EvaluationReport report;
  report.n = predictions.size();
  report.srocc = srocc(predictions, labels);
  report.krocc = krocc(predictions, labels);
  const MappingFit fit = predictions.size() >= 5 ? fit_4pl(predictions, labels)
                                                 : fit_linear(predictions, labels);
  report.mapping = fit.kind;
  if (fit.kind == MappingKind::logistic) {
    report.logistic_params = fit.logistic.beta;
  } else {
    report.logistic_params = {fit.slope, fit.intercept, 0.0, 0.0};
  }
  report.plcc = plcc(fit.mapped, labels);
  report.rmse = rmse(fit.mapped, labels);
  return report;
}

EvaluationReport average_reports(std::span<const EvaluationReport> reports) {
  if (reports.empty()) throw Error("no reports to average");
  EvaluationReport avg;
  for (const auto& r : reports) {
    avg.srocc += r.srocc;
    avg.krocc += r.krocc;
    avg.plcc += r.plcc;
    avg.rmse += r.rmse;
    avg.n += r.n;
  }
  const auto k = static_cast<double>(reports.size());
  avg.srocc /= k;
  avg.krocc /= k;
  avg.plcc /= k;
  avg.rmse /= k;
  avg.n /= reports.size();
  avg.mapping = reports.front().mapping;
  return avg;
}

nlohmann::json EvaluationReport::to_json() const {
  return {{"n", n},
          {"srocc", srocc},
          {"krocc", krocc},
          {"plcc", plcc},
          {"rmse", rmse},
          {"mapping", mapping == MappingKind::logistic ? "logistic" : "linear"},
          {"logistic_params", logistic_params}};
}

std::string EvaluationReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "n=" << n << '\n'
     << "srocc=" << srocc << '\n'
     << "krocc=" << krocc << '\n'
     << "plcc=" << plcc << '\n'
     << "rmse=" << rmse << '\n'
     << "mapping=" << (mapping == MappingKind::logistic ? "logistic" : "linear") << '\n';
  for (size_t i = 0; i < 4; ++i) os << "beta" << i + 1 << '=' << logistic_params[i] << '\n';
  return os.str();
}

void EvaluationReport::write_text(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << to_text();
}

EvaluationReport EvaluationReport::parse_text(const std::string& text) {
  EvaluationReport r;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "n") r.n = std::stoull(value);
    else if (key == "srocc") r.srocc = std::stod(value);
    else if (key == "krocc") r.krocc = std::stod(value);
    else if (key == "plcc") r.plcc = std::stod(value);
    else if (key == "rmse") r.rmse = std::stod(value);
    else if (key == "mapping") r.mapping = value == "linear" ? MappingKind::linear : MappingKind::logistic;
    else if (key.size() == 5 && key.rfind("beta", 0) == 0 && key[4] >= '1' && key[4] <= '4')
      r.logistic_params[static_cast<size_t>(key[4] - '1')] = std::stod(value);
  }
  return r;
}

}  // namespace ugcvqa
