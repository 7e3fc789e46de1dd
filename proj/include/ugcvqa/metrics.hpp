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
#pragma once

// Evaluation criteria: SROCC (midrank), KROCC (tau-b), PLCC and RMSE, the
// latter two after a four-parameter logistic mapping of the predictions
// onto the subjective scale.

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace ugcvqa {

// Fractional ranks, ties share their mean rank (1-based).
std::vector<double> midranks(std::span<const double> v);

double srocc(std::span<const double> x, std::span<const double> y);
double krocc(std::span<const double> x, std::span<const double> y);
double plcc(std::span<const double> x, std::span<const double> y);
double rmse(std::span<const double> x, std::span<const double> y);

// f(x) = (b1 - b2) / (1 + exp(-(x - b3) / |b4|)) + b2
struct LogisticParams {
  std::array<double, 4> beta{};

  double operator()(double x) const;
};

enum class MappingKind { logistic, linear };

struct MappingFit {
  MappingKind kind = MappingKind::logistic;
  LogisticParams logistic;
  // Used when kind == linear: y = slope * x + intercept.
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> mapped;
  int iterations = 0;
};

// Levenberg-Marquardt fit from b1 = max(subjective), b2 = min(subjective),
// b3 = mean(objective), b4 = std(objective). Falls back to a linear
// least-squares map (the b4 -> inf limit of the family) when the solver
// fails or does not beat it.
MappingFit fit_4pl(std::span<const double> objective, std::span<const double> subjective);

// Least-squares line through the points; requires non-constant objective.
MappingFit fit_linear(std::span<const double> objective, std::span<const double> subjective);

struct EvaluationReport {
  double srocc = 0.0;
  double krocc = 0.0;
  double plcc = 0.0;
  double rmse = 0.0;
  std::array<double, 4> logistic_params{};
  MappingKind mapping = MappingKind::logistic;
  size_t n = 0;

  nlohmann::json to_json() const;
  // Flat key=value lines: n, srocc, krocc, plcc, rmse, mapping,
  // beta1..beta4.
  std::string to_text() const;
  void write_text(const std::filesystem::path& path) const;
  static EvaluationReport parse_text(const std::string& text);
};

// SROCC/KROCC on raw predictions, PLCC/RMSE on mapped predictions. With
// fewer than five samples the mapping is the linear fallback.
EvaluationReport evaluate(std::span<const double> predictions, std::span<const double> labels);

// Criterion-wise mean of repeated-split reports.
EvaluationReport average_reports(std::span<const EvaluationReport> reports);

}  // namespace ugcvqa
