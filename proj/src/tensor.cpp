// Copyright 2026 The hsfuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hsfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hsfuse/errors.hpp"

namespace hsfuse {

namespace {

bool finite_range(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace

bool Vec::all_finite() const noexcept { return finite_range(data_); }

void Vec::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream msg;
    msg << "matrix " << rows_ << "x" << cols_ << " given " << data_.size()
        << " values";
    throw DimensionError(msg.str());
  }
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Mat::all_finite() const noexcept { return finite_range(data_); }

void Mat::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Mat::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Vec affine(const Vec& x, const Mat& weight, const Vec& bias) {
  if (weight.cols() != x.dim() || weight.rows() != bias.dim()) {
    std::ostringstream msg;
    msg << "affine: W is " << weight.shape_string() << ", x has dim " << x.dim()
        << ", b has dim " << bias.dim();
    throw DimensionError(msg.str());
  }
  Vec y(bias);
  for (std::size_t j = 0; j < weight.rows(); ++j) {
    auto row = weight.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) acc += row[k] * x[k];
    y[j] += acc;
  }
  return y;
}

Vec affine_transpose(const Mat& weight, const Vec& grad) {
  if (weight.rows() != grad.dim()) {
    throw DimensionError("affine_transpose: W is " + weight.shape_string() +
                         ", grad has dim " + std::to_string(grad.dim()));
  }
  Vec out(weight.cols());
  for (std::size_t j = 0; j < weight.rows(); ++j) {
    const double g = grad[j];
    if (g == 0.0) continue;
    auto row = weight.row(j);
    for (std::size_t k = 0; k < row.size(); ++k) out[k] += row[k] * g;
  }
  return out;
}

void add_outer(Mat& acc, const Vec& grad, const Vec& x) {
  if (acc.rows() != grad.dim() || acc.cols() != x.dim()) {
    throw DimensionError("add_outer: accumulator is " + acc.shape_string() +
                         ", outer product is " + std::to_string(grad.dim()) +
                         "x" + std::to_string(x.dim()));
  }
  for (std::size_t j = 0; j < acc.rows(); ++j) {
    const double g = grad[j];
    if (g == 0.0) continue;
    auto row = acc.row(j);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] += g * x[k];
  }
}

void add_inplace(Vec& acc, const Vec& x) {
  if (acc.dim() != x.dim()) {
    throw DimensionError("add: dims " + std::to_string(acc.dim()) + " and " +
                         std::to_string(x.dim()));
  }
  for (std::size_t i = 0; i < x.dim(); ++i) acc[i] += x[i];
}

void add_inplace(Mat& acc, const Mat& x) {
  if (acc.rows() != x.rows() || acc.cols() != x.cols()) {
    throw DimensionError("add: shapes " + acc.shape_string() + " and " +
                         x.shape_string());
  }
  auto a = acc.span();
  auto b = x.span();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

Vec relu(const Vec& x) {
  Vec y(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

double log_sum_exp(const Vec& logits) {
  if (logits.empty()) throw UsageError("log_sum_exp of an empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  return m + std::log(sum);
}

Vec softmax(const Vec& logits) {
  if (logits.empty()) throw UsageError("softmax of an empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.dim());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.dim(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double dot(const Vec& a, const Vec& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("dot: dims " + std::to_string(a.dim()) + " and " +
                         std::to_string(b.dim()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(const Vec& x) { return std::sqrt(dot(x, x)); }

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                     double eps) {
  if (!(eps > 0.0)) throw UsageError("finite_diff_grad: eps must be positive");
  Vec grad(x.dim());
  Vec probe(x);
  for (std::size_t j = 0; j < x.dim(); ++j) {
    probe[j] = x[j] + eps;
    const double up = f(probe);
    probe[j] = x[j] - eps;
    const double down = f(probe);
    probe[j] = x[j];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                         std::to_string(j));
    }
    grad[j] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace hsfuse
