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

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hsfuse {

/// Dense fp64 vector. Value type; copies are deep.
class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vec(std::initializer_list<double> values) : data_(values) {}
  explicit Vec(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t dim() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool all_finite() const noexcept;
  void fill(double value);

  friend bool operator==(const Vec&, const Vec&) = default;

 private:
  std::vector<double> data_;
};

/// Dense row-major fp64 matrix.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> row_major);
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }

  bool all_finite() const noexcept;
  void fill(double value);

  std::string shape_string() const;

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// y = W x + b. Throws DimensionError naming both shapes on mismatch.
Vec affine(const Vec& x, const Mat& weight, const Vec& bias);

/// y = W^T g, the input-gradient half of affine's backward pass.
Vec affine_transpose(const Mat& weight, const Vec& grad);

/// acc += g x^T, the weight-gradient half of affine's backward pass.
void add_outer(Mat& acc, const Vec& grad, const Vec& x);

void add_inplace(Vec& acc, const Vec& x);
void add_inplace(Mat& acc, const Mat& x);

Vec relu(const Vec& x);

/// Max-subtracted softmax.
Vec softmax(const Vec& logits);
double log_sum_exp(const Vec& logits);

double dot(const Vec& a, const Vec& b);
double l2_norm(const Vec& x);

/// Central-difference gradient of f at x. Throws NumericError if f returns
/// a non-finite value.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                     double eps);

}  // namespace hsfuse
