#pragma once

#include <initializer_list>
#include <vector>

namespace motiongen {

// Dense row-major matrix of doubles. Rank-2 is the only layout the graph
// needs; vectors are (1, n) or (n, 1), scalars (1, 1).
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0);
  Tensor(int r, int c, std::initializer_list<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, {v}); }

  int size() const { return rows * cols; }
  double& at(int r, int c) { return data[(std::size_t)r * cols + c]; }
  double at(int r, int c) const { return data[(std::size_t)r * cols + c]; }
  double item() const;  // requires size() == 1

  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

}  // namespace motiongen
