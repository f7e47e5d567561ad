#pragma once

#include <cstddef>
#include <vector>

namespace ntk {

// Dense row-major matrix of doubles. Vectors are 1 x n or n x 1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c)) {}

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return v.size(); }

  bool operator==(const Tensor&) const = default;
};

}  // namespace ntk
