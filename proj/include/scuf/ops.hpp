#pragma once

#include "scuf/tensor.hpp"

namespace scuf::ops {

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
Var add_scalar(const Var& a, Real s);
// Adds a 1xC row to every row of a.
Var add_row(const Var& a, const Var& row);
Var abs(const Var& a);
Var square(const Var& a);
Var leaky_relu(const Var& a, Real slope);
Var sigmoid(const Var& a);
Var softmax_rows(const Var& a);
Var concat_cols(const Var& a, const Var& b);
// Row-major reshape.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);

// 1x1 reductions.
Var sum(const Var& a);
Var mean(const Var& a);
// Column means: NxC -> 1xC.
Var mean_rows(const Var& a);

// Mean over rows of the cosine similarity between corresponding rows.
// Rows where either vector has zero norm contribute similarity 0.
Var mean_row_cosine(const Var& a, const Var& b);

// -log softmax(logits)[label] for a 1xK logit row.
Var cross_entropy(const Var& logits, int label);

// Spatial ops over raster-ordered token matrices.
struct Im2Col {
  Var cols;
  int out_height;
  int out_width;
};
// Column layout is (ky, kx, channel) with channel fastest; zero padding.
Im2Col im2col(const FeatureMap& x, int kernel, int stride, int pad);
FeatureMap upsample2x(const FeatureMap& x);
FeatureMap avg_pool2x(const FeatureMap& x);

// Convolution with weight laid out out x (k*k*in).
FeatureMap conv2d(const FeatureMap& x, const Var& weight, const Var& bias, int kernel, int stride);

}  // namespace scuf::ops
