#pragma once

#include "prednext/tensor.hpp"

namespace prednext {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, float c);
Tensor add_scalar(const Tensor& a, float c);
// ca*a + cb*b, same shape.
Tensor add_scaled(const Tensor& a, const Tensor& b, float ca, float cb);

Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

// Cuts the graph: value shared, no gradient flows back.
Tensor detach(const Tensor& a);

// x: [N,D], bias: [D].
Tensor add_bias(const Tensor& x, const Tensor& bias);

// a: [n,k], b: [k,m] -> [n,m].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// x: [N,C,H,W], w: [OC,C,KH,KW], b: [OC] (optional, may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);

// [N,C,H,W] -> [N,C].
Tensor global_avg_pool(const Tensor& x);

// Batch norm over the batch (and spatial, if 4-D) axes. In training mode the
// batch statistics are used and written to batch_mean/batch_var (size C).
Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       float eps, std::vector<float>* batch_mean,
                       std::vector<float>* batch_var);
Tensor batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      const std::vector<float>& mean,
                      const std::vector<float>& var, float eps);

// Per-column zero-mean unit-std over the batch dimension of [N,D].
Tensor standardize_cols(const Tensor& x, float eps);

// Per-row L2 normalization of [N,D], epsilon-stabilized.
Tensor row_l2_normalize(const Tensor& x, float eps = 1e-8f);

// [N,D] x [N,D] -> [N] of per-row dot products.
Tensor rowwise_dot(const Tensor& a, const Tensor& b);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Mean of same-shaped tensors.
Tensor mean_tensors(const std::vector<Tensor>& xs);

// Row-concatenation of [N1,D] and [N2,D].
Tensor cat_rows(const Tensor& a, const Tensor& b);

// Column-concatenation of [N,Ma] and [N,Mb].
Tensor cat_cols(const Tensor& a, const Tensor& b);

// Same storage order, new shape with equal numel.
Tensor reshape(const Tensor& a, Shape shape);

// Mean over rows of -log softmax(logits)[target]; logits [N,M].
Tensor cross_entropy_with_index(const Tensor& logits,
                                const std::vector<int>& targets);

}  // namespace prednext
