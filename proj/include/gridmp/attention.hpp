#pragma once

#include <random>

#include "gridmp/tensor.hpp"

namespace gridmp::nn {

struct AttentionGrads {
  Matrix dq;
  Matrix dk;
  Matrix dv;
};

/// softmax(q k^T / sqrt(d)) v for one head.
Matrix softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v);
AttentionGrads softmax_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& dout);

/// Positive random-feature estimate of softmax attention. With q, k scaled by
/// d^-1/4, phi(u) = m^-1/2 exp(w_f . u - |u|^2 / 2) for the rows w_f of
/// `features`. Query features subtract their row maximum inside exp and key
/// features the block maximum; both cancel in the normalized ratio.
Matrix performer_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& features);
AttentionGrads performer_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                            const Matrix& features, const Matrix& dout);

/// m x d Gaussian projection with rows orthogonalized (QR) in blocks
/// of d and rescaled to chi-distributed norms.
Matrix orthogonal_random_features(int m, int d, std::mt19937_64& rng);

}  // namespace gridmp::nn
