#include "gridmp/attention.hpp"

#include <cmath>

#include <Eigen/QR>

namespace gridmp::nn {

namespace {

Matrix row_softmax(const Matrix& s) {
  Matrix p(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    p.row(i) = (s.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

struct FeatureMap {
  Matrix xs;   // scaled input
  Matrix phi;  // n x m
};

FeatureMap feature_map(const Matrix& x, const Matrix& w, bool global_max) {
  const double d = static_cast<double>(x.cols());
  const double m = static_cast<double>(w.rows());
  FeatureMap f;
  f.xs = x * std::pow(d, -0.25);
  Matrix z;
  z.noalias() = f.xs * w.transpose();
  const Vector half_norm = 0.5 * f.xs.rowwise().squaredNorm();
  z.colwise() -= half_norm;
  if (global_max) {
    z.array() -= z.maxCoeff();
  } else {
    const Vector mx = z.rowwise().maxCoeff();
    z.colwise() -= mx;
  }
  f.phi = z.array().exp() / std::sqrt(m);
  return f;
}

Matrix feature_map_backward(const FeatureMap& f, const Matrix& w, const Matrix& dphi) {
  const double d = static_cast<double>(f.xs.cols());
  const Matrix dz = dphi.cwiseProduct(f.phi);
  Matrix dxs;
  dxs.noalias() = dz * w;
  const Vector rs = dz.rowwise().sum();
  dxs.array() -= f.xs.array().colwise() * rs.array();
  return dxs * std::pow(d, -0.25);
}

}  // namespace

Matrix softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix s;
  s.noalias() = (q * k.transpose()) * inv;
  return row_softmax(s) * v;
}

AttentionGrads softmax_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& dout) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix s;
  s.noalias() = (q * k.transpose()) * inv;
  const Matrix p = row_softmax(s);
  AttentionGrads g;
  g.dv.noalias() = p.transpose() * dout;
  Matrix dp;
  dp.noalias() = dout * v.transpose();
  const Vector rs = dp.cwiseProduct(p).rowwise().sum();
  Matrix ds = p.array() * (dp.array().colwise() - rs.array());
  g.dq.noalias() = ds * k * inv;
  g.dk.noalias() = ds.transpose() * q * inv;
  return g;
}

Matrix performer_attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& features) {
  const FeatureMap fq = feature_map(q, features, false);
  const FeatureMap fk = feature_map(k, features, true);
  Matrix kv;
  kv.noalias() = fk.phi.transpose() * v;
  const Vector ksum = fk.phi.colwise().sum().transpose();
  Matrix num;
  num.noalias() = fq.phi * kv;
  const Vector den = fq.phi * ksum;
  return num.array().colwise() / den.array();
}

AttentionGrads performer_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                            const Matrix& features, const Matrix& dout) {
  const FeatureMap fq = feature_map(q, features, false);
  const FeatureMap fk = feature_map(k, features, true);
  Matrix kv;
  kv.noalias() = fk.phi.transpose() * v;
  const Vector ksum = fk.phi.colwise().sum().transpose();
  Matrix num;
  num.noalias() = fq.phi * kv;
  const Vector den = fq.phi * ksum;
  const Matrix out = num.array().colwise() / den.array();

  const Matrix dnum = dout.array().colwise() / den.array();
  const Vector dden = -(dout.cwiseProduct(out).rowwise().sum().array() / den.array()).matrix();

  Matrix dphi_q;
  dphi_q.noalias() = dnum * kv.transpose();
  dphi_q.noalias() += dden * ksum.transpose();
  Matrix dkv;
  dkv.noalias() = fq.phi.transpose() * dnum;
  const Vector dksum = fq.phi.transpose() * dden;
  Matrix dphi_k;
  dphi_k.noalias() = v * dkv.transpose();
  dphi_k.rowwise() += dksum.transpose();

  AttentionGrads g;
  g.dv.noalias() = fk.phi * dkv;
  g.dq = feature_map_backward(fq, features, dphi_q);
  g.dk = feature_map_backward(fk, features, dphi_k);
  return g;
}

Matrix orthogonal_random_features(int m, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w(m, d);
  int row = 0;
  while (row < m) {
    Matrix g(d, d);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    const Matrix qm = qr.householderQ() * Matrix::Identity(d, d);
    for (int r = 0; r < d && row < m; ++r, ++row) {
      double chi = 0.0;
      for (int c = 0; c < d; ++c) {
        const double z = normal(rng);
        chi += z * z;
      }
      w.row(row) = qm.col(r).transpose() * std::sqrt(chi);
    }
  }
  return w;
}

}  // namespace gridmp::nn
