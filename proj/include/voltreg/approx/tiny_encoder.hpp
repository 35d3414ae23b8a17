#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "voltreg/errors.hpp"

namespace voltreg::approx {

struct TinyEncoderConfig {
  std::size_t features = 9;  // tokens, one scalar each
  std::size_t d_model = 8;
  std::size_t heads = 2;
  std::size_t mlp = 16;
  std::size_t layers = 2;
};

// Small post-norm transformer encoder over a sequence of scalar tokens,
// mean-pooled into a linear scalar head.
//
//   X0[i]  = x_i * We[i] + Be[i]
//   Y      = LN1(X + MHA(X))
//   X'     = LN2(Y + W2 gelu(W1 Y))
//   out    = w . mean_i X_L[i] + b
class TinyEncoder {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::RowVectorXd;
  using CMap = Eigen::Map<const Mat>;
  using MMap = Eigen::Map<Mat>;
  using CVMap = Eigen::Map<const Vec>;
  using MVMap = Eigen::Map<Vec>;

  static constexpr double kLnEps = 1e-5;

 public:
  TinyEncoder() = default;

  explicit TinyEncoder(TinyEncoderConfig cfg) : cfg_(cfg) {
    if (cfg_.features == 0 || cfg_.d_model == 0 || cfg_.heads == 0 || cfg_.mlp == 0)
      throw DimensionMismatch("TinyEncoder dimensions must be positive");
    if (cfg_.d_model % cfg_.heads != 0)
      throw DimensionMismatch("d_model must be divisible by the number of heads");
    const std::size_t f = cfg_.features, d = cfg_.d_model, m = cfg_.mlp;
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
      const std::size_t o = at;
      at += n;
      return o;
    };
    we_ = take(f * d);
    be_ = take(f * d);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      LayerOffsets o;
      o.wq = take(d * d), o.bq = take(d);
      o.wk = take(d * d), o.bk = take(d);
      o.wv = take(d * d), o.bv = take(d);
      o.wo = take(d * d), o.bo = take(d);
      o.g1 = take(d), o.b1 = take(d);
      o.w1 = take(d * m), o.c1 = take(m);
      o.w2 = take(m * d), o.c2 = take(d);
      o.g2 = take(d), o.b2 = take(d);
      layers_.push_back(o);
    }
    wout_ = take(d);
    bout_ = take(1);
    params_.assign(at, 0.0);
    for (const auto& o : layers_) {
      for (std::size_t i = 0; i < d; ++i) params_[o.g1 + i] = params_[o.g2 + i] = 1.0;
    }
  }

  void initialize(std::mt19937_64& rng) {
    const std::size_t f = cfg_.features, d = cfg_.d_model, m = cfg_.mlp;
    auto fill = [&](std::size_t off, std::size_t n, double bound) {
      std::uniform_real_distribution<double> u(-bound, bound);
      for (std::size_t i = 0; i < n; ++i) params_[off + i] = u(rng);
    };
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    fill(we_, f * d, 1.0);
    fill(be_, f * d, 0.1);
    for (const auto& o : layers_) {
      fill(o.wq, d * d, sd), fill(o.wk, d * d, sd), fill(o.wv, d * d, sd), fill(o.wo, d * d, sd);
      fill(o.w1, d * m, sd);
      fill(o.w2, m * d, 1.0 / std::sqrt(static_cast<double>(m)));
    }
    fill(wout_, d, sd);
  }

  const TinyEncoderConfig& config() const { return cfg_; }
  std::size_t input_size() const { return cfg_.features; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  double predict(std::span<const double> x) const { return forward(x, cache()); }

  double backprop(std::span<const double> x, double upstream, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw DimensionMismatch("gradient buffer size mismatch");
    Cache& c = cache();
    const double out = forward(x, c);
    const std::size_t f = cfg_.features, d = cfg_.d_model, m = cfg_.mlp, nh = cfg_.heads;
    const std::size_t dh = d / nh;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    double* g = grad.data();

    grad[bout_] += upstream;
    MVMap(g + wout_, static_cast<Eigen::Index>(d)) += upstream * c.pooled;
    Mat dx = Mat::Zero(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(d));
    const CVMap wout(p(wout_), static_cast<Eigen::Index>(d));
    dx.rowwise() = (upstream / static_cast<double>(f)) * wout;

    for (std::size_t l = cfg_.layers; l-- > 0;) {
      const auto& o = layers_[l];
      const auto& lc = c.layers[l];
      const auto ed = static_cast<Eigen::Index>(d), em = static_cast<Eigen::Index>(m);

      // LN2
      Mat dz2 = layer_norm_backward(dx, lc.zhat2, lc.inv_sigma2, o.g2, o.b2, g);
      // MLP
      MMap(g + o.w2, em, ed).noalias() += lc.h1.transpose() * dz2;
      MVMap(g + o.c2, ed) += dz2.colwise().sum();
      Mat dpre = dz2 * CMap(p(o.w2), em, ed).transpose();
      dpre.array() *= lc.pre1.unaryExpr([](double z) { return gelu_grad(z); }).array();
      MMap(g + o.w1, ed, em).noalias() += lc.y.transpose() * dpre;
      MVMap(g + o.c1, em) += dpre.colwise().sum();
      Mat dy = dz2 + dpre * CMap(p(o.w1), ed, em).transpose();

      // LN1
      Mat dz1 = layer_norm_backward(dy, lc.zhat1, lc.inv_sigma1, o.g1, o.b1, g);
      // attention output projection
      MMap(g + o.wo, ed, ed).noalias() += lc.att.transpose() * dz1;
      MVMap(g + o.bo, ed) += dz1.colwise().sum();
      Mat datt = dz1 * CMap(p(o.wo), ed, ed).transpose();

      Mat dq = Mat::Zero(static_cast<Eigen::Index>(f), ed), dk = dq, dv = dq;
      for (std::size_t h = 0; h < nh; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h * dh), w = static_cast<Eigen::Index>(dh);
        const Mat& a = lc.attn[h];
        auto dout_h = datt.middleCols(c0, w);
        Mat da = dout_h * lc.v.middleCols(c0, w).transpose();
        dv.middleCols(c0, w).noalias() += a.transpose() * dout_h;
        Mat ds = a.array() * (da.colwise() - (da.array() * a.array()).rowwise().sum().matrix()).array();
        ds *= scale;
        dq.middleCols(c0, w).noalias() += ds * lc.k.middleCols(c0, w);
        dk.middleCols(c0, w).noalias() += ds.transpose() * lc.q.middleCols(c0, w);
      }
      MMap(g + o.wq, ed, ed).noalias() += lc.x.transpose() * dq;
      MMap(g + o.wk, ed, ed).noalias() += lc.x.transpose() * dk;
      MMap(g + o.wv, ed, ed).noalias() += lc.x.transpose() * dv;
      MVMap(g + o.bq, ed) += dq.colwise().sum();
      MVMap(g + o.bk, ed) += dk.colwise().sum();
      MVMap(g + o.bv, ed) += dv.colwise().sum();
      dx = dz1 + dq * CMap(p(o.wq), ed, ed).transpose() + dk * CMap(p(o.wk), ed, ed).transpose() +
           dv * CMap(p(o.wv), ed, ed).transpose();
    }

    MMap gwe(g + we_, static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(d));
    MMap gbe(g + be_, static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < f; ++i) {
      const auto ei = static_cast<Eigen::Index>(i);
      gwe.row(ei) += x[i] * dx.row(ei);
      gbe.row(ei) += dx.row(ei);
    }
    return out;
  }

 private:
  struct LayerOffsets {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo, g1, b1, w1, c1, w2, c2, g2, b2;
  };

  struct LayerCache {
    Mat x, q, k, v, att, zhat1, y, pre1, h1, zhat2;
    std::vector<Mat> attn;
    Eigen::VectorXd inv_sigma1, inv_sigma2;
  };

  struct Cache {
    std::vector<LayerCache> layers;
    Vec pooled;
  };

  static Cache& cache() {
    thread_local Cache c;
    return c;
  }

  const double* p(std::size_t off) const { return params_.data() + off; }

  static double gelu(double z) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * z * (1.0 + std::tanh(k * (z + 0.044715 * z * z * z)));
  }

  static double gelu_grad(double z) {
    constexpr double k = 0.7978845608028654;
    const double t = std::tanh(k * (z + 0.044715 * z * z * z));
    return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * z * z);
  }

  // Row-wise layer norm of z; stores zhat and 1/sigma for the backward pass.
  Mat layer_norm(const Mat& z, std::size_t g_off, std::size_t b_off, Mat& zhat,
                 Eigen::VectorXd& inv_sigma) const {
    const auto d = z.cols();
    zhat.resize(z.rows(), d);
    inv_sigma.resize(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double mu = z.row(i).mean();
      const double var = (z.row(i).array() - mu).square().mean();
      inv_sigma(i) = 1.0 / std::sqrt(var + kLnEps);
      zhat.row(i) = (z.row(i).array() - mu) * inv_sigma(i);
    }
    const CVMap gamma(p(g_off), d), beta(p(b_off), d);
    Mat out = zhat.array().rowwise() * gamma.array();
    out.rowwise() += beta;
    return out;
  }

  Mat layer_norm_backward(const Mat& dout, const Mat& zhat, const Eigen::VectorXd& inv_sigma,
                          std::size_t g_off, std::size_t b_off, double* g) const {
    const auto d = dout.cols();
    MVMap(g + g_off, d) += (dout.array() * zhat.array()).colwise().sum().matrix();
    MVMap(g + b_off, d) += dout.colwise().sum();
    const CVMap gamma(p(g_off), d);
    Mat dzhat = dout.array().rowwise() * gamma.array();
    Mat dz(dout.rows(), d);
    for (Eigen::Index i = 0; i < dout.rows(); ++i) {
      const double m1 = dzhat.row(i).mean();
      const double m2 = (dzhat.row(i).array() * zhat.row(i).array()).mean();
      dz.row(i) = inv_sigma(i) * (dzhat.row(i).array() - m1 - zhat.row(i).array() * m2);
    }
    return dz;
  }

  double forward(std::span<const double> x, Cache& c) const {
    if (x.size() != cfg_.features) throw DimensionMismatch("TinyEncoder input has wrong dimension");
    const std::size_t f = cfg_.features, d = cfg_.d_model, m = cfg_.mlp, nh = cfg_.heads;
    const std::size_t dh = d / nh;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto ef = static_cast<Eigen::Index>(f), ed = static_cast<Eigen::Index>(d),
               em = static_cast<Eigen::Index>(m);

    Mat h(ef, ed);
    const CMap we(p(we_), ef, ed), be(p(be_), ef, ed);
    for (Eigen::Index i = 0; i < ef; ++i) h.row(i) = x[static_cast<std::size_t>(i)] * we.row(i) + be.row(i);

    c.layers.resize(cfg_.layers);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const auto& o = layers_[l];
      auto& lc = c.layers[l];
      lc.x = h;
      lc.q = h * CMap(p(o.wq), ed, ed);
      lc.q.rowwise() += CVMap(p(o.bq), ed);
      lc.k = h * CMap(p(o.wk), ed, ed);
      lc.k.rowwise() += CVMap(p(o.bk), ed);
      lc.v = h * CMap(p(o.wv), ed, ed);
      lc.v.rowwise() += CVMap(p(o.bv), ed);
      lc.att.resize(ef, ed);
      lc.attn.resize(nh);
      for (std::size_t hd = 0; hd < nh; ++hd) {
        const auto c0 = static_cast<Eigen::Index>(hd * dh), w = static_cast<Eigen::Index>(dh);
        Mat s = scale * (lc.q.middleCols(c0, w) * lc.k.middleCols(c0, w).transpose());
        for (Eigen::Index i = 0; i < ef; ++i) {
          const double mx = s.row(i).maxCoeff();
          s.row(i) = (s.row(i).array() - mx).exp();
          s.row(i) /= s.row(i).sum();
        }
        lc.att.middleCols(c0, w) = s * lc.v.middleCols(c0, w);
        lc.attn[hd] = std::move(s);
      }
      Mat z1 = h + lc.att * CMap(p(o.wo), ed, ed);
      z1.rowwise() += CVMap(p(o.bo), ed);
      lc.y = layer_norm(z1, o.g1, o.b1, lc.zhat1, lc.inv_sigma1);

      lc.pre1 = lc.y * CMap(p(o.w1), ed, em);
      lc.pre1.rowwise() += CVMap(p(o.c1), em);
      lc.h1 = lc.pre1.unaryExpr([](double z) { return gelu(z); });
      Mat z2 = lc.y + lc.h1 * CMap(p(o.w2), em, ed);
      z2.rowwise() += CVMap(p(o.c2), ed);
      h = layer_norm(z2, o.g2, o.b2, lc.zhat2, lc.inv_sigma2);
    }
    c.pooled = h.colwise().mean();
    return c.pooled.dot(CVMap(p(wout_), ed)) + params_[bout_];
  }

  TinyEncoderConfig cfg_{};
  std::size_t we_ = 0, be_ = 0, wout_ = 0, bout_ = 0;
  std::vector<LayerOffsets> layers_;
  std::vector<double> params_;
};

}  // namespace voltreg::approx
