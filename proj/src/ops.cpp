#include "touchspot/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <stdexcept>

namespace touchspot::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

MatMap as_matrix(Tensor& t, Eigen::Index rows, Eigen::Index cols) { return MatMap(t.data.data(), rows, cols); }
ConstMatMap as_matrix(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
  return ConstMatMap(t.data.data(), rows, cols);
}

Tape* common_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("op on an empty Var");
  if (a.tape() != b.tape()) throw std::invalid_argument("op mixes variables from different tapes");
  return a.tape();
}

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw std::invalid_argument(std::string(op) + ": " + what);
}

void accumulate(Node* n, const Tensor& g) {
  auto& dst = n->grad_buffer().data;
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += g.data[i];
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var matmul(const Var& x, const Var& w) {
  Tape* tape = common_tape(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(wv.rank() == 2, "matmul", "weight must be rank 2, got " + shape_string(wv.shape));
  require(xv.rank() >= 1 && xv.cols() == wv.dim(0), "matmul",
          "shape mismatch " + shape_string(xv.shape) + " x " + shape_string(wv.shape));
  const auto m = static_cast<Eigen::Index>(xv.rows());
  const int k = wv.dim(0);
  const int n = wv.dim(1);
  std::vector<int> out_shape = xv.shape;
  out_shape.back() = n;
  Tensor out(out_shape);
  as_matrix(out, m, n).noalias() = as_matrix(xv, m, k) * as_matrix(wv, k, n);
  Node* xn = x.node();
  Node* wn = w.node();
  Var y = tape->make(std::move(out), x.requires_grad() || w.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [xn, wn, yn, m, k, n]() {
    auto dy = as_matrix(std::as_const(yn->grad), m, n);
    if (xn->requires_grad) as_matrix(xn->grad_buffer(), m, k).noalias() += dy * as_matrix(std::as_const(wn->value), k, n).transpose();
    if (wn->requires_grad) as_matrix(wn->grad_buffer(), k, n).noalias() += as_matrix(std::as_const(xn->value), m, k).transpose() * dy;
  };
  return y;
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_broadcast(matmul(x, w), b); }

Var add(const Var& a, const Var& b) {
  Tape* tape = common_tape(a, b);
  require(a.shape() == b.shape(), "add", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  Node* an = a.node();
  Node* bn = b.node();
  Var y = tape->make(std::move(out), a.requires_grad() || b.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [an, bn, yn]() {
    if (an->requires_grad) accumulate(an, yn->grad);
    if (bn->requires_grad) accumulate(bn, yn->grad);
  };
  return y;
}

Var sub(const Var& a, const Var& b) {
  Tape* tape = common_tape(a, b);
  require(a.shape() == b.shape(), "sub", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
  Node* an = a.node();
  Node* bn = b.node();
  Var y = tape->make(std::move(out), a.requires_grad() || b.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [an, bn, yn]() {
    if (an->requires_grad) accumulate(an, yn->grad);
    if (bn->requires_grad) {
      auto& dst = bn->grad_buffer().data;
      for (size_t i = 0; i < dst.size(); ++i) dst[i] -= yn->grad.data[i];
    }
  };
  return y;
}

Var mul(const Var& a, const Var& b) {
  Tape* tape = common_tape(a, b);
  require(a.shape() == b.shape(), "mul", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  Node* an = a.node();
  Node* bn = b.node();
  Var y = tape->make(std::move(out), a.requires_grad() || b.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [an, bn, yn]() {
    const auto& g = yn->grad.data;
    if (an->requires_grad) {
      auto& dst = an->grad_buffer().data;
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * bn->value.data[i];
    }
    if (bn->requires_grad) {
      auto& dst = bn->grad_buffer().data;
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * an->value.data[i];
    }
  };
  return y;
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v *= s;
  Node* an = a.node();
  Var y = a.tape()->make(std::move(out), a.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [an, yn, s]() {
    auto& dst = an->grad_buffer().data;
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += s * yn->grad.data[i];
  };
  return y;
}

Var add_broadcast(const Var& a, const Var& b) {
  Tape* tape = common_tape(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(bs.size() <= as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin()), "add_broadcast",
          shape_string(bs) + " is not a trailing shape of " + shape_string(as));
  const size_t inner = b.value().size();
  const size_t outer = inner == 0 ? 0 : a.value().size() / inner;
  Tensor out = a.value();
  for (size_t o = 0; o < outer; ++o) {
    double* row = out.data.data() + o * inner;
    for (size_t i = 0; i < inner; ++i) row[i] += b.value().data[i];
  }
  Node* an = a.node();
  Node* bn = b.node();
  Var y = tape->make(std::move(out), a.requires_grad() || b.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [an, bn, yn, inner, outer]() {
    if (an->requires_grad) accumulate(an, yn->grad);
    if (bn->requires_grad) {
      auto& dst = bn->grad_buffer().data;
      for (size_t o = 0; o < outer; ++o) {
        const double* row = yn->grad.data.data() + o * inner;
        for (size_t i = 0; i < inner; ++i) dst[i] += row[i];
      }
    }
  };
  return y;
}

Var scale_rows(const Var& x, const std::vector<double>& factors) {
  require(x.value().rank() >= 1 && static_cast<size_t>(x.value().dim(0)) == factors.size(), "scale_rows",
          "factor count does not match first dim of " + shape_string(x.shape()));
  const size_t block = factors.empty() ? 0 : x.value().size() / factors.size();
  Tensor out = x.value();
  for (size_t r = 0; r < factors.size(); ++r) {
    for (size_t i = 0; i < block; ++i) out.data[r * block + i] *= factors[r];
  }
  Node* xn = x.node();
  Var y = x.tape()->make(std::move(out), x.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [xn, yn, factors, block]() {
    auto& dst = xn->grad_buffer().data;
    for (size_t r = 0; r < factors.size(); ++r) {
      for (size_t i = 0; i < block; ++i) dst[r * block + i] += factors[r] * yn->grad.data[r * block + i];
    }
  };
  return y;
}

Var silu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data) v = v * sigmoid(v);
  Node* xn = x.node();
  Var y = x.tape()->make(std::move(out), x.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [xn, yn]() {
    auto& dst = xn->grad_buffer().data;
    for (size_t i = 0; i < dst.size(); ++i) {
      const double v = xn->value.data[i];
      const double s = sigmoid(v);
      dst[i] += yn->grad.data[i] * (s + v * s * (1.0 - s));
    }
  };
  return y;
}

Var softmax(const Var& x) {
  const Tensor& xv = x.value();
  const size_t rows = xv.rows();
  const int cols = xv.cols();
  Tensor out(xv.shape);
  for (size_t r = 0; r < rows; ++r) {
    const double* in = xv.data.data() + r * cols;
    double* o = out.data.data() + r * cols;
    double mx = in[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double sum = 0;
    for (int c = 0; c < cols; ++c) sum += (o[c] = std::exp(in[c] - mx));
    for (int c = 0; c < cols; ++c) o[c] /= sum;
  }
  Node* xn = x.node();
  Var y = x.tape()->make(std::move(out), x.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [xn, yn, rows, cols]() {
    auto& dst = xn->grad_buffer().data;
    for (size_t r = 0; r < rows; ++r) {
      const double* p = yn->value.data.data() + r * cols;
      const double* g = yn->grad.data.data() + r * cols;
      double dot = 0;
      for (int c = 0; c < cols; ++c) dot += p[c] * g[c];
      for (int c = 0; c < cols; ++c) dst[r * cols + c] += p[c] * (g[c] - dot);
    }
  };
  return y;
}

Var reshape(const Var& x, std::vector<int> shape) {
  require(shape_numel(shape) == x.value().size(), "reshape",
          shape_string(x.shape()) + " -> " + shape_string(shape));
  Tensor out(std::move(shape), x.value().data);
  Node* xn = x.node();
  Var y = x.tape()->make(std::move(out), x.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [xn, yn]() { accumulate(xn, yn->grad); };
  return y;
}

Var concat(const Var& a, const Var& b, int axis) {
  Tape* tape = common_tape(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() == bs.size() && axis >= 0 && axis < static_cast<int>(as.size()), "concat", "rank/axis mismatch");
  for (size_t i = 0; i < as.size(); ++i) {
    if (static_cast<int>(i) != axis) require(as[i] == bs[i], "concat", shape_string(as) + " vs " + shape_string(bs));
  }
  size_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= as[i];
  const size_t ia = outer ? a.value().size() / outer : 0;
  const size_t ib = outer ? b.value().size() / outer : 0;
  std::vector<int> shape = as;
  shape[axis] += bs[axis];
  Tensor out(shape);
  for (size_t o = 0; o < outer; ++o) {
    std::copy_n(a.value().data.data() + o * ia, ia, out.data.data() + o * (ia + ib));
    std::copy_n(b.value().data.data() + o * ib, ib, out.data.data() + o * (ia + ib) + ia);
  }
  Node* an = a.node();
  Node* bn = b.node();
  Var y = tape->make(std::move(out), a.requires_grad() || b.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [an, bn, yn, outer, ia, ib]() {
    for (size_t o = 0; o < outer; ++o) {
      const double* g = yn->grad.data.data() + o * (ia + ib);
      if (an->requires_grad) {
        double* d = an->grad_buffer().data.data() + o * ia;
        for (size_t i = 0; i < ia; ++i) d[i] += g[i];
      }
      if (bn->requires_grad) {
        double* d = bn->grad_buffer().data.data() + o * ib;
        for (size_t i = 0; i < ib; ++i) d[i] += g[ia + i];
      }
    }
  };
  return y;
}

Var mean_tokens(const Var& x) {
  require(x.value().rank() == 3, "mean_tokens", "expected [N, T, C], got " + shape_string(x.shape()));
  const int n = x.value().dim(0), t = x.value().dim(1), c = x.value().dim(2);
  Tensor out({n, c});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < t; ++j) {
      const double* row = x.value().data.data() + (static_cast<size_t>(i) * t + j) * c;
      for (int k = 0; k < c; ++k) out.data[static_cast<size_t>(i) * c + k] += row[k];
    }
    for (int k = 0; k < c; ++k) out.data[static_cast<size_t>(i) * c + k] /= t;
  }
  Node* xn = x.node();
  Var y = x.tape()->make(std::move(out), x.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [xn, yn, n, t, c]() {
    auto& dst = xn->grad_buffer().data;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < t; ++j) {
        for (int k = 0; k < c; ++k) {
          dst[(static_cast<size_t>(i) * t + j) * c + k] += yn->grad.data[static_cast<size_t>(i) * c + k] / t;
        }
      }
    }
  };
  return y;
}

int conv_out_size(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

Var conv2d(const Var& x, const Var& w, const Var& b, const ConvSpec& s) {
  Tape* tape = common_tape(x, w);
  const Tensor& xv = x.value();
  require(xv.rank() == 4, "conv2d", "input must be [N, H, W, C], got " + shape_string(xv.shape));
  const int n = xv.dim(0), h = xv.dim(1), wd = xv.dim(2), cin = xv.dim(3);
  const int patch = s.kernel_h * s.kernel_w * cin;
  require(w.value().rank() == 2 && w.value().dim(0) == patch, "conv2d",
          "weight " + shape_string(w.shape()) + " does not match kernel for " + std::to_string(cin) + " channels");
  const int cout = w.value().dim(1);
  const int ho = conv_out_size(h, s.kernel_h, s.stride_h, s.pad_h);
  const int wo = conv_out_size(wd, s.kernel_w, s.stride_w, s.pad_w);
  require(ho > 0 && wo > 0, "conv2d", "input too small for kernel");
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * ho * wo;

  auto col = std::make_shared<RowMat>(RowMat::Zero(rows, patch));
  for (int i = 0; i < n; ++i) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double* dst = col->data() + ((static_cast<Eigen::Index>(i) * ho + oy) * wo + ox) * patch;
        for (int ky = 0; ky < s.kernel_h; ++ky) {
          const int iy = oy * s.stride_h - s.pad_h + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < s.kernel_w; ++kx) {
            const int ix = ox * s.stride_w - s.pad_w + kx;
            if (ix < 0 || ix >= wd) continue;
            const double* src = xv.data.data() + ((static_cast<size_t>(i) * h + iy) * wd + ix) * cin;
            std::copy_n(src, cin, dst + (ky * s.kernel_w + kx) * cin);
          }
        }
      }
    }
  }
  Tensor out({n, ho, wo, cout});
  auto om = as_matrix(out, rows, cout);
  om.noalias() = *col * as_matrix(w.value(), patch, cout);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data.data(), cout);

  Node* xn = x.node();
  Node* wn = w.node();
  Node* bn = b.node();
  Var y = tape->make(std::move(out), x.requires_grad() || w.requires_grad() || b.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [=]() {
    auto dy = as_matrix(std::as_const(yn->grad), rows, cout);
    if (wn->requires_grad) as_matrix(wn->grad_buffer(), patch, cout).noalias() += col->transpose() * dy;
    if (bn->requires_grad) {
      Eigen::Map<Eigen::RowVectorXd>(bn->grad_buffer().data.data(), cout) += dy.colwise().sum();
    }
    if (xn->requires_grad) {
      RowMat dcol = dy * as_matrix(std::as_const(wn->value), patch, cout).transpose();
      auto& dx = xn->grad_buffer().data;
      for (int i = 0; i < n; ++i) {
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            const double* src = dcol.data() + ((static_cast<Eigen::Index>(i) * ho + oy) * wo + ox) * patch;
            for (int ky = 0; ky < s.kernel_h; ++ky) {
              const int iy = oy * s.stride_h - s.pad_h + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < s.kernel_w; ++kx) {
                const int ix = ox * s.stride_w - s.pad_w + kx;
                if (ix < 0 || ix >= wd) continue;
                double* d = dx.data() + ((static_cast<size_t>(i) * h + iy) * wd + ix) * cin;
                const double* g = src + (ky * s.kernel_w + kx) * cin;
                for (int c = 0; c < cin; ++c) d[c] += g[c];
              }
            }
          }
        }
      }
    }
  };
  return y;
}

Var upsample_time(const Var& x, int out_len) {
  require(x.value().rank() == 3, "upsample_time", "expected [B, T, C], got " + shape_string(x.shape()));
  const int b = x.value().dim(0), t = x.value().dim(1), c = x.value().dim(2);
  require(t >= (out_len + 1) / 2, "upsample_time", "input too short for requested length");
  Tensor out({b, out_len, c});
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < out_len; ++j) {
      std::copy_n(x.value().data.data() + (static_cast<size_t>(i) * t + j / 2) * c, c,
                  out.data.data() + (static_cast<size_t>(i) * out_len + j) * c);
    }
  }
  Node* xn = x.node();
  Var y = x.tape()->make(std::move(out), x.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [xn, yn, b, t, c, out_len]() {
    auto& dst = xn->grad_buffer().data;
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < out_len; ++j) {
        const double* g = yn->grad.data.data() + (static_cast<size_t>(i) * out_len + j) * c;
        double* d = dst.data() + (static_cast<size_t>(i) * t + j / 2) * c;
        for (int k = 0; k < c; ++k) d[k] += g[k];
      }
    }
  };
  return y;
}

Var cross_attention(const Var& q, const Var& k, const Var& v, int heads, AttentionTrace* trace) {
  Tape* tape = common_tape(q, k);
  common_tape(k, v);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require(qv.rank() == 3 && kv.rank() == 3 && vv.rank() == 3, "cross_attention", "expected rank-3 inputs");
  const int n = qv.dim(0), tq = qv.dim(1), d = qv.dim(2), tk = kv.dim(1);
  require(kv.dim(0) == n && vv.dim(0) == n && kv.dim(2) == d && vv.dim(2) == d && vv.dim(1) == tk,
          "cross_attention", "q/k/v shapes disagree");
  require(heads > 0 && d % heads == 0, "cross_attention", "feature dim not divisible by heads");
  const int dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * heads * tq * tk);
  Tensor out({n, tq, d});
  for (int i = 0; i < n; ++i) {
    for (int h = 0; h < heads; ++h) {
      for (int a = 0; a < tq; ++a) {
        const double* qr = qv.data.data() + (static_cast<size_t>(i) * tq + a) * d + h * dh;
        double* p = probs->data() + ((static_cast<size_t>(i) * heads + h) * tq + a) * tk;
        double mx = -INFINITY;
        for (int j = 0; j < tk; ++j) {
          const double* kr = kv.data.data() + (static_cast<size_t>(i) * tk + j) * d + h * dh;
          double s = 0;
          for (int e = 0; e < dh; ++e) s += qr[e] * kr[e];
          p[j] = s * sc;
          mx = std::max(mx, p[j]);
        }
        double sum = 0;
        for (int j = 0; j < tk; ++j) sum += (p[j] = std::exp(p[j] - mx));
        for (int j = 0; j < tk; ++j) p[j] /= sum;
        double* o = out.data.data() + (static_cast<size_t>(i) * tq + a) * d + h * dh;
        for (int j = 0; j < tk; ++j) {
          const double* vr = vv.data.data() + (static_cast<size_t>(i) * tk + j) * d + h * dh;
          for (int e = 0; e < dh; ++e) o[e] += p[j] * vr[e];
        }
      }
    }
  }
  if (trace) trace->weights = Tensor({n, heads, tq, tk}, *probs);

  Node* qn = q.node();
  Node* kn = k.node();
  Node* vn = v.node();
  Var y = tape->make(std::move(out), q.requires_grad() || k.requires_grad() || v.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [=]() {
    std::vector<double> dp(tk);
    for (int i = 0; i < n; ++i) {
      for (int h = 0; h < heads; ++h) {
        for (int a = 0; a < tq; ++a) {
          const double* p = probs->data() + ((static_cast<size_t>(i) * heads + h) * tq + a) * tk;
          const double* go = yn->grad.data.data() + (static_cast<size_t>(i) * tq + a) * d + h * dh;
          double dot = 0;
          for (int j = 0; j < tk; ++j) {
            const double* vr = vn->value.data.data() + (static_cast<size_t>(i) * tk + j) * d + h * dh;
            double s = 0;
            for (int e = 0; e < dh; ++e) s += go[e] * vr[e];
            dp[j] = s;
            dot += s * p[j];
            if (vn->requires_grad) {
              double* dv = vn->grad_buffer().data.data() + (static_cast<size_t>(i) * tk + j) * d + h * dh;
              for (int e = 0; e < dh; ++e) dv[e] += p[j] * go[e];
            }
          }
          const double* qr = qn->value.data.data() + (static_cast<size_t>(i) * tq + a) * d + h * dh;
          for (int j = 0; j < tk; ++j) {
            const double ds = p[j] * (dp[j] - dot) * sc;
            if (ds == 0.0) continue;
            const double* kr = kn->value.data.data() + (static_cast<size_t>(i) * tk + j) * d + h * dh;
            if (qn->requires_grad) {
              double* dq = qn->grad_buffer().data.data() + (static_cast<size_t>(i) * tq + a) * d + h * dh;
              for (int e = 0; e < dh; ++e) dq[e] += ds * kr[e];
            }
            if (kn->requires_grad) {
              double* dk = kn->grad_buffer().data.data() + (static_cast<size_t>(i) * tk + j) * d + h * dh;
              for (int e = 0; e < dh; ++e) dk[e] += ds * qr[e];
            }
          }
        }
      }
    }
  };
  return y;
}

Var scalar_function(const Var& x, double value, Tensor grad) {
  require(grad.shape == x.shape(), "scalar_function", "gradient shape mismatch");
  Node* xn = x.node();
  Var y = x.tape()->make(Tensor({1}, {value}), x.requires_grad(), nullptr);
  Node* yn = y.node();
  yn->backward = [xn, yn, g = std::move(grad)]() {
    const double s = yn->grad.data[0];
    auto& dst = xn->grad_buffer().data;
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += s * g.data[i];
  };
  return y;
}

}  // namespace touchspot::ag
