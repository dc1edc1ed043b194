#include "resmatch/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "resmatch/parallel.hpp"
#include "resmatch/rng.hpp"

namespace resmatch {

namespace {

constexpr double kLnEps = 1e-5;

/// Offsets of every named parameter block inside the flat vector.
struct Layout {
  int d = 0, k = 0, f = 0, layers = 0, heads = 0;

  struct Encoder {
    size_t ln1_g, ln1_b;
    size_t wq, bq, wk, bk, wv, bv, wo, bo;
    size_t ln2_g, ln2_b;
    size_t wf1, bf1, wf2, bf2;
  };

  size_t prob_w1, prob_b1, prob_w2, prob_b2;
  size_t cap_w1, cap_b1, cap_w2, cap_b2;
  std::vector<Encoder> enc;
  size_t lnf_g, lnf_b;
  size_t out_w1, out_b1, out_w2, out_b2;
  size_t total = 0;

  explicit Layout(const ModelConfig& c)
      : d(c.hidden_dim), k(c.input_width), f(c.ffn_width()), layers(c.encoder_layers),
        heads(c.heads) {
    size_t at = 0;
    auto block = [&](size_t size) {
      size_t offset = at;
      at += size;
      return offset;
    };
    size_t dd = static_cast<size_t>(d) * d;
    prob_w1 = block(static_cast<size_t>(d) * k);
    prob_b1 = block(d);
    prob_w2 = block(dd);
    prob_b2 = block(d);
    cap_w1 = block(static_cast<size_t>(d) * k);
    cap_b1 = block(d);
    cap_w2 = block(dd);
    cap_b2 = block(d);
    enc.resize(layers);
    for (Encoder& e : enc) {
      e.ln1_g = block(d);
      e.ln1_b = block(d);
      e.wq = block(dd);
      e.bq = block(d);
      e.wk = block(dd);
      e.bk = block(d);
      e.wv = block(dd);
      e.bv = block(d);
      e.wo = block(dd);
      e.bo = block(d);
      e.ln2_g = block(d);
      e.ln2_b = block(d);
      e.wf1 = block(static_cast<size_t>(f) * d);
      e.bf1 = block(f);
      e.wf2 = block(static_cast<size_t>(d) * f);
      e.bf2 = block(d);
    }
    lnf_g = block(d);
    lnf_b = block(d);
    out_w1 = block(dd);
    out_b1 = block(d);
    out_w2 = block(static_cast<size_t>(k) * d);
    out_b2 = block(k);
    total = at;
  }
};

void check_config(const ModelConfig& c) {
  if (c.hidden_dim <= 0 || c.encoder_layers < 1 || c.input_width <= 0) {
    throw std::invalid_argument("model: dimensions must be positive");
  }
  if (c.heads <= 0 || c.hidden_dim % c.heads != 0) {
    throw std::invalid_argument("model: head count must divide the hidden dimension");
  }
}

// y[out] = W[out x in] x[in] + b[out]
void linear(const double* w, const double* b, const double* x, double* y, int out, int in) {
  for (int o = 0; o < out; ++o) {
    double acc = b[o];
    const double* row = w + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// Accumulates dW += dy (outer) x, db += dy, dx += W' dy.
void linear_backward(const double* w, const double* x, const double* dy, double* dw, double* db,
                     double* dx, int out, int in) {
  for (int o = 0; o < out; ++o) {
    double g = dy[o];
    db[o] += g;
    const double* row = w + static_cast<size_t>(o) * in;
    double* drow = dw + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      drow[i] += g * x[i];
      if (dx) dx[i] += row[i] * g;
    }
  }
}

void layer_norm(const double* x, const double* gain, const double* bias, double* xhat,
                double* out, double* inv_sigma, int d) {
  double mean = 0.0;
  for (int i = 0; i < d; ++i) mean += x[i];
  mean /= d;
  double var = 0.0;
  for (int i = 0; i < d; ++i) {
    double c = x[i] - mean;
    var += c * c;
  }
  var /= d;
  double inv = 1.0 / std::sqrt(var + kLnEps);
  *inv_sigma = inv;
  for (int i = 0; i < d; ++i) {
    xhat[i] = (x[i] - mean) * inv;
    out[i] = gain[i] * xhat[i] + bias[i];
  }
}

void layer_norm_backward(const double* xhat, double inv_sigma, const double* gain,
                         const double* dout, double* dgain, double* dbias, double* dx, int d) {
  double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
  for (int i = 0; i < d; ++i) {
    dgain[i] += dout[i] * xhat[i];
    dbias[i] += dout[i];
    double dxh = dout[i] * gain[i];
    sum_dxhat += dxh;
    sum_dxhat_xhat += dxh * xhat[i];
  }
  double mean_dxhat = sum_dxhat / d;
  double mean_dxhat_xhat = sum_dxhat_xhat / d;
  for (int i = 0; i < d; ++i) {
    double dxh = dout[i] * gain[i];
    dx[i] += inv_sigma * (dxh - mean_dxhat - xhat[i] * mean_dxhat_xhat);
  }
}

struct LayerCache {
  std::vector<double> ln1_xhat, ln1_out, ln1_inv;
  std::vector<double> q, k, v;
  std::vector<double> probs;        // heads * n * n softmax rows
  std::vector<double> attn_concat;  // n * d
  std::vector<double> attn_out;     // n * d
  std::vector<double> x_mid;        // n * d
  std::vector<double> ln2_xhat, ln2_out, ln2_inv;
  std::vector<double> ffn_pre, ffn_act;  // n * f
  std::vector<double> x_out;             // n * d
};

struct Cache {
  int n = 0;
  std::vector<double> cap_norm;              // k
  std::vector<double> prob_pre, prob_act;    // n * d
  std::vector<double> cap_pre, cap_act;      // d
  std::vector<double> cap_emb;               // d
  std::vector<double> x0;                    // n * d
  std::vector<LayerCache> layers;
  std::vector<double> lnf_xhat, lnf_out, lnf_inv;
  std::vector<double> out_pre, out_act;  // n * d
  Matrix output;                         // n * k
};

void check_finite(const std::vector<double>& v, const std::string& stage) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error("model: non-finite activation in " + stage);
    }
  }
}

std::vector<double> normalized_capacities(const Capacities& caps, int k) {
  if (static_cast<int>(caps.size()) != k) {
    throw std::invalid_argument("model: capacity vector length differs from input width");
  }
  double total = 0.0;
  for (int c : caps) total += c;
  std::vector<double> out(k, 0.0);
  if (total > 0.0) {
    for (int i = 0; i < k; ++i) out[i] = caps[i] / total;
  }
  return out;
}

void run_forward(const Layout& lay, const double* p, const Matrix& input,
                 const Capacities& capacities, Cache& c) {
  const int n = input.rows();
  const int d = lay.d, k = lay.k, f = lay.f;
  const int dh = d / lay.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.n = n;

  c.cap_norm = normalized_capacities(capacities, k);

  c.prob_pre.resize(static_cast<size_t>(n) * d);
  c.prob_act.resize(static_cast<size_t>(n) * d);
  c.x0.resize(static_cast<size_t>(n) * d);
  c.cap_pre.resize(d);
  c.cap_act.resize(d);
  c.cap_emb.resize(d);

  linear(p + lay.cap_w1, p + lay.cap_b1, c.cap_norm.data(), c.cap_pre.data(), d, k);
  for (int i = 0; i < d; ++i) c.cap_act[i] = std::max(0.0, c.cap_pre[i]);
  linear(p + lay.cap_w2, p + lay.cap_b2, c.cap_act.data(), c.cap_emb.data(), d, d);

  for (int i = 0; i < n; ++i) {
    double* pre = c.prob_pre.data() + static_cast<size_t>(i) * d;
    double* act = c.prob_act.data() + static_cast<size_t>(i) * d;
    double* x0 = c.x0.data() + static_cast<size_t>(i) * d;
    linear(p + lay.prob_w1, p + lay.prob_b1, input.row(i).data(), pre, d, k);
    for (int j = 0; j < d; ++j) act[j] = std::max(0.0, pre[j]);
    std::vector<double> proj(d);
    linear(p + lay.prob_w2, p + lay.prob_b2, act, proj.data(), d, d);
    for (int j = 0; j < d; ++j) x0[j] = proj[j] + c.cap_emb[j];
  }
  check_finite(c.x0, "input projection");

  c.layers.resize(lay.layers);
  const std::vector<double>* x_prev = &c.x0;
  for (int li = 0; li < lay.layers; ++li) {
    const Layout::Encoder& e = lay.enc[li];
    LayerCache& lc = c.layers[li];
    const std::string stage = "encoder layer " + std::to_string(li);

    lc.ln1_xhat.resize(static_cast<size_t>(n) * d);
    lc.ln1_out.resize(static_cast<size_t>(n) * d);
    lc.ln1_inv.resize(n);
    lc.q.resize(static_cast<size_t>(n) * d);
    lc.k.resize(static_cast<size_t>(n) * d);
    lc.v.resize(static_cast<size_t>(n) * d);
    lc.probs.assign(static_cast<size_t>(lay.heads) * n * n, 0.0);
    lc.attn_concat.assign(static_cast<size_t>(n) * d, 0.0);
    lc.attn_out.resize(static_cast<size_t>(n) * d);
    lc.x_mid.resize(static_cast<size_t>(n) * d);
    lc.ln2_xhat.resize(static_cast<size_t>(n) * d);
    lc.ln2_out.resize(static_cast<size_t>(n) * d);
    lc.ln2_inv.resize(n);
    lc.ffn_pre.resize(static_cast<size_t>(n) * f);
    lc.ffn_act.resize(static_cast<size_t>(n) * f);
    lc.x_out.resize(static_cast<size_t>(n) * d);

    for (int i = 0; i < n; ++i) {
      const double* x = x_prev->data() + static_cast<size_t>(i) * d;
      layer_norm(x, p + e.ln1_g, p + e.ln1_b, lc.ln1_xhat.data() + static_cast<size_t>(i) * d,
                 lc.ln1_out.data() + static_cast<size_t>(i) * d, &lc.ln1_inv[i], d);
      const double* y = lc.ln1_out.data() + static_cast<size_t>(i) * d;
      linear(p + e.wq, p + e.bq, y, lc.q.data() + static_cast<size_t>(i) * d, d, d);
      linear(p + e.wk, p + e.bk, y, lc.k.data() + static_cast<size_t>(i) * d, d, d);
      linear(p + e.wv, p + e.bv, y, lc.v.data() + static_cast<size_t>(i) * d, d, d);
    }

    for (int h = 0; h < lay.heads; ++h) {
      const int off = h * dh;
      double* probs = lc.probs.data() + static_cast<size_t>(h) * n * n;
      for (int i = 0; i < n; ++i) {
        double* row = probs + static_cast<size_t>(i) * n;
        const double* qi = lc.q.data() + static_cast<size_t>(i) * d + off;
        double max_score = -1e300;
        for (int j = 0; j < n; ++j) {
          const double* kj = lc.k.data() + static_cast<size_t>(j) * d + off;
          double s = 0.0;
          for (int t = 0; t < dh; ++t) s += qi[t] * kj[t];
          row[j] = s * scale;
          max_score = std::max(max_score, row[j]);
        }
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
          row[j] = std::exp(row[j] - max_score);
          total += row[j];
        }
        for (int j = 0; j < n; ++j) row[j] /= total;
        double* out = lc.attn_concat.data() + static_cast<size_t>(i) * d + off;
        for (int j = 0; j < n; ++j) {
          const double* vj = lc.v.data() + static_cast<size_t>(j) * d + off;
          for (int t = 0; t < dh; ++t) out[t] += row[j] * vj[t];
        }
      }
    }

    for (int i = 0; i < n; ++i) {
      linear(p + e.wo, p + e.bo, lc.attn_concat.data() + static_cast<size_t>(i) * d,
             lc.attn_out.data() + static_cast<size_t>(i) * d, d, d);
      for (int j = 0; j < d; ++j) {
        lc.x_mid[static_cast<size_t>(i) * d + j] =
            (*x_prev)[static_cast<size_t>(i) * d + j] + lc.attn_out[static_cast<size_t>(i) * d + j];
      }
      layer_norm(lc.x_mid.data() + static_cast<size_t>(i) * d, p + e.ln2_g, p + e.ln2_b,
                 lc.ln2_xhat.data() + static_cast<size_t>(i) * d,
                 lc.ln2_out.data() + static_cast<size_t>(i) * d, &lc.ln2_inv[i], d);
      double* pre = lc.ffn_pre.data() + static_cast<size_t>(i) * f;
      double* act = lc.ffn_act.data() + static_cast<size_t>(i) * f;
      linear(p + e.wf1, p + e.bf1, lc.ln2_out.data() + static_cast<size_t>(i) * d, pre, f, d);
      for (int j = 0; j < f; ++j) act[j] = std::max(0.0, pre[j]);
      std::vector<double> ffn_out(d);
      linear(p + e.wf2, p + e.bf2, act, ffn_out.data(), d, f);
      for (int j = 0; j < d; ++j) {
        lc.x_out[static_cast<size_t>(i) * d + j] = lc.x_mid[static_cast<size_t>(i) * d + j] + ffn_out[j];
      }
    }
    check_finite(lc.x_out, stage);
    x_prev = &lc.x_out;
  }

  c.lnf_xhat.resize(static_cast<size_t>(n) * d);
  c.lnf_out.resize(static_cast<size_t>(n) * d);
  c.lnf_inv.resize(n);
  c.out_pre.resize(static_cast<size_t>(n) * d);
  c.out_act.resize(static_cast<size_t>(n) * d);
  c.output = Matrix(n, k);
  for (int i = 0; i < n; ++i) {
    layer_norm(x_prev->data() + static_cast<size_t>(i) * d, p + lay.lnf_g, p + lay.lnf_b,
               c.lnf_xhat.data() + static_cast<size_t>(i) * d,
               c.lnf_out.data() + static_cast<size_t>(i) * d, &c.lnf_inv[i], d);
    double* pre = c.out_pre.data() + static_cast<size_t>(i) * d;
    double* act = c.out_act.data() + static_cast<size_t>(i) * d;
    linear(p + lay.out_w1, p + lay.out_b1, c.lnf_out.data() + static_cast<size_t>(i) * d, pre, d, d);
    for (int j = 0; j < d; ++j) act[j] = std::max(0.0, pre[j]);
    std::vector<double> delta(k);
    linear(p + lay.out_w2, p + lay.out_b2, act, delta.data(), k, d);
    // Residual head: the network predicts a correction, clamped so the
    // result stays a valid weight matrix.
    for (int j = 0; j < k; ++j) c.output(i, j) = std::max(0.0, input(i, j) + delta[j]);
  }
  check_finite(c.output.data(), "output projection");
}

/// Reverse sweep; `dout` is the loss gradient at the clamped output.
void run_backward(const Layout& lay, const double* p, const Matrix& input, const Cache& c,
                  const Matrix& dout, double* g) {
  const int n = c.n;
  const int d = lay.d, k = lay.k, f = lay.f;
  const int dh = d / lay.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> dx(static_cast<size_t>(n) * d, 0.0);

  // Output block.
  {
    std::vector<double> ddelta(k), dact(d), dpre(d), dlnf(static_cast<size_t>(n) * d, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) {
        // The stored output is max(0, input + delta); the clamp passes
        // gradient exactly where that is positive.
        ddelta[j] = c.output(i, j) > 0.0 ? dout(i, j) : 0.0;
      }
      std::fill(dact.begin(), dact.end(), 0.0);
      linear_backward(p + lay.out_w2, c.out_act.data() + static_cast<size_t>(i) * d, ddelta.data(),
                      g + lay.out_w2, g + lay.out_b2, dact.data(), k, d);
      for (int j = 0; j < d; ++j) {
        dpre[j] = c.out_pre[static_cast<size_t>(i) * d + j] > 0.0 ? dact[j] : 0.0;
      }
      linear_backward(p + lay.out_w1, c.lnf_out.data() + static_cast<size_t>(i) * d, dpre.data(),
                      g + lay.out_w1, g + lay.out_b1, dlnf.data() + static_cast<size_t>(i) * d, d, d);
      layer_norm_backward(c.lnf_xhat.data() + static_cast<size_t>(i) * d, c.lnf_inv[i],
                          p + lay.lnf_g, dlnf.data() + static_cast<size_t>(i) * d, g + lay.lnf_g,
                          g + lay.lnf_b, dx.data() + static_cast<size_t>(i) * d, d);
    }
  }

  for (int li = lay.layers - 1; li >= 0; --li) {
    const Layout::Encoder& e = lay.enc[li];
    const LayerCache& lc = c.layers[li];

    // FFN sub-block: dx currently holds dL/d(x_out).
    std::vector<double> dmid(static_cast<size_t>(n) * d, 0.0);
    {
      std::vector<double> dffn(d), dact(f), dpre(f), dln2(d);
      for (int i = 0; i < n; ++i) {
        const double* dxo = dx.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
          dmid[static_cast<size_t>(i) * d + j] += dxo[j];  // residual path
          dffn[j] = dxo[j];
        }
        std::fill(dact.begin(), dact.end(), 0.0);
        linear_backward(p + e.wf2, lc.ffn_act.data() + static_cast<size_t>(i) * f, dffn.data(),
                        g + e.wf2, g + e.bf2, dact.data(), d, f);
        for (int j = 0; j < f; ++j) {
          dpre[j] = lc.ffn_pre[static_cast<size_t>(i) * f + j] > 0.0 ? dact[j] : 0.0;
        }
        std::fill(dln2.begin(), dln2.end(), 0.0);
        linear_backward(p + e.wf1, lc.ln2_out.data() + static_cast<size_t>(i) * d, dpre.data(),
                        g + e.wf1, g + e.bf1, dln2.data(), f, d);
        layer_norm_backward(lc.ln2_xhat.data() + static_cast<size_t>(i) * d, lc.ln2_inv[i],
                            p + e.ln2_g, dln2.data(), g + e.ln2_g, g + e.ln2_b,
                            dmid.data() + static_cast<size_t>(i) * d, d);
      }
    }

    // Attention sub-block: dmid holds dL/d(x_mid) = residual + attention out.
    std::vector<double> dln1(static_cast<size_t>(n) * d, 0.0);
    std::vector<double> dq(static_cast<size_t>(n) * d, 0.0);
    std::vector<double> dk(static_cast<size_t>(n) * d, 0.0);
    std::vector<double> dv(static_cast<size_t>(n) * d, 0.0);
    {
      std::vector<double> dconcat(static_cast<size_t>(n) * d, 0.0);
      for (int i = 0; i < n; ++i) {
        linear_backward(p + e.wo, lc.attn_concat.data() + static_cast<size_t>(i) * d,
                        dmid.data() + static_cast<size_t>(i) * d, g + e.wo, g + e.bo,
                        dconcat.data() + static_cast<size_t>(i) * d, d, d);
      }
      std::vector<double> dprob(n), dscore(n);
      for (int h = 0; h < lay.heads; ++h) {
        const int off = h * dh;
        const double* probs = lc.probs.data() + static_cast<size_t>(h) * n * n;
        for (int i = 0; i < n; ++i) {
          const double* row = probs + static_cast<size_t>(i) * n;
          const double* dout_h = dconcat.data() + static_cast<size_t>(i) * d + off;
          double dot = 0.0;
          for (int j = 0; j < n; ++j) {
            const double* vj = lc.v.data() + static_cast<size_t>(j) * d + off;
            double acc = 0.0;
            for (int t = 0; t < dh; ++t) acc += dout_h[t] * vj[t];
            dprob[j] = acc;
            double* dvj = dv.data() + static_cast<size_t>(j) * d + off;
            for (int t = 0; t < dh; ++t) dvj[t] += row[j] * dout_h[t];
          }
          for (int j = 0; j < n; ++j) dot += dprob[j] * row[j];
          for (int j = 0; j < n; ++j) dscore[j] = row[j] * (dprob[j] - dot);
          const double* qi = lc.q.data() + static_cast<size_t>(i) * d + off;
          double* dqi = dq.data() + static_cast<size_t>(i) * d + off;
          for (int j = 0; j < n; ++j) {
            const double* kj = lc.k.data() + static_cast<size_t>(j) * d + off;
            double* dkj = dk.data() + static_cast<size_t>(j) * d + off;
            double ds = dscore[j] * scale;
            for (int t = 0; t < dh; ++t) {
              dqi[t] += ds * kj[t];
              dkj[t] += ds * qi[t];
            }
          }
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      const double* y = lc.ln1_out.data() + static_cast<size_t>(i) * d;
      double* dy = dln1.data() + static_cast<size_t>(i) * d;
      linear_backward(p + e.wq, y, dq.data() + static_cast<size_t>(i) * d, g + e.wq, g + e.bq, dy,
                      d, d);
      linear_backward(p + e.wk, y, dk.data() + static_cast<size_t>(i) * d, g + e.wk, g + e.bk, dy,
                      d, d);
      linear_backward(p + e.wv, y, dv.data() + static_cast<size_t>(i) * d, g + e.wv, g + e.bv, dy,
                      d, d);
    }

    // Into the layer input: residual path plus layer-norm path.
    std::fill(dx.begin(), dx.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) {
        dx[static_cast<size_t>(i) * d + j] = dmid[static_cast<size_t>(i) * d + j];
      }
      layer_norm_backward(lc.ln1_xhat.data() + static_cast<size_t>(i) * d, lc.ln1_inv[i],
                          p + e.ln1_g, dln1.data() + static_cast<size_t>(i) * d, g + e.ln1_g,
                          g + e.ln1_b, dx.data() + static_cast<size_t>(i) * d, d);
    }
  }

  // Input projections: dx holds dL/d(x0).
  {
    std::vector<double> dcap_emb(d, 0.0);
    std::vector<double> dact(d), dpre(d);
    for (int i = 0; i < n; ++i) {
      const double* dxi = dx.data() + static_cast<size_t>(i) * d;
      for (int j = 0; j < d; ++j) dcap_emb[j] += dxi[j];
      std::fill(dact.begin(), dact.end(), 0.0);
      linear_backward(p + lay.prob_w2, c.prob_act.data() + static_cast<size_t>(i) * d, dxi,
                      g + lay.prob_w2, g + lay.prob_b2, dact.data(), d, d);
      for (int j = 0; j < d; ++j) {
        dpre[j] = c.prob_pre[static_cast<size_t>(i) * d + j] > 0.0 ? dact[j] : 0.0;
      }
      linear_backward(p + lay.prob_w1, input.row(i).data(), dpre.data(), g + lay.prob_w1,
                      g + lay.prob_b1, nullptr, d, k);
    }
    std::vector<double> dcap_act(d, 0.0), dcap_pre(d);
    linear_backward(p + lay.cap_w2, c.cap_act.data(), dcap_emb.data(), g + lay.cap_w2,
                    g + lay.cap_b2, dcap_act.data(), d, d);
    for (int j = 0; j < d; ++j) dcap_pre[j] = c.cap_pre[j] > 0.0 ? dcap_act[j] : 0.0;
    linear_backward(p + lay.cap_w1, c.cap_norm.data(), dcap_pre.data(), g + lay.cap_w1,
                    g + lay.cap_b1, nullptr, d, k);
  }
}

}  // namespace

Model::Model(const ModelConfig& config, uint64_t seed) : config_(config) {
  check_config(config);
  Layout lay(config);
  parameters_.assign(lay.total, 0.0);
  Rng rng(seed);

  auto init_linear = [&](size_t w, size_t b, int out, int in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (size_t i = 0; i < static_cast<size_t>(out) * in; ++i) {
      parameters_[w + i] = (2.0 * rng.next_double() - 1.0) * bound;
    }
    for (int i = 0; i < out; ++i) parameters_[b + i] = (2.0 * rng.next_double() - 1.0) * bound;
  };
  auto init_norm = [&](size_t gain, size_t bias, int d) {
    for (int i = 0; i < d; ++i) {
      parameters_[gain + i] = 1.0;
      parameters_[bias + i] = 0.0;
    }
  };

  const int d = config.hidden_dim, k = config.input_width, f = config.ffn_width();
  init_linear(lay.prob_w1, lay.prob_b1, d, k);
  init_linear(lay.prob_w2, lay.prob_b2, d, d);
  init_linear(lay.cap_w1, lay.cap_b1, d, k);
  init_linear(lay.cap_w2, lay.cap_b2, d, d);
  for (const Layout::Encoder& e : lay.enc) {
    init_norm(e.ln1_g, e.ln1_b, d);
    init_linear(e.wq, e.bq, d, d);
    init_linear(e.wk, e.bk, d, d);
    init_linear(e.wv, e.bv, d, d);
    init_linear(e.wo, e.bo, d, d);
    init_norm(e.ln2_g, e.ln2_b, d);
    init_linear(e.wf1, e.bf1, f, d);
    init_linear(e.wf2, e.bf2, d, f);
  }
  init_norm(lay.lnf_g, lay.lnf_b, d);
  init_linear(lay.out_w1, lay.out_b1, d, d);
  init_linear(lay.out_w2, lay.out_b2, k, d);
}

Model Model::zero_initialized(const ModelConfig& config) {
  Model m(config, 0);
  std::fill(m.parameters_.begin(), m.parameters_.end(), 0.0);
  return m;
}

Matrix Model::forward(const Matrix& predictions, const Capacities& capacities) const {
  if (predictions.cols() != config_.input_width) {
    throw std::invalid_argument("model: prediction matrix has " +
                                std::to_string(predictions.cols()) + " columns, expected " +
                                std::to_string(config_.input_width));
  }
  Layout lay(config_);
  Cache cache;
  run_forward(lay, parameters_.data(), predictions, capacities, cache);
  return std::move(cache.output);
}

double quadratic_loss(const Matrix& prediction, const Matrix& target) {
  if (!prediction.same_shape(target)) {
    throw std::invalid_argument("loss: prediction and target shapes differ");
  }
  double total = 0.0;
  for (size_t i = 0; i < prediction.size(); ++i) {
    double diff = prediction.data()[i] - target.data()[i];
    total += diff * diff;
  }
  return total;
}

double batch_loss(const Model& model, std::span<const TrainItem> batch,
                  std::vector<double>* gradients, int threads) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  Layout lay(model.config());
  const double* p = model.parameters().data();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  std::vector<double> losses(batch.size(), 0.0);
  std::vector<std::vector<double>> grads;
  if (gradients) grads.assign(batch.size(), {});

  auto work = [&](size_t b) {
    const TrainItem& item = batch[b];
    if (item.input.cols() != lay.k || !item.input.same_shape(item.target)) {
      throw std::invalid_argument("batch_loss: item shape mismatch");
    }
    Cache cache;
    run_forward(lay, p, item.input, item.capacities, cache);
    losses[b] = quadratic_loss(cache.output, item.target);
    if (gradients) {
      Matrix dout(item.input.rows(), lay.k);
      for (size_t i = 0; i < dout.size(); ++i) {
        dout.data()[i] =
            2.0 * (cache.output.data()[i] - item.target.data()[i]) * inv_batch;
      }
      grads[b].assign(lay.total, 0.0);
      run_backward(lay, p, item.input, cache, dout, grads[b].data());
    }
  };

  parallel_for(batch.size(), threads, work);

  if (gradients) {
    gradients->assign(lay.total, 0.0);
    // Summed in item order: the result is independent of thread count.
    for (size_t b = 0; b < batch.size(); ++b) {
      for (size_t i = 0; i < lay.total; ++i) (*gradients)[i] += grads[b][i];
    }
  }
  double loss = 0.0;
  for (double l : losses) loss += l;
  return loss * inv_batch;
}

TrainResult train_model(Model model, const std::vector<TrainItem>& train_set,
                        const std::vector<TrainItem>& val_set, const TrainConfig& config) {
  if (train_set.empty() || val_set.empty()) {
    throw std::invalid_argument("train_model: datasets must be nonempty");
  }
  Layout lay(model.config());
  Rng rng(config.seed);

  auto val_loss = [&]() {
    double total = 0.0;
    constexpr size_t kChunk = 64;
    for (size_t at = 0; at < val_set.size(); at += kChunk) {
      size_t len = std::min(kChunk, val_set.size() - at);
      total += batch_loss(model, std::span<const TrainItem>(val_set.data() + at, len), nullptr,
                          config.threads) *
               static_cast<double>(len);
    }
    return total / static_cast<double>(val_set.size());
  };

  TrainResult result{Model::zero_initialized(model.config())};
  const double initial_val = val_loss();
  double best = std::numeric_limits<double>::infinity();
  int diverged_streak = 0;

  std::vector<double> grad(lay.total), m1(lay.total, 0.0), m2(lay.total, 0.0);
  std::span<double> params = model.parameters();
  long long step = 0;

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<TrainItem> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate * std::pow(config.lr_decay, epoch);
    rng.shuffle(order);

    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t at = 0; at < order.size(); at += config.batch_pools) {
      size_t len = std::min<size_t>(config.batch_pools, order.size() - at);
      batch.clear();
      for (size_t i = 0; i < len; ++i) batch.push_back(train_set[order[at + i]]);
      epoch_loss += batch_loss(model, batch, &grad, config.threads);
      ++batches;

      ++step;
      const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (size_t i = 0; i < lay.total; ++i) {
        m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
        m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
        double update = (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
        params[i] -= lr * (update + config.weight_decay * params[i]);
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / std::max(batches, 1);
    stats.val_loss = val_loss();
    stats.learning_rate = lr;
    result.history.push_back(stats);

    if (stats.val_loss < best) {
      best = stats.val_loss;
      result.best_epoch = epoch;
      result.best_val_loss = best;
      std::copy(params.begin(), params.end(), result.model.parameters().begin());
    }
    if (stats.val_loss > 10.0 * initial_val) {
      if (++diverged_streak >= 3) {
        result.aborted = true;
        return result;
      }
    } else {
      diverged_streak = 0;
    }
  }
  return result;
}

void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta) {
  nlohmann::json j;
  j["format"] = "resmatch-checkpoint-v1";
  j["config"] = {{"hidden_dim", model.config().hidden_dim},
                 {"encoder_layers", model.config().encoder_layers},
                 {"heads", model.config().heads},
                 {"input_width", model.config().input_width}};
  j["epoch"] = meta.epoch;
  j["val_loss"] = meta.val_loss;
  j["seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  j["parameters"] = std::vector<double>(model.parameters().begin(), model.parameters().end());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << j.dump() << '\n';
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "resmatch-checkpoint-v1") {
    throw std::runtime_error("checkpoint: unknown format in " + path);
  }
  ModelConfig config;
  config.hidden_dim = j["config"]["hidden_dim"].get<int>();
  config.encoder_layers = j["config"]["encoder_layers"].get<int>();
  config.heads = j["config"]["heads"].get<int>();
  config.input_width = j["config"]["input_width"].get<int>();

  LoadedCheckpoint out{Model::zero_initialized(config)};
  std::vector<double> params = j["parameters"].get<std::vector<double>>();
  if (params.size() != out.model.parameter_count()) {
    throw std::runtime_error("checkpoint: parameter payload size mismatch");
  }
  std::copy(params.begin(), params.end(), out.model.parameters().begin());
  out.meta.epoch = j.value("epoch", 0);
  out.meta.val_loss = j.value("val_loss", 0.0);
  out.meta.seed = j.value("seed", uint64_t{0});
  out.meta.config_hash = j.value("config_hash", "");
  return out;
}

}  // namespace resmatch
