#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "numkit/kernels.hpp"
#include "numkit/tensor.hpp"

namespace numkit {

// Handle to a node on one particular tape. Never mix handles across tapes.
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the list is
// topological by construction; backward() replays it in reverse. A tape is
// single-writer: record a whole forward pass from one thread, then call
// backward once. Separate tapes are independent and may live on different
// threads.
template <typename T>
class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated during backward for grad-requiring nodes
    bool requires_grad = false;
    std::function<void(Tape&, int)> backward;  // (tape, own id); null for leaves
  };

  // --- node introduction -------------------------------------------------

  Value leaf(const Tensor<T>& t) { return push(t.shape, t.data, t.requires_grad, nullptr); }

  Value constant(const Tensor<T>& t) { return push(t.shape, t.data, false, nullptr); }

  Value constant(Shape shape, std::vector<T> data) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw std::invalid_argument("Tape::constant: shape/data mismatch");
    return push(std::move(shape), std::move(data), false, nullptr);
  }

  // Escape hatch for custom ops (also used by tests to inject deliberately
  // wrong gradient rules): caller supplies forward value and backward fn.
  Value custom(Shape shape, std::vector<T> data, const std::vector<Value>& parents,
               std::function<void(Tape&, int)> backward_fn) {
    bool rg = false;
    for (Value p : parents) rg = rg || node(p.id).requires_grad;
    return push(std::move(shape), std::move(data), rg, rg ? std::move(backward_fn) : nullptr);
  }

  // --- access -------------------------------------------------------------

  const Shape& shape(Value v) const { return node(v.id).shape; }
  const std::vector<T>& data(Value v) const { return node(v.id).data; }
  const std::vector<T>& grad(Value v) const {
    const Node& n = node(v.id);
    if (n.grad.empty() && n.requires_grad)
      throw std::logic_error("Tape::grad: backward has not run");
    return n.grad;
  }
  bool requires_grad(Value v) const { return node(v.id).requires_grad; }
  int rows(Value v) const { const Shape& s = node(v.id).shape; return s.empty() ? 1 : s[0]; }
  int cols(Value v) const { const Shape& s = node(v.id).shape; return s.size() < 2 ? 1 : s[1]; }
  std::size_t size() const { return nodes_.size(); }

  T scalar(Value v) const {
    const Node& n = node(v.id);
    if (n.data.size() != 1) throw std::logic_error("Tape::scalar: node is not scalar");
    return n.data[0];
  }

  // --- backward -----------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse. loss must be a
  // scalar node. Deterministic: node order and every accumulation order are
  // fixed by the recorded program.
  void backward(Value loss) {
    Node& ln = node(loss.id);
    if (ln.data.size() != 1)
      throw std::invalid_argument("Tape::backward: loss must be scalar, got " +
                                  shape_str(ln.shape));
    for (Node& n : nodes_)
      if (n.requires_grad) n.grad.assign(n.data.size(), T(0));
    if (!ln.requires_grad) return;  // nothing upstream requires grad
    ln.grad[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.backward) n.backward(*this, i);
    }
  }

  std::vector<T>& grad_buf(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const std::vector<T>& data_buf(int id) const { return nodes_[static_cast<std::size_t>(id)].data; }

  // --- elementwise ops ------------------------------------------------------

  Value add(Value a, Value b) {
    check_same_shape(a, b, "add");
    std::vector<T> out = data(a);
    const std::vector<T>& bd = data(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    const int ai = a.id, bi = b.id;
    return make(shape(a), std::move(out), {a, b}, [ai, bi](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      t.accumulate(ai, [&](std::vector<T>& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
      t.accumulate(bi, [&](std::vector<T>& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i]; });
    });
  }

  Value sub(Value a, Value b) {
    check_same_shape(a, b, "sub");
    std::vector<T> out = data(a);
    const std::vector<T>& bd = data(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    const int ai = a.id, bi = b.id;
    return make(shape(a), std::move(out), {a, b}, [ai, bi](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      t.accumulate(ai, [&](std::vector<T>& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
      t.accumulate(bi, [&](std::vector<T>& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i]; });
    });
  }

  Value mul(Value a, Value b) {
    check_same_shape(a, b, "mul");
    std::vector<T> out = data(a);
    const std::vector<T>& bd = data(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    const int ai = a.id, bi = b.id;
    return make(shape(a), std::move(out), {a, b}, [ai, bi](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      const std::vector<T>& ad = t.data_buf(ai);
      const std::vector<T>& bd2 = t.data_buf(bi);
      t.accumulate(ai, [&](std::vector<T>& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd2[i]; });
      t.accumulate(bi, [&](std::vector<T>& gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i]; });
    });
  }

  Value scale(Value a, T c) {
    std::vector<T> out = data(a);
    for (T& v : out) v *= c;
    const int ai = a.id;
    return make(shape(a), std::move(out), {a}, [ai, c](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      t.accumulate(ai, [&](std::vector<T>& ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i]; });
    });
  }

  Value relu(Value a) {
    std::vector<T> out = data(a);
    for (T& v : out) v = v > T(0) ? v : T(0);
    const int ai = a.id;
    return make(shape(a), std::move(out), {a}, [ai](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      const std::vector<T>& x = t.data_buf(ai);
      t.accumulate(ai, [&](std::vector<T>& ga) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > T(0) ? g[i] : T(0);
      });
    });
  }

  Value tanh_(Value a) {
    std::vector<T> out = data(a);
    for (T& v : out) v = std::tanh(v);
    const int ai = a.id;
    return make(shape(a), std::move(out), {a}, [ai](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      const std::vector<T>& y = t.data_buf(self);
      t.accumulate(ai, [&](std::vector<T>& ga) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
      });
    });
  }

  Value sigmoid(Value a) {
    std::vector<T> out = data(a);
    for (T& v : out) v = T(1) / (T(1) + std::exp(-v));
    const int ai = a.id;
    return make(shape(a), std::move(out), {a}, [ai](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      const std::vector<T>& y = t.data_buf(self);
      t.accumulate(ai, [&](std::vector<T>& ga) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
      });
    });
  }

  // --- matrix ops -----------------------------------------------------------

  Value matmul(Value a, Value b) {
    const int m = rows(a), k = cols(a), kb = rows(b), p = cols(b);
    if (k != kb)
      throw std::invalid_argument("matmul: inner dims disagree, " +
                                  shape_str(shape(a)) + " x " + shape_str(shape(b)));
    std::vector<T> out(static_cast<std::size_t>(m) * p);
    kernels::matmul_nn(data(a).data(), data(b).data(), out.data(), m, k, p);
    const int ai = a.id, bi = b.id;
    return make({m, p}, std::move(out), {a, b}, [ai, bi, m, k, p](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      const std::vector<T>& ad = t.data_buf(ai);
      const std::vector<T>& bd = t.data_buf(bi);
      t.accumulate(ai, [&](std::vector<T>& ga) {
        std::vector<T> tmp(ga.size());
        kernels::matmul_nt(g.data(), bd.data(), tmp.data(), m, p, k);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += tmp[i];
      });
      t.accumulate(bi, [&](std::vector<T>& gb) {
        std::vector<T> tmp(gb.size());
        kernels::matmul_tn(ad.data(), g.data(), tmp.data(), m, k, p);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += tmp[i];
      });
    });
  }

  // a[m x k] * b[p x k]^T -> [m x p]
  Value matmul_nt(Value a, Value b) {
    const int m = rows(a), k = cols(a), p = rows(b);
    if (k != cols(b))
      throw std::invalid_argument("matmul_nt: inner dims disagree, " +
                                  shape_str(shape(a)) + " x " + shape_str(shape(b)) + "^T");
    std::vector<T> out(static_cast<std::size_t>(m) * p);
    kernels::matmul_nt(data(a).data(), data(b).data(), out.data(), m, k, p);
    const int ai = a.id, bi = b.id;
    return make({m, p}, std::move(out), {a, b}, [ai, bi, m, k, p](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      const std::vector<T>& ad = t.data_buf(ai);
      const std::vector<T>& bd = t.data_buf(bi);
      t.accumulate(ai, [&](std::vector<T>& ga) {
        std::vector<T> tmp(ga.size());
        kernels::matmul_nn(g.data(), bd.data(), tmp.data(), m, p, k);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += tmp[i];
      });
      t.accumulate(bi, [&](std::vector<T>& gb) {
        std::vector<T> tmp(gb.size());
        kernels::matmul_tn(g.data(), ad.data(), tmp.data(), m, p, k);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += tmp[i];
      });
    });
  }

  // x[n x k] + row vector b[1 x k] broadcast over rows
  Value add_rowvec(Value x, Value b) {
    const int n = rows(x), k = cols(x);
    if (static_cast<std::int64_t>(k) != shape_numel(shape(b)))
      throw std::invalid_argument("add_rowvec: width mismatch " + shape_str(shape(x)) +
                                  " + " + shape_str(shape(b)));
    std::vector<T> out = data(x);
    const std::vector<T>& bd = data(b);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(i) * k + j] += bd[j];
    const int xi = x.id, bi = b.id;
    return make(shape(x), std::move(out), {x, b}, [xi, bi, n, k](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      t.accumulate(xi, [&](std::vector<T>& gx) { for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i]; });
      t.accumulate(bi, [&](std::vector<T>& gb) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < k; ++j) gb[j] += g[static_cast<std::size_t>(i) * k + j];
      });
    });
  }

  // --- structured softmax / normalization ------------------------------------

  // Softmax over the last dim after adding `mask` (entries 0 or kNegInf).
  // Fully-masked rows produce all-zero rows, never NaN.
  Value masked_softmax(Value x, Value mask) {
    check_same_shape(x, mask, "masked_softmax");
    const int n = static_cast<int>(data(x).size() / last_dim(x));
    const int c = last_dim(x);
    std::vector<T> out(data(x).size());
    kernels::masked_softmax_rows(data(x).data(), data(mask).data(), out.data(), nullptr, n, c);
    const int xi = x.id;
    return make(shape(x), std::move(out), {x}, [xi, n, c](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      const std::vector<T>& y = t.data_buf(self);
      t.accumulate(xi, [&](std::vector<T>& gx) {
        for (int i = 0; i < n; ++i) {
          const std::size_t off = static_cast<std::size_t>(i) * c;
          T dot = T(0);
          for (int j = 0; j < c; ++j) dot += g[off + j] * y[off + j];
          for (int j = 0; j < c; ++j) gx[off + j] += y[off + j] * (g[off + j] - dot);
        }
      });
    });
  }

  // log softmax over the last dim restricted to unmasked entries; masked and
  // fully-invalid entries output 0 (callers only ever pick valid positions).
  Value masked_log_softmax(Value x, Value mask) {
    check_same_shape(x, mask, "masked_log_softmax");
    const int c = last_dim(x);
    const int n = static_cast<int>(data(x).size()) / c;
    const std::vector<T>& xd = data(x);
    const std::vector<T>& md = data(mask);
    std::vector<T> out(xd.size(), T(0));
    std::vector<T> prob(xd.size(), T(0));  // kept for backward
    const T cut = static_cast<T>(kNegInf / 2);
    for (int i = 0; i < n; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * c;
      T mx = -std::numeric_limits<T>::infinity();
      bool any = false;
      for (int j = 0; j < c; ++j)
        if (md[off + j] > cut) { any = true; mx = std::max(mx, xd[off + j]); }
      if (!any) continue;
      T denom = T(0);
      for (int j = 0; j < c; ++j)
        if (md[off + j] > cut) denom += std::exp(xd[off + j] - mx);
      const T lse = mx + std::log(denom);
      for (int j = 0; j < c; ++j) {
        if (md[off + j] > cut) {
          out[off + j] = xd[off + j] - lse;
          prob[off + j] = std::exp(out[off + j]);
        }
      }
    }
    const int xi = x.id;
    auto probs = std::make_shared<std::vector<T>>(std::move(prob));
    return make(shape(x), std::move(out), {x}, [xi, n, c, probs](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      const std::vector<T>& p = *probs;
      t.accumulate(xi, [&](std::vector<T>& gx) {
        for (int i = 0; i < n; ++i) {
          const std::size_t off = static_cast<std::size_t>(i) * c;
          T gsum = T(0);
          for (int j = 0; j < c; ++j) gsum += g[off + j];
          for (int j = 0; j < c; ++j) {
            // masked entries have p == 0 and g should be 0 there anyway
            gx[off + j] += g[off + j] - p[off + j] * gsum;
          }
        }
      });
    });
  }

  Value layer_norm(Value x, Value gamma, Value beta, T eps) {
    const int n = rows(x), d = cols(x);
    if (shape_numel(shape(gamma)) != d || shape_numel(shape(beta)) != d)
      throw std::invalid_argument("layer_norm: gamma/beta must have length " + std::to_string(d));
    std::vector<T> out(data(x).size());
    kernels::layer_norm_rows(data(x).data(), data(gamma).data(), data(beta).data(), eps,
                             out.data(), n, d);
    const int xi = x.id, gi = gamma.id, bi = beta.id;
    return make(shape(x), std::move(out), {x, gamma, beta}, [xi, gi, bi, n, d, eps](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      const std::vector<T>& xd = t.data_buf(xi);
      const std::vector<T>& gam = t.data_buf(gi);
      // recompute per-row mean/var (cheaper than stashing them)
      t.accumulate(bi, [&](std::vector<T>& gb) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) gb[j] += g[static_cast<std::size_t>(i) * d + j];
      });
      auto row_stats = [&](int i, T& mean, T& inv) {
        const std::size_t off = static_cast<std::size_t>(i) * d;
        mean = T(0);
        for (int j = 0; j < d; ++j) mean += xd[off + j];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (int j = 0; j < d; ++j) { const T dv = xd[off + j] - mean; var += dv * dv; }
        var /= static_cast<T>(d);
        inv = T(1) / std::sqrt(var + eps);
      };
      t.accumulate(gi, [&](std::vector<T>& gg) {
        for (int i = 0; i < n; ++i) {
          T mean, inv; row_stats(i, mean, inv);
          const std::size_t off = static_cast<std::size_t>(i) * d;
          for (int j = 0; j < d; ++j) gg[j] += g[off + j] * (xd[off + j] - mean) * inv;
        }
      });
      t.accumulate(xi, [&](std::vector<T>& gx) {
        for (int i = 0; i < n; ++i) {
          T mean, inv; row_stats(i, mean, inv);
          const std::size_t off = static_cast<std::size_t>(i) * d;
          T gh_mean = T(0), ghx_mean = T(0);
          for (int j = 0; j < d; ++j) {
            const T xhat = (xd[off + j] - mean) * inv;
            const T gh = g[off + j] * gam[j];
            gh_mean += gh;
            ghx_mean += gh * xhat;
          }
          gh_mean /= static_cast<T>(d);
          ghx_mean /= static_cast<T>(d);
          for (int j = 0; j < d; ++j) {
            const T xhat = (xd[off + j] - mean) * inv;
            const T gh = g[off + j] * gam[j];
            gx[off + j] += (gh - gh_mean - xhat * ghx_mean) * inv;
          }
        }
      });
    });
  }

  // --- data movement ----------------------------------------------------------

  Value reshape(Value x, Shape s) {
    if (shape_numel(s) != static_cast<std::int64_t>(data(x).size()))
      throw std::invalid_argument("reshape: " + shape_str(shape(x)) + " -> " + shape_str(s));
    const int xi = x.id;
    return make(std::move(s), data(x), {x}, [xi](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      t.accumulate(xi, [&](std::vector<T>& gx) { for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i]; });
    });
  }

  Value slice_cols(Value x, int off, int len) {
    const int n = rows(x), k = cols(x);
    if (off < 0 || len <= 0 || off + len > k)
      throw std::invalid_argument("slice_cols: bad range");
    std::vector<T> out(static_cast<std::size_t>(n) * len);
    const std::vector<T>& xd = data(x);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < len; ++j)
        out[static_cast<std::size_t>(i) * len + j] = xd[static_cast<std::size_t>(i) * k + off + j];
    const int xi = x.id;
    return make({n, len}, std::move(out), {x}, [xi, n, k, off, len](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      t.accumulate(xi, [&](std::vector<T>& gx) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < len; ++j)
            gx[static_cast<std::size_t>(i) * k + off + j] += g[static_cast<std::size_t>(i) * len + j];
      });
    });
  }

  Value concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const int n = rows(parts[0]);
    int total = 0;
    for (Value p : parts) {
      if (rows(p) != n) throw std::invalid_argument("concat_cols: row mismatch");
      total += cols(p);
    }
    std::vector<T> out(static_cast<std::size_t>(n) * total);
    std::vector<int> offs, widths, ids;
    int off = 0;
    for (Value p : parts) {
      const int w = cols(p);
      const std::vector<T>& pd = data(p);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < w; ++j)
          out[static_cast<std::size_t>(i) * total + off + j] = pd[static_cast<std::size_t>(i) * w + j];
      offs.push_back(off);
      widths.push_back(w);
      ids.push_back(p.id);
      off += w;
    }
    return make({n, total}, std::move(out), parts, [ids, offs, widths, n, total](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      for (std::size_t pi = 0; pi < ids.size(); ++pi) {
        const int w = widths[pi], o = offs[pi];
        t.accumulate(ids[pi], [&](std::vector<T>& gp) {
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < w; ++j)
              gp[static_cast<std::size_t>(i) * w + j] += g[static_cast<std::size_t>(i) * total + o + j];
        });
      }
    });
  }

  Value slice_rows(Value x, int off, int len) {
    const int n = rows(x), k = cols(x);
    if (off < 0 || len <= 0 || off + len > n)
      throw std::invalid_argument("slice_rows: bad range");
    const std::vector<T>& xd = data(x);
    std::vector<T> out(xd.begin() + static_cast<std::ptrdiff_t>(off) * k,
                       xd.begin() + static_cast<std::ptrdiff_t>(off + len) * k);
    const int xi = x.id;
    return make({len, k}, std::move(out), {x}, [xi, k, off, len](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      t.accumulate(xi, [&](std::vector<T>& gx) {
        for (std::size_t i = 0; i < g.size(); ++i)
          gx[static_cast<std::size_t>(off) * k + i] += g[i];
      });
    });
  }

  Value concat_rows(const std::vector<Value>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    const int k = cols(parts[0]);
    int total = 0;
    std::vector<int> ids, lens;
    for (Value p : parts) {
      if (cols(p) != k) throw std::invalid_argument("concat_rows: col mismatch");
      total += rows(p);
      ids.push_back(p.id);
      lens.push_back(rows(p));
    }
    std::vector<T> out;
    out.reserve(static_cast<std::size_t>(total) * k);
    for (Value p : parts) {
      const std::vector<T>& pd = data(p);
      out.insert(out.end(), pd.begin(), pd.end());
    }
    return make({total, k}, std::move(out), parts, [ids, lens, k](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      std::size_t off = 0;
      for (std::size_t pi = 0; pi < ids.size(); ++pi) {
        const std::size_t sz = static_cast<std::size_t>(lens[pi]) * k;
        const std::size_t o = off;
        t.accumulate(ids[pi], [&](std::vector<T>& gp) {
          for (std::size_t i = 0; i < sz; ++i) gp[i] += g[o + i];
        });
        off += sz;
      }
    });
  }

  // out[i] = table[ids[i]], the embedding lookup; backward scatter-adds.
  Value gather_rows(Value table, const std::vector<int>& ids) {
    const int v = rows(table), d = cols(table);
    for (int id : ids)
      if (id < 0 || id >= v)
        throw std::out_of_range("gather_rows: id " + std::to_string(id) +
                                " outside table of " + std::to_string(v) + " rows");
    std::vector<T> out(ids.size() * static_cast<std::size_t>(d));
    const std::vector<T>& td = data(table);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < d; ++j)
        out[i * d + j] = td[static_cast<std::size_t>(ids[i]) * d + j];
    const int ti = table.id;
    auto idx = std::make_shared<std::vector<int>>(ids);
    return make({static_cast<int>(ids.size()), d}, std::move(out), {table},
                [ti, d, idx](Tape& t, int self) {
                  const std::vector<T>& g = t.grad_buf(self);
                  t.accumulate(ti, [&](std::vector<T>& gt) {
                    for (std::size_t i = 0; i < idx->size(); ++i)
                      for (int j = 0; j < d; ++j)
                        gt[static_cast<std::size_t>((*idx)[i]) * d + j] += g[i * d + j];
                  });
                });
  }

  // --- reductions ---------------------------------------------------------------

  // Column-wise max over the given subset of rows -> [1 x d]. Ties resolve to
  // the first listed row, so backward is deterministic.
  Value max_rows(Value x, const std::vector<int>& idx) {
    const int n = rows(x), d = cols(x);
    if (idx.empty()) throw std::invalid_argument("max_rows: empty index set");
    for (int i : idx)
      if (i < 0 || i >= n) throw std::out_of_range("max_rows: row out of range");
    const std::vector<T>& xd = data(x);
    std::vector<T> out(static_cast<std::size_t>(d));
    auto arg = std::make_shared<std::vector<int>>(d);
    for (int j = 0; j < d; ++j) {
      int best = idx[0];
      T bv = xd[static_cast<std::size_t>(best) * d + j];
      for (std::size_t ii = 1; ii < idx.size(); ++ii) {
        const T v = xd[static_cast<std::size_t>(idx[ii]) * d + j];
        if (v > bv) { bv = v; best = idx[ii]; }
      }
      out[static_cast<std::size_t>(j)] = bv;
      (*arg)[static_cast<std::size_t>(j)] = best;
    }
    const int xi = x.id;
    return make({1, d}, std::move(out), {x}, [xi, d, arg](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      t.accumulate(xi, [&](std::vector<T>& gx) {
        for (int j = 0; j < d; ++j)
          gx[static_cast<std::size_t>((*arg)[j]) * d + j] += g[static_cast<std::size_t>(j)];
      });
    });
  }

  Value sum_rows(Value x) {
    const int n = rows(x), d = cols(x);
    const std::vector<T>& xd = data(x);
    std::vector<T> out(static_cast<std::size_t>(d), T(0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += xd[static_cast<std::size_t>(i) * d + j];
    const int xi = x.id;
    return make({1, d}, std::move(out), {x}, [xi, n, d](Tape& t, int self) {
      const std::vector<T>& g = t.grad_buf(self);
      t.accumulate(xi, [&](std::vector<T>& gx) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) gx[static_cast<std::size_t>(i) * d + j] += g[static_cast<std::size_t>(j)];
      });
    });
  }

  Value sum(Value x) {
    const std::vector<T>& xd = data(x);
    T s = T(0);
    for (T v : xd) s += v;
    const int xi = x.id;
    return make({1}, {s}, {x}, [xi](Tape& t, int self) {
      const T g = t.grad_buf(self)[0];
      t.accumulate(xi, [&](std::vector<T>& gx) { for (T& v : gx) v += g; });
    });
  }

  Value pick(Value x, std::int64_t flat_index) {
    const std::vector<T>& xd = data(x);
    if (flat_index < 0 || flat_index >= static_cast<std::int64_t>(xd.size()))
      throw std::out_of_range("pick: index " + std::to_string(flat_index));
    const int xi = x.id;
    const std::size_t fi = static_cast<std::size_t>(flat_index);
    return make({1}, {xd[fi]}, {x}, [xi, fi](Tape& t, int self) {
      const T g = t.grad_buf(self)[0];
      t.accumulate(xi, [&](std::vector<T>& gx) { gx[fi] += g; });
    });
  }

  // Applies fn to the parent's grad buffer iff the parent wants gradients.
  template <typename Fn>
  void accumulate(int parent_id, Fn&& fn) {
    Node& p = nodes_[static_cast<std::size_t>(parent_id)];
    if (!p.requires_grad) return;
    fn(p.grad);
  }

 private:
  std::vector<Node> nodes_;

  Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  int last_dim(Value v) const {
    const Shape& s = node(v.id).shape;
    return s.empty() ? 1 : s.back();
  }

  void check_same_shape(Value a, Value b, const char* op) const {
    if (node(a.id).shape != node(b.id).shape)
      throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                  shape_str(node(a.id).shape) + " vs " +
                                  shape_str(node(b.id).shape));
  }

  Value push(Shape shape, std::vector<T> data, bool rg,
             std::function<void(Tape&, int)> backward_fn) {
    Node n;
    n.shape = std::move(shape);
    n.data = std::move(data);
    n.requires_grad = rg;
    n.backward = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
  }

  Value make(Shape shape, std::vector<T> data, const std::vector<Value>& parents,
             std::function<void(Tape&, int)> backward_fn) {
    bool rg = false;
    for (Value p : parents) rg = rg || node(p.id).requires_grad;
    return push(std::move(shape), std::move(data), rg, rg ? std::move(backward_fn) : nullptr);
  }
};

// Row validity of an additive mask: true where the row has at least one
// unmasked (zero) entry.
template <typename T>
std::vector<bool> mask_row_validity(const Tensor<T>& mask) {
  const int n = mask.rows(), c = mask.cols();
  const T cut = static_cast<T>(kNegInf / 2);
  std::vector<bool> valid(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      if (mask.at(i, j) > cut) { valid[static_cast<std::size_t>(i)] = true; break; }
  return valid;
}

}  // namespace numkit
