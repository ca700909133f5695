#include "mods/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace mods {

namespace {

Tensor as_matrix(const Tensor& t) {
  if (t.rank() == 2) return t;
  return t.reshaped({t.rows(), t.cols()});
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// out[m×n] += a[m×k] · b[k×n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

// out[m×n] += a[m×k] · b[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      out[i * n + j] += acc;
    }
  }
}

// out[k×n] += a[m×k]ᵀ · b[m×n]
void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* br = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* o = out + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

}  // namespace

Var Tape::add_node(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericalError("constant contains non-finite values");
  Node n;
  n.value = std::move(value);
  return add_node(std::move(n));
}

Var Tape::leaf(Tensor value) {
  if (!value.all_finite()) throw NumericalError("leaf contains non-finite values");
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return add_node(std::move(n));
}

Var Tape::param(const Parameter& p) {
  if (auto it = params_.find(&p); it != params_.end()) return Var(this, it->second);
  if (!p.value.all_finite()) throw NumericalError("parameter " + p.name + " contains non-finite values");
  Node n;
  n.value = p.value;
  n.needs_grad = true;
  Var v = add_node(std::move(n));
  params_.emplace(&p, v.id());
  return v;
}

Var Tape::push(const char* name, Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  return push(name, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::push(const char* name, Tensor value, std::span<const Var> inputs, Backward fn) {
  if (!value.all_finite()) throw NumericalError(std::string(name) + " produced non-finite values");
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) {
    if (nodes_[in.id()].needs_grad) {
      n.needs_grad = true;
      break;
    }
  }
  if (n.needs_grad) n.backward = std::move(fn);
  return add_node(std::move(n));
}

Tensor& Tape::grad_mut(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var out) {
  Node& root = nodes_[out.id()];
  if (root.value.size() != 1) {
    throw DimensionError("backward requires a scalar output, got " + shape_string(root.value.shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_mut(out)[0] = 1.0;
  for (std::size_t i = out.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad, n.value);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

Tensor Tape::param_grad(const Parameter& p) const {
  auto it = params_.find(&p);
  if (it == params_.end()) return Tensor(p.value.shape(), 0.0);
  return grad(Var(const_cast<Tape*>(this), it->second));
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (k != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  Tensor out({m, n});
  gemm_nn(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  return a.tape().push("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g, const Tensor&) {
    if (t.needs_grad(a)) gemm_nt(g.values().data(), t.value(b).values().data(), t.grad_mut(a).values().data(), m, n, k);
    if (t.needs_grad(b)) gemm_tn(t.value(a).values().data(), g.values().data(), t.grad_mut(b).values().data(), m, k, n);
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (k != bv.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()) + "^T");
  }
  Tensor out({m, n});
  gemm_nt(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  return a.tape().push("matmul_nt", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g, const Tensor&) {
    // da = g · b, db = gᵀ · a
    if (t.needs_grad(a)) gemm_nn(g.values().data(), t.value(b).values().data(), t.grad_mut(a).values().data(), m, n, k);
    if (t.needs_grad(b)) gemm_tn(g.values().data(), t.value(a).values().data(), t.grad_mut(b).values().data(), m, n, k);
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = av[i * n + j];
  return a.tape().push("transpose", std::move(out), {a}, [a, m, n](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g(j, i);
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor out = as_matrix(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().push("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    for (Var v : {a, b}) {
      if (!t.needs_grad(v)) continue;
      Tensor& gv = t.grad_mut(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  Tensor out = as_matrix(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().push("sub", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_mut(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_mut(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  Tensor out = as_matrix(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().push("mul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g, const Tensor&) {
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_mut(a);
      const auto& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_mut(b);
      const auto& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = as_matrix(a.value());
  for (double& v : out.storage()) v *= c;
  return a.tape().push("scale", std::move(out), {a}, [a, c](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var mul_scalar(Var x, Var s) {
  if (s.value().size() != 1) throw DimensionError("mul_scalar: scale must be 1x1, got " + shape_string(s.value().shape()));
  const double c = s.value()[0];
  Tensor out = as_matrix(x.value());
  for (double& v : out.storage()) v *= c;
  return x.tape().push("mul_scalar", std::move(out), {x, s}, [x, s](Tape& t, const Tensor& g, const Tensor&) {
    const double c = t.value(s)[0];
    if (t.needs_grad(x)) {
      Tensor& gx = t.grad_mut(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    }
    if (t.needs_grad(s)) {
      const auto& xv = t.value(x);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
      t.grad_mut(s)[0] += acc;
    }
  });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (bv.size() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match " + shape_string(xv.shape()));
  }
  Tensor out = as_matrix(xv);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += bv[j];
  return x.tape().push("add_bias", std::move(out), {x, bias}, [x, bias, m, n](Tape& t, const Tensor& g, const Tensor&) {
    if (t.needs_grad(x)) {
      Tensor& gx = t.grad_mut(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.needs_grad(bias)) {
      Tensor& gb = t.grad_mut(bias);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g(i, j);
    }
  });
}

Var relu(Var x) {
  Tensor out = as_matrix(x.value());
  for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return x.tape().push("relu", std::move(out), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    const auto& xv = t.value(x);
    Tensor& gx = t.grad_mut(x);
    // Subgradient at 0 is 0.
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

Var tanh(Var x) {
  Tensor out = as_matrix(x.value());
  for (double& v : out.storage()) v = std::tanh(v);
  return x.tape().push("tanh", std::move(out), {x}, [x](Tape& t, const Tensor& g, const Tensor& y) {
    Tensor& gx = t.grad_mut(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var abs(Var x) {
  Tensor out = as_matrix(x.value());
  for (double& v : out.storage()) v = std::fabs(v);
  return x.tape().push("abs", std::move(out), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    const auto& xv = t.value(x);
    Tensor& gx = t.grad_mut(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
      else if (xv[i] < 0.0) gx[i] -= g[i];
    }
  });
}

Var pow(Var x, double p) {
  Tensor out = as_matrix(x.value());
  for (double& v : out.storage()) {
    if (!(v > 0.0)) throw NumericalError("pow: non-positive base");
    v = std::pow(v, p);
  }
  return x.tape().push("pow", std::move(out), {x}, [x, p](Tape& t, const Tensor& g, const Tensor&) {
    const auto& xv = t.value(x);
    Tensor& gx = t.grad_mut(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * p * std::pow(xv[i], p - 1.0);
  });
}

Var softmax_rows(Var x) {
  Tensor out = as_matrix(x.value());
  const std::size_t m = out.rows(), n = out.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* r = &out(i, 0);
    const double mx = *std::max_element(r, r + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      r[j] = std::exp(r[j] - mx);
      z += r[j];
    }
    for (std::size_t j = 0; j < n; ++j) r[j] /= z;
  }
  return x.tape().push("softmax_rows", std::move(out), {x}, [x, m, n](Tape& t, const Tensor& g, const Tensor& y) {
    Tensor& gx = t.grad_mut(x);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y[i * n + j] * g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm: gain/bias width does not match " + shape_string(xv.shape()));
  }
  if (!(eps > 0.0)) throw DimensionError("layer_norm: eps must be positive");
  Tensor out({m, n});
  // normalised values and inverse std, kept for backward
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = xv.values().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += r[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (r[j] - mu) * is;
      (*xhat)[i * n + j] = h;
      out(i, j) = gv[j] * h + bv[j];
    }
  }
  return x.tape().push("layer_norm", std::move(out), {x, gain, bias},
                       [x, gain, bias, xhat, inv_std, m, n](Tape& t, const Tensor& g, const Tensor&) {
    const auto& gv = t.value(gain);
    if (t.needs_grad(gain)) {
      Tensor& gg = t.grad_mut(gain);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * (*xhat)[i * n + j];
    }
    if (t.needs_grad(bias)) {
      Tensor& gb = t.grad_mut(bias);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
    if (t.needs_grad(x)) {
      Tensor& gx = t.grad_mut(x);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = g[i * n + j] * gv[j];
          s1 += dh;
          s2 += dh * (*xhat)[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = g[i * n + j] * gv[j];
          gx[i * n + j] += (*inv_std)[i] * (dh - s1 * inv_n - (*xhat)[i * n + j] * s2 * inv_n);
        }
      }
    }
  });
}

Var l2_normalize_rows(Var x, double eps) {
  Tensor out = as_matrix(x.value());
  const std::size_t m = out.rows(), n = out.cols();
  auto norms = std::make_shared<std::vector<double>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += out(i, j) * out(i, j);
    const double nrm = std::sqrt(s);
    (*norms)[i] = nrm;
    const double d = std::max(nrm, eps);
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= d;
  }
  return x.tape().push("l2_normalize_rows", std::move(out), {x}, [x, norms, eps, m, n](Tape& t, const Tensor& g, const Tensor&) {
    const auto& xv = t.value(x);
    Tensor& gx = t.grad_mut(x);
    for (std::size_t i = 0; i < m; ++i) {
      const double nrm = (*norms)[i];
      if (nrm <= eps) {
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] / eps;
        continue;
      }
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += xv[i * n + j] * g[i * n + j];
      const double inv = 1.0 / nrm;
      for (std::size_t j = 0; j < n; ++j) {
        const double y = xv[i * n + j] * inv;
        gx[i * n + j] += inv * (g[i * n + j] - y * dot * inv);
      }
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().push("sum", Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_mut(x);
    for (double& v : gx.storage()) v += g[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var row_sums(Var x) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out({m, 1});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += xv[i * n + j];
  return x.tape().push("row_sums", std::move(out), {x}, [x, m, n](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_mut(x);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (Var p : parts) {
    if (p.cols() != n) throw DimensionError("concat_rows: column mismatch");
    m += p.rows();
  }
  Tensor out({m, n});
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& v = p.value();
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts[0].tape().push("concat_rows", std::move(out), parts, [ins](Tape& t, const Tensor& g, const Tensor&) {
    std::size_t off = 0;
    for (Var p : ins) {
      const std::size_t sz = t.value(p).size();
      if (t.needs_grad(p)) {
        Tensor& gp = t.grad_mut(p);
        for (std::size_t i = 0; i < sz; ++i) gp[i] += g[off + i];
      }
      off += sz;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (Var p : parts) {
    if (p.rows() != m) throw DimensionError("concat_cols: row mismatch");
    n += p.cols();
  }
  Tensor out({m, n});
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& v = p.value();
    const std::size_t c = v.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) out(i, off + j) = v[i * c + j];
    off += c;
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts[0].tape().push("concat_cols", std::move(out), parts, [ins, m, n](Tape& t, const Tensor& g, const Tensor&) {
    std::size_t off = 0;
    for (Var p : ins) {
      const std::size_t c = t.value(p).cols();
      if (t.needs_grad(p)) {
        Tensor& gp = t.grad_mut(p);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * n + off + j];
      }
      off += c;
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols();
  if (count == 0 || begin + count > xv.rows()) throw DimensionError("slice_rows: range out of bounds");
  Tensor out({count, n});
  std::copy_n(xv.values().begin() + static_cast<std::ptrdiff_t>(begin * n), count * n, out.values().begin());
  return x.tape().push("slice_rows", std::move(out), {x}, [x, begin, n](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_mut(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (count == 0 || begin + count > n) throw DimensionError("slice_cols: range out of bounds");
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = xv[i * n + begin + j];
  return x.tape().push("slice_cols", std::move(out), {x}, [x, begin, count, m, n](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_mut(x);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += g[i * count + j];
  });
}

Var element(Var x, std::size_t r, std::size_t c) {
  const Tensor& xv = x.value();
  if (r >= xv.rows() || c >= xv.cols()) throw DimensionError("element: index out of bounds");
  const std::size_t idx = r * xv.cols() + c;
  return x.tape().push("element", Tensor::scalar(xv[idx]), {x}, [x, idx](Tape& t, const Tensor& g, const Tensor&) {
    t.grad_mut(x)[idx] += g[0];
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  Tensor out = x.value().reshaped({rows, cols});
  return x.tape().push("reshape", std::move(out), {x}, [x](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_mut(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

}  // namespace mods
