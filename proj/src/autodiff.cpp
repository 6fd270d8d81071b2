#include "hgx/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hgx/error.hpp"

namespace hgx::ad {

Parameter& ParameterSet::add(std::string name, Matrix value) {
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Matrix(value.rows(), value.cols());
  p->value = std::move(value);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterSet::find(std::string_view name) noexcept {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterSet::find(std::string_view name) const noexcept {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad_view(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, {}); }

Var Tape::leaf(Matrix value) { return push(std::move(value), true, {}); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, true, {});
  nodes_[v.id()].bound = &p;
  return v;
}

Var Tape::push(Matrix value, bool requires_grad, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var output) {
  if (output.rows() != 1 || output.cols() != 1) {
    fail(ErrorKind::NonScalarOutput, "backward needs a 1x1 output, got " + std::to_string(output.rows()) + "x" +
                                         std::to_string(output.cols()));
  }
  if (!requires_grad(output.id())) return;
  grad(output.id())(0, 0) = 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this);
    if (n.bound) {
      auto& dst = n.bound->grad.data();
      const auto& src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::ShapeMismatch, what);
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

/// Elementwise op: fwd(x) gives the value, deriv(x, y) the local derivative.
template <typename Forward, typename Derivative>
Var elementwise(Var a, Forward fwd, Derivative deriv) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = fwd(x.data()[i]);
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self, deriv](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    Matrix& d = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] += g.data()[i] * deriv(x.data()[i], y.data()[i]);
  });
}

}  // namespace

Var relu(Var a) {
  return elementwise(
      a, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return elementwise(
      a, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return elementwise(
      a, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

Var elu(Var a, double alpha) {
  return elementwise(
      a, [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double) { return v > 0.0 ? 1.0 : alpha * std::exp(v); });
}

Var leaky_relu(Var a, double slope) {
  return elementwise(
      a, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var power(Var a, double p) {
  if (std::floor(p) != p) {
    for (double v : a.value().data()) {
      if (v < 0.0) {
        fail(ErrorKind::NegativeBase,
             "non-integer power " + std::to_string(p) + " of negative value " + std::to_string(v));
      }
    }
  }
  return elementwise(
      a, [p](double v) { return std::pow(v, p); }, [p](double v, double) { return p * std::pow(v, p - 1.0); });
}

Var matmul(Var a, Var b) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  const Matrix& w = b.value();
  require(x.cols() == w.rows(), "matmul " + shape(x) + " by " + shape(w));
  Matrix y = hgx::matmul(x, w);
  const std::size_t ia = a.id(), ib = b.id(), self = t.size();
  const bool need = a.requires_grad() || b.requires_grad();
  return t.push(std::move(y), need, [ia, ib, self](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    const Matrix& x = tp.value(ia);
    const Matrix& w = tp.value(ib);
    if (tp.requires_grad(ia)) {
      // dA += G W^T
      Matrix& ga = tp.grad(ia);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        auto gi = g.row(i);
        auto dst = ga.row(i);
        for (std::size_t k = 0; k < w.rows(); ++k) {
          auto wk = w.row(k);
          double s = 0.0;
          for (std::size_t j = 0; j < gi.size(); ++j) s += gi[j] * wk[j];
          dst[k] += s;
        }
      }
    }
    if (tp.requires_grad(ib)) {
      // dB += A^T G, skipping zero entries of A (sparse bag-of-words inputs).
      Matrix& gb = tp.grad(ib);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        auto gi = g.row(i);
        for (std::size_t k = 0; k < x.cols(); ++k) {
          const double s = x(i, k);
          if (s == 0.0) continue;
          auto dst = gb.row(k);
          for (std::size_t j = 0; j < gi.size(); ++j) dst[j] += s * gi[j];
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = a.tape();
  require(a.value().same_shape(b.value()), "add " + shape(a.value()) + " and " + shape(b.value()));
  Matrix y = a.value() + b.value();
  const std::size_t ia = a.id(), ib = b.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib, self](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    for (std::size_t id : {ia, ib}) {
      if (!tp.requires_grad(id)) continue;
      Matrix& d = tp.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] += g.data()[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = a.tape();
  require(a.value().same_shape(b.value()), "sub " + shape(a.value()) + " and " + shape(b.value()));
  Matrix y = a.value() - b.value();
  const std::size_t ia = a.id(), ib = b.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib, self](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    if (tp.requires_grad(ia)) {
      Matrix& d = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] += g.data()[i];
    }
    if (tp.requires_grad(ib)) {
      Matrix& d = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] -= g.data()[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = a.tape();
  require(a.value().same_shape(b.value()), "mul " + shape(a.value()) + " and " + shape(b.value()));
  Matrix y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= b.value().data()[i];
  const std::size_t ia = a.id(), ib = b.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib, self](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    if (tp.requires_grad(ia)) {
      Matrix& d = tp.grad(ia);
      const Matrix& other = tp.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] += g.data()[i] * other.data()[i];
    }
    if (tp.requires_grad(ib)) {
      Matrix& d = tp.grad(ib);
      const Matrix& other = tp.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] += g.data()[i] * other.data()[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = a.tape();
  Matrix y = s * a.value();
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self, s](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    Matrix& d = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] += s * g.data()[i];
  });
}

Var add_row(Var a, Var row) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  const Matrix& r = row.value();
  require(r.rows() == 1 && r.cols() == x.cols(), "add_row " + shape(x) + " with " + shape(r));
  Matrix y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto yi = y.row(i);
    for (std::size_t j = 0; j < yi.size(); ++j) yi[j] += r(0, j);
  }
  const std::size_t ia = a.id(), ir = row.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad() || row.requires_grad(), [ia, ir, self](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    if (tp.requires_grad(ia)) {
      Matrix& d = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] += g.data()[i];
    }
    if (tp.requires_grad(ir)) {
      Matrix& d = tp.grad(ir);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        auto gi = g.row(i);
        for (std::size_t j = 0; j < gi.size(); ++j) d(0, j) += gi[j];
      }
    }
  });
}

Var scale_rows(Var a, std::span<const double> weights) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  require(weights.size() == x.rows(), "scale_rows: " + std::to_string(weights.size()) + " weights for " + shape(x));
  Matrix y = x;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (double& v : y.row(i)) v *= weights[i];
  std::vector<double> w(weights.begin(), weights.end());
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self, w = std::move(w)](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    Matrix& d = tp.grad(ia);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto gi = g.row(i);
      auto di = d.row(i);
      for (std::size_t j = 0; j < gi.size(); ++j) di[j] += w[i] * gi[j];
    }
  });
}

Var mul_col(Var a, Var col) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  const Matrix& w = col.value();
  require(w.cols() == 1 && w.rows() == x.rows(), "mul_col " + shape(x) + " by " + shape(w));
  Matrix y = x;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (double& v : y.row(i)) v *= w(i, 0);
  const std::size_t ia = a.id(), ic = col.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad() || col.requires_grad(), [ia, ic, self](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    const Matrix& x = tp.value(ia);
    const Matrix& w = tp.value(ic);
    if (tp.requires_grad(ia)) {
      Matrix& d = tp.grad(ia);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) d(i, j) += w(i, 0) * g(i, j);
    }
    if (tp.requires_grad(ic)) {
      Matrix& d = tp.grad(ic);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) s += x(i, j) * g(i, j);
        d(i, 0) += s;
      }
    }
  });
}

Var transpose(Var a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id(), self = t.size();
  return t.push(a.value().transposed(), a.requires_grad(), [ia, self](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    Matrix& d = tp.grad(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) d(j, i) += g(i, j);
  });
}

Var row_softmax(Var a) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    auto yi = y.row(i);
    if (xi.empty()) continue;
    const double m = *std::max_element(xi.begin(), xi.end());
    double z = 0.0;
    for (std::size_t j = 0; j < xi.size(); ++j) {
      yi[j] = std::exp(xi[j] - m);
      z += yi[j];
    }
    for (double& v : yi) v /= z;
  }
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    const Matrix& y = tp.value(self);
    Matrix& d = tp.grad(ia);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto gi = g.row(i);
      auto yi = y.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < gi.size(); ++j) dot += gi[j] * yi[j];
      auto di = d.row(i);
      for (std::size_t j = 0; j < gi.size(); ++j) di[j] += yi[j] * (gi[j] - dot);
    }
  });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  const std::size_t c = x.cols();
  require(gain.rows() == 1 && gain.cols() == c && bias.rows() == 1 && bias.cols() == c,
          "layer_norm affine parameters must be 1x" + std::to_string(c));
  Matrix normalized(x.rows(), c);
  std::vector<double> inv_std(x.rows());
  Matrix y(x.rows(), c);
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    double mean = 0.0;
    for (double v : xi) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : xi) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      normalized(i, j) = (xi[j] - mean) * inv_std[i];
      y(i, j) = normalized(i, j) * gv(0, j) + bv(0, j);
    }
  }
  const std::size_t ia = a.id(), ig = gain.id(), ib = bias.id(), self = t.size();
  const bool need = a.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return t.push(std::move(y), need,
                [ia, ig, ib, self, normalized = std::move(normalized), inv_std = std::move(inv_std)](Tape& tp) {
                  const Matrix& g = tp.grad_view(self);
                  const Matrix& gv = tp.value(ig);
                  const std::size_t c = g.cols();
                  if (tp.requires_grad(ig)) {
                    Matrix& d = tp.grad(ig);
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t j = 0; j < c; ++j) d(0, j) += g(i, j) * normalized(i, j);
                  }
                  if (tp.requires_grad(ib)) {
                    Matrix& d = tp.grad(ib);
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t j = 0; j < c; ++j) d(0, j) += g(i, j);
                  }
                  if (tp.requires_grad(ia)) {
                    Matrix& d = tp.grad(ia);
                    const double inv_c = 1.0 / static_cast<double>(c);
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      double sum_gh = 0.0, sum_gh_n = 0.0;
                      for (std::size_t j = 0; j < c; ++j) {
                        const double gh = g(i, j) * gv(0, j);
                        sum_gh += gh;
                        sum_gh_n += gh * normalized(i, j);
                      }
                      for (std::size_t j = 0; j < c; ++j) {
                        const double gh = g(i, j) * gv(0, j);
                        d(i, j) += inv_std[i] * (gh - inv_c * sum_gh - normalized(i, j) * inv_c * sum_gh_n);
                      }
                    }
                  }
                });
}

Var row_l2_normalize(Var a) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  std::vector<double> norms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) fail(ErrorKind::ZeroNormRow, "row " + std::to_string(i) + " has zero norm");
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = x(i, j) / norms[i];
  }
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self, norms = std::move(norms)](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    const Matrix& y = tp.value(self);
    Matrix& d = tp.grad(ia);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) d(i, j) += (g(i, j) - y(i, j) * dot) / norms[i];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  Tape& t = parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool need = false;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols row counts differ");
    cols += p.cols();
    need = need || p.requires_grad();
  }
  Matrix y(rows, cols);
  std::vector<std::pair<std::size_t, std::size_t>> layout;  // (id, column offset)
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) y(i, offset + j) = v(i, j);
    layout.emplace_back(p.id(), offset);
    offset += v.cols();
  }
  const std::size_t self = t.size();
  return t.push(std::move(y), need, [self, layout = std::move(layout)](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    for (const auto& [id, off] : layout) {
      if (!tp.requires_grad(id)) continue;
      Matrix& d = tp.grad(id);
      for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) += g(i, off + j);
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  require(begin <= end && end <= x.cols(), "slice_cols out of range");
  Matrix y(x.rows(), end - begin);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) y(i, j - begin) = x(i, j);
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self, begin](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    Matrix& d = tp.grad(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) d(i, begin + j) += g(i, j);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> index) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  Matrix y(index.size(), x.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    require(index[k] < x.rows(), "gather_rows index out of range");
    auto src = x.row(index[k]);
    std::copy(src.begin(), src.end(), y.row(k).begin());
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self, idx = std::move(idx)](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    Matrix& d = tp.grad(ia);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto gk = g.row(k);
      auto dst = d.row(idx[k]);
      for (std::size_t j = 0; j < gk.size(); ++j) dst[j] += gk[j];
    }
  });
}

namespace {

void check_segments(const Matrix& x, std::span<const std::size_t> segment, std::size_t segments) {
  require(segment.size() == x.rows(), "segment ids (" + std::to_string(segment.size()) + ") do not match rows of " +
                                          shape(x));
  for (std::size_t s : segment) require(s < segments, "segment id out of range");
}

}  // namespace

Var segment_sum(Var a, std::span<const std::size_t> segment, std::size_t segments) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  check_segments(x, segment, segments);
  Matrix y(segments, x.cols());
  for (std::size_t k = 0; k < x.rows(); ++k) {
    auto src = x.row(k);
    auto dst = y.row(segment[k]);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self, seg = std::move(seg)](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    Matrix& d = tp.grad(ia);
    for (std::size_t k = 0; k < seg.size(); ++k) {
      auto gs = g.row(seg[k]);
      auto dst = d.row(k);
      for (std::size_t j = 0; j < gs.size(); ++j) dst[j] += gs[j];
    }
  });
}

Var segment_prod(Var a, std::span<const std::size_t> segment, std::size_t segments) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  check_segments(x, segment, segments);
  Matrix y(segments, x.cols(), 1.0);
  for (std::size_t k = 0; k < x.rows(); ++k) {
    auto src = x.row(k);
    auto dst = y.row(segment[k]);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] *= src[j];
  }
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self, seg = std::move(seg), segments](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    const Matrix& x = tp.value(ia);
    Matrix& d = tp.grad(ia);
    // Product of the other members via prefix/suffix products; exact with zeros present.
    std::vector<std::vector<std::size_t>> members(segments);
    for (std::size_t k = 0; k < seg.size(); ++k) members[seg[k]].push_back(k);
    std::vector<double> prefix, suffix;
    for (std::size_t s = 0; s < segments; ++s) {
      const auto& rows = members[s];
      const std::size_t m = rows.size();
      if (m == 0) continue;
      prefix.assign(m + 1, 1.0);
      suffix.assign(m + 1, 1.0);
      for (std::size_t j = 0; j < x.cols(); ++j) {
        for (std::size_t i = 0; i < m; ++i) prefix[i + 1] = prefix[i] * x(rows[i], j);
        for (std::size_t i = m; i > 0; --i) suffix[i - 1] = suffix[i] * x(rows[i - 1], j);
        for (std::size_t i = 0; i < m; ++i) d(rows[i], j) += g(s, j) * prefix[i] * suffix[i + 1];
      }
    }
  });
}

Var segment_softmax(Var a, std::span<const std::size_t> segment, std::size_t segments) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  check_segments(x, segment, segments);
  const std::size_t c = x.cols();
  Matrix mx(segments, c, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < x.rows(); ++k)
    for (std::size_t j = 0; j < c; ++j) mx(segment[k], j) = std::max(mx(segment[k], j), x(k, j));
  Matrix y(x.rows(), c);
  Matrix z(segments, c);
  for (std::size_t k = 0; k < x.rows(); ++k)
    for (std::size_t j = 0; j < c; ++j) {
      y(k, j) = std::exp(x(k, j) - mx(segment[k], j));
      z(segment[k], j) += y(k, j);
    }
  for (std::size_t k = 0; k < x.rows(); ++k)
    for (std::size_t j = 0; j < c; ++j) y(k, j) /= z(segment[k], j);
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self, seg = std::move(seg), segments](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    const Matrix& y = tp.value(self);
    Matrix& d = tp.grad(ia);
    Matrix dot(segments, g.cols());
    for (std::size_t k = 0; k < seg.size(); ++k)
      for (std::size_t j = 0; j < g.cols(); ++j) dot(seg[k], j) += g(k, j) * y(k, j);
    for (std::size_t k = 0; k < seg.size(); ++k)
      for (std::size_t j = 0; j < g.cols(); ++j) d(k, j) += y(k, j) * (g(k, j) - dot(seg[k], j));
  });
}

Var dropout(Var a, double rate) {
  if (!a.tape().training() || rate <= 0.0) return a;
  Tape& t = a.tape();
  Rng* rng = t.rng();
  if (rng == nullptr) fail(ErrorKind::InvalidConfig, "dropout in training mode needs an rng on the tape");
  const Matrix& x = a.value();
  std::vector<double> mask(x.size());
  const double keep = 1.0 - rate;
  for (double& m : mask) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
  Matrix y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] *= mask[i];
  const std::size_t ia = a.id(), self = t.size();
  return t.push(std::move(y), a.requires_grad(), [ia, self, mask = std::move(mask)](Tape& tp) {
    const Matrix& g = tp.grad_view(self);
    Matrix& d = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d.data()[i] += g.data()[i] * mask[i];
  });
}

Var sum_all(Var a) {
  Tape& t = a.tape();
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id(), self = t.size();
  return t.push(Matrix(1, 1, s), a.requires_grad(), [ia, self](Tape& tp) {
    const double g = tp.grad_view(self)(0, 0);
    Matrix& d = tp.grad(ia);
    for (double& v : d.data()) v += g;
  });
}

Var cross_entropy(Var logits, std::span<const int> labels, std::span<const std::size_t> mask) {
  if (mask.empty()) fail(ErrorKind::EmptyMask, "cross_entropy over an empty mask");
  Tape& t = logits.tape();
  const Matrix& x = logits.value();
  require(labels.size() == x.rows(), "cross_entropy: labels do not match logits rows");
  const std::size_t c = x.cols();
  Matrix probs(mask.size(), c);
  double loss = 0.0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const std::size_t r = mask[k];
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      fail(ErrorKind::LabelOutOfRange, "label " + std::to_string(label) + " outside [0, " + std::to_string(c) + ")");
    }
    auto xr = x.row(r);
    const double m = *std::max_element(xr.begin(), xr.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs(k, j) = std::exp(xr[j] - m);
      z += probs(k, j);
    }
    for (std::size_t j = 0; j < c; ++j) probs(k, j) /= z;
    loss -= (xr[label] - m) - std::log(z);
  }
  loss /= static_cast<double>(mask.size());
  std::vector<std::size_t> rows(mask.begin(), mask.end());
  std::vector<int> picked;
  picked.reserve(mask.size());
  for (std::size_t r : mask) picked.push_back(labels[r]);
  const std::size_t ia = logits.id(), self = t.size();
  return t.push(Matrix(1, 1, loss), logits.requires_grad(),
                [ia, self, rows = std::move(rows), picked = std::move(picked), probs = std::move(probs)](Tape& tp) {
                  const double g = tp.grad_view(self)(0, 0) / static_cast<double>(rows.size());
                  Matrix& d = tp.grad(ia);
                  for (std::size_t k = 0; k < rows.size(); ++k) {
                    for (std::size_t j = 0; j < probs.cols(); ++j) d(rows[k], j) += g * probs(k, j);
                    d(rows[k], static_cast<std::size_t>(picked[k])) -= g;
                  }
                });
}

Var mse(Var prediction, const Matrix& target) {
  Tape& t = prediction.tape();
  const Matrix& x = prediction.value();
  require(x.same_shape(target), "mse " + shape(x) + " vs target " + shape(target));
  if (x.empty()) fail(ErrorKind::EmptyMask, "mse of an empty prediction");
  double s = 0.0;
  Matrix diff = x - target;
  for (double v : diff.data()) s += v * v;
  const double n = static_cast<double>(x.size());
  const std::size_t ia = prediction.id(), self = t.size();
  return t.push(Matrix(1, 1, s / n), prediction.requires_grad(), [ia, self, n, diff = std::move(diff)](Tape& tp) {
    const double g = tp.grad_view(self)(0, 0);
    Matrix& d = tp.grad(ia);
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += g * 2.0 * diff.data()[i] / n;
  });
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(ParameterSet& params, const std::function<Var(Tape&)>& build, double h) {
  GradCheckReport report;
  params.zero_grad();
  {
    Tape tape;
    Var out = build(tape);
    if (out.rows() != 1 || out.cols() != 1) {
      fail(ErrorKind::NonScalarOutput, "grad_check needs a scalar computation, got " + shape(out.value()));
    }
    tape.backward(out);
  }
  auto evaluate = [&]() {
    Tape tape;
    return build(tape).value()(0, 0);
  };
  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter& param = params[p];
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      double& w = param.value.data()[i];
      const double saved = w;
      w = saved + h;
      const double plus = evaluate();
      w = saved - h;
      const double minus = evaluate();
      w = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = param.grad.data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.worst_parameter.empty()) {
        report.max_rel_error = rel;
        report.worst_parameter = param.name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace hgx::ad
