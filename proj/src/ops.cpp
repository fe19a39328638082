#include "densitydist/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>

namespace densitydist::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap view(const Tensor& t) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MutMap view(Tensor& t) {
  return MutMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

Graph& same_graph(Var a, Var b, const char* op) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument(std::string(op) + ": operands from different graphs");
  return a.graph();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                              " and " + shape_string(b.shape()));
}

void check_matrix(const char* op, const Tensor& t) { require_matrix(t, op); }

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_matrix("matmul", av);
  check_matrix("matmul", bv);
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  view(out).noalias() = view(av) * view(bv);
  const auto ia = a.id(), ib = b.id();
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    if (gr.requires_grad(ia)) view(gr.grad_buffer(ia)).noalias() += view(dy) * view(gr.value(ib)).transpose();
    if (gr.requires_grad(ib)) view(gr.grad_buffer(ib)).noalias() += view(gr.value(ia)).transpose() * view(dy);
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = same_graph(a, b, "matmul_nt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_matrix("matmul_nt", av);
  check_matrix("matmul_nt", bv);
  if (av.cols() != bv.cols()) shape_error("matmul_nt", av, bv);
  Tensor out = Tensor::matrix(av.rows(), bv.rows());
  view(out).noalias() = view(av) * view(bv).transpose();
  const auto ia = a.id(), ib = b.id();
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    if (gr.requires_grad(ia)) view(gr.grad_buffer(ia)).noalias() += view(dy) * view(gr.value(ib));
    if (gr.requires_grad(ib)) view(gr.grad_buffer(ib)).noalias() += view(dy).transpose() * view(gr.value(ia));
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  check_matrix("transpose", av);
  Tensor out = av.transposed();
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    view(gr.grad_buffer(ia)) += view(gr.grad(self)).transpose();
  });
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Tensor out = av;
  out.axpy(1.0, bv);
  const auto ia = a.id(), ib = b.id();
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).axpy(1.0, dy);
    if (gr.requires_grad(ib)) gr.grad_buffer(ib).axpy(1.0, dy);
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b, "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("sub", av, bv);
  Tensor out = av;
  out.axpy(-1.0, bv);
  const auto ia = a.id(), ib = b.id();
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).axpy(1.0, dy);
    if (gr.requires_grad(ib)) gr.grad_buffer(ib).axpy(-1.0, dy);
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    if (gr.requires_grad(ia)) {
      Tensor& da = gr.grad_buffer(ia);
      const Tensor& bv = gr.value(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (gr.requires_grad(ib)) {
      Tensor& db = gr.grad_buffer(ib);
      const Tensor& av = gr.value(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, factor](Graph& gr, std::size_t self) {
    gr.grad_buffer(ia).axpy(factor, gr.grad(self));
  });
}

Var add_row(Var a, Var row) {
  Graph& g = same_graph(a, row, "add_row");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  check_matrix("add_row", av);
  check_matrix("add_row", rv);
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_error("add_row", av, rv);
  Tensor out = av;
  view(out).rowwise() += view(rv).row(0);
  const auto ia = a.id(), ir = row.id();
  return g.record(std::move(out), {ia, ir}, [ia, ir](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).axpy(1.0, dy);
    if (gr.requires_grad(ir)) view(gr.grad_buffer(ir)).row(0) += view(dy).colwise().sum();
  });
}

namespace {

// Softmax along contiguous runs of `len` values separated by `stride`.
void softmax_lines(Tensor& t, std::size_t lines, std::size_t len, std::size_t line_step,
                   std::size_t elem_step) {
  for (std::size_t l = 0; l < lines; ++l) {
    double* base = t.data() + l * line_step;
    double mx = base[0];
    for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, base[k * elem_step]);
    double total = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      double e = std::exp(base[k * elem_step] - mx);
      base[k * elem_step] = e;
      total += e;
    }
    for (std::size_t k = 0; k < len; ++k) base[k * elem_step] /= total;
  }
}

void softmax_lines_backward(const Tensor& y, const Tensor& dy, Tensor& dx, std::size_t lines,
                            std::size_t len, std::size_t line_step, std::size_t elem_step) {
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = l * line_step;
    double dot = 0.0;
    for (std::size_t k = 0; k < len; ++k) dot += dy[base + k * elem_step] * y[base + k * elem_step];
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t i = base + k * elem_step;
      dx[i] += y[i] * (dy[i] - dot);
    }
  }
}

}  // namespace

Var softmax_rows(Var a) {
  Tensor out = a.value();
  check_matrix("softmax_rows", out);
  const std::size_t r = out.rows(), c = out.cols();
  softmax_lines(out, r, c, c, 1);
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, r, c](Graph& gr, std::size_t self) {
    softmax_lines_backward(gr.value(self), gr.grad(self), gr.grad_buffer(ia), r, c, c, 1);
  });
}

Var softmax_cols(Var a) {
  Tensor out = a.value();
  check_matrix("softmax_cols", out);
  const std::size_t r = out.rows(), c = out.cols();
  softmax_lines(out, c, r, 1, c);
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, r, c](Graph& gr, std::size_t self) {
    softmax_lines_backward(gr.value(self), gr.grad(self), gr.grad_buffer(ia), c, r, 1, c);
  });
}

Var layer_norm_rows(Var a, Var gamma, Var beta) {
  Graph& g = same_graph(a, gamma, "layer_norm_rows");
  same_graph(a, beta, "layer_norm_rows");
  const Tensor& x = a.value();
  check_matrix("layer_norm_rows", x);
  const std::size_t r = x.rows(), c = x.cols();
  if (gamma.value().shape() != Shape{1, c}) shape_error("layer_norm_rows", x, gamma.value());
  if (beta.value().shape() != Shape{1, c}) shape_error("layer_norm_rows", x, beta.value());

  auto normalized = std::make_shared<Tensor>(Tensor::matrix(r, c));
  auto inv_std = std::make_shared<std::vector<double>>(r);
  Tensor out = Tensor::matrix(r, c);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t i = 0; i < r; ++i) {
    auto row = x.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    const double s = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    (*inv_std)[i] = s;
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (row[j] - mean) * s;
      (*normalized)(i, j) = xh;
      out(i, j) = gv[j] * xh + bv[j];
    }
  }
  const auto ix = a.id(), ig = gamma.id(), ib = beta.id();
  return g.record(std::move(out), {ix, ig, ib},
                  [ix, ig, ib, r, c, normalized, inv_std](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    const Tensor& gv = gr.value(ig);
    const Tensor& xh = *normalized;
    if (gr.requires_grad(ig) || gr.requires_grad(ib)) {
      Tensor& dg = gr.grad_buffer(ig);
      Tensor& db = gr.grad_buffer(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          dg[j] += dy(i, j) * xh(i, j);
          db[j] += dy(i, j);
        }
    }
    if (gr.requires_grad(ix)) {
      Tensor& dx = gr.grad_buffer(ix);
      const double inv_c = 1.0 / static_cast<double>(c);
      for (std::size_t i = 0; i < r; ++i) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double d = dy(i, j) * gv[j];
          mean_d += d;
          mean_dx += d * xh(i, j);
        }
        mean_d *= inv_c;
        mean_dx *= inv_c;
        const double s = (*inv_std)[i];
        for (std::size_t j = 0; j < c; ++j) {
          const double d = dy(i, j) * gv[j];
          dx(i, j) += s * (d - mean_d - xh(i, j) * mean_dx);
        }
      }
    }
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    const Tensor& x = gr.value(ia);
    const Tensor& dy = gr.grad(self);
    Tensor& dx = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) dx[i] += dy[i];
  });
}

Var gelu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
    const Tensor& x = gr.value(ia);
    const Tensor& dy = gr.grad(self);
    Tensor& dx = gr.grad_buffer(ia);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
      dx[i] += dy[i] * (cdf + x[i] * pdf);
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const auto ia = a.id();
  return a.graph().record(Tensor::scalar(total), {ia}, [ia](Graph& gr, std::size_t self) {
    const double d = gr.grad(self)[0];
    for (auto& v : gr.grad_buffer(ia).values()) v += d;
  });
}

Var sum_axis(Var a, int axis) {
  const Tensor& x = a.value();
  check_matrix("sum_axis", x);
  if (axis != 0 && axis != 1) throw std::invalid_argument("sum_axis: axis must be 0 or 1");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = axis == 0 ? Tensor::matrix(1, c) : Tensor::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += x(i, j);
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, axis, r, c](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    Tensor& dx = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx(i, j) += dy[axis == 0 ? j : i];
  });
}

Var max_axis(Var a, int axis) {
  const Tensor& x = a.value();
  check_matrix("max_axis", x);
  if (axis != 0 && axis != 1) throw std::invalid_argument("max_axis: axis must be 0 or 1");
  const std::size_t r = x.rows(), c = x.cols();
  const std::size_t lines = axis == 0 ? c : r;
  const std::size_t len = axis == 0 ? r : c;
  Tensor out = axis == 0 ? Tensor::matrix(1, c) : Tensor::matrix(r, 1);
  auto arg = std::make_shared<std::vector<std::size_t>>(lines);
  for (std::size_t l = 0; l < lines; ++l) {
    std::size_t best = 0;
    double best_v = axis == 0 ? x(0, l) : x(l, 0);
    for (std::size_t k = 1; k < len; ++k) {
      const double v = axis == 0 ? x(k, l) : x(l, k);
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    out[l] = best_v;
    (*arg)[l] = best;
  }
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, axis, lines, arg](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    Tensor& dx = gr.grad_buffer(ia);
    for (std::size_t l = 0; l < lines; ++l) {
      if (axis == 0) dx((*arg)[l], l) += dy[l];
      else dx(l, (*arg)[l]) += dy[l];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Graph& g = parts.front().graph();
  const std::size_t r = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    same_graph(parts.front(), p, "concat_cols");
    const Tensor& v = p.value();
    check_matrix("concat_cols", v);
    if (v.rows() != r) shape_error("concat_cols", parts.front().value(), v);
    ids.push_back(p.id());
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor out = Tensor::matrix(r, total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    view(out).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(widths[k])) =
        view(parts[k].value());
    offset += widths[k];
  }
  return g.record(std::move(out), ids, [ids, widths](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (gr.requires_grad(ids[k])) {
        view(gr.grad_buffer(ids[k])) +=
            view(dy).middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(widths[k]));
      }
      off += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
  Graph& g = parts.front().graph();
  const std::size_t c = parts.front().value().cols();
  std::size_t total = 0;
  std::vector<std::size_t> ids, heights;
  for (const Var& p : parts) {
    same_graph(parts.front(), p, "concat_rows");
    const Tensor& v = p.value();
    check_matrix("concat_rows", v);
    if (v.cols() != c) shape_error("concat_rows", parts.front().value(), v);
    ids.push_back(p.id());
    heights.push_back(v.rows());
    total += v.rows();
  }
  std::vector<double> values;
  values.reserve(total * c);
  for (const Var& p : parts) values.insert(values.end(), p.value().values().begin(), p.value().values().end());
  Tensor out({total, c}, std::move(values));
  return g.record(std::move(out), ids, [ids, heights, c](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t n = heights[k] * c;
      if (gr.requires_grad(ids[k])) {
        Tensor& dx = gr.grad_buffer(ids[k]);
        for (std::size_t i = 0; i < n; ++i) dx[i] += dy[off + i];
      }
      off += n;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  check_matrix("slice_cols", x);
  if (begin + count > x.cols()) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") exceeds shape " + shape_string(x.shape()));
  }
  Tensor out = Tensor::matrix(x.rows(), count);
  view(out) = view(x).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, begin, count](Graph& gr, std::size_t self) {
    view(gr.grad_buffer(ia)).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        view(gr.grad(self));
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  check_matrix("slice_rows", x);
  if (begin + count > x.rows()) {
    throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") exceeds shape " + shape_string(x.shape()));
  }
  const std::size_t c = x.cols();
  std::vector<double> values(x.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
                             x.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  const auto ia = a.id();
  return a.graph().record(Tensor({count, c}, std::move(values)), {ia}, [ia, begin, c](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.grad(self);
    Tensor& dx = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[begin * c + i] += dy[i];
  });
}

namespace {

// out[cell] += weight(cell) * in[neighbour] for every neighbour, where weight
// is 1/neighbour_count(cell). `transpose` applies the adjoint map.
void neighbor_apply(const Tensor& in, Tensor& out, std::size_t gh, std::size_t gw, bool adjoint) {
  const std::size_t z = in.cols();
  for (std::size_t y = 0; y < gh; ++y) {
    for (std::size_t x = 0; x < gw; ++x) {
      const std::size_t y0 = y > 0 ? y - 1 : 0, y1 = std::min(gh - 1, y + 1);
      const std::size_t x0 = x > 0 ? x - 1 : 0, x1 = std::min(gw - 1, x + 1);
      const double w = 1.0 / static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
      const std::size_t cell = y * gw + x;
      for (std::size_t ny = y0; ny <= y1; ++ny) {
        for (std::size_t nx = x0; nx <= x1; ++nx) {
          const std::size_t nb = ny * gw + nx;
          const double* src = in.data() + (adjoint ? cell : nb) * z;
          double* dst = out.data() + (adjoint ? nb : cell) * z;
          for (std::size_t k = 0; k < z; ++k) dst[k] += w * src[k];
        }
      }
    }
  }
}

}  // namespace

Var neighbor_mean(Var a, std::size_t grid_h, std::size_t grid_w) {
  const Tensor& x = a.value();
  check_matrix("neighbor_mean", x);
  if (grid_h * grid_w != x.rows()) {
    throw std::invalid_argument("neighbor_mean: lattice " + std::to_string(grid_h) + "x" +
                                std::to_string(grid_w) + " does not match shape " + shape_string(x.shape()));
  }
  Tensor out = Tensor::matrix(x.rows(), x.cols());
  neighbor_apply(x, out, grid_h, grid_w, false);
  const auto ia = a.id();
  return a.graph().record(std::move(out), {ia}, [ia, grid_h, grid_w](Graph& gr, std::size_t self) {
    neighbor_apply(gr.grad(self), gr.grad_buffer(ia), grid_h, grid_w, true);
  });
}

Var external_scalar(std::span<const Var> inputs, double value, std::vector<Tensor> grads) {
  if (inputs.empty()) throw std::invalid_argument("external_scalar: no inputs");
  if (grads.size() != inputs.size()) throw std::invalid_argument("external_scalar: gradient count mismatch");
  std::vector<std::size_t> ids;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    same_graph(inputs.front(), inputs[k], "external_scalar");
    if (!grads[k].same_shape(inputs[k].value())) shape_error("external_scalar", inputs[k].value(), grads[k]);
    ids.push_back(inputs[k].id());
  }
  auto shared = std::make_shared<std::vector<Tensor>>(std::move(grads));
  return inputs.front().graph().record(Tensor::scalar(value), ids, [ids, shared](Graph& gr, std::size_t self) {
    const double d = gr.grad(self)[0];
    for (std::size_t k = 0; k < ids.size(); ++k)
      if (gr.requires_grad(ids[k])) gr.grad_buffer(ids[k]).axpy(d, (*shared)[k]);
  });
}

}  // namespace densitydist::ops
