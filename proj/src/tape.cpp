#include "cneuro/tape.hpp"

#include <cmath>

#include "cneuro/error.hpp"

namespace cneuro {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

Tape::Ref Tape::push(Tensor value, bool needs_grad,
                     std::function<void(Tape&)> back, const char* op) {
  if (!value.all_finite())
    throw NumericFault(std::string("op ") + op + " produced non-finite values");
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) {
    n.grad = n.value.rank() == 2 ? Tensor(n.value.rows(), n.value.cols())
                                 : Tensor(n.value.size());
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return Ref{nodes_.size() - 1};
}

void Tape::check(Ref r) const {
  if (!r.valid() || r.idx >= nodes_.size())
    throw InputError("tape: reference does not belong to this tape");
}

const Tensor& Tape::grad(Ref r) const {
  check(r);
  if (!swept_) throw InputError("tape: gradients requested before backward");
  if (!nodes_[r.idx].needs_grad)
    throw InputError("tape: node does not track gradients");
  return nodes_[r.idx].grad;
}

Tape::Ref Tape::input(Tensor v) { return push(std::move(v), false, {}, "input"); }

Tape::Ref Tape::param(Tensor v) {
  return push(std::move(v), true, [](Tape&) {}, "param");
}

Tape::Ref Tape::matmul(Ref a, Ref b) {
  check(a);
  check(b);
  const Tensor& A = nodes_[a.idx].value;
  const Tensor& B = nodes_[b.idx].value;
  require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
          "matmul: incompatible shapes " + A.shape_str() + " x " + B.shape_str());
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * B.at(p, j);
    }
  bool ng = nodes_[a.idx].needs_grad || nodes_[b.idx].needs_grad;
  Ref r = push(std::move(out), ng, {}, "matmul");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, b, m, k, n, self](Tape& t) {
    const Tensor& dC = t.nodes_[self].grad;
    const Tensor& A2 = t.nodes_[a.idx].value;
    const Tensor& B2 = t.nodes_[b.idx].value;
    if (t.nodes_[a.idx].needs_grad) {
      Tensor& dA = t.nodes_[a.idx].grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += dC.at(i, j) * B2.at(p, j);
          dA.at(i, p) += s;
        }
    }
    if (t.nodes_[b.idx].needs_grad) {
      Tensor& dB = t.nodes_[b.idx].grad;
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < m; ++i) {
          const double aip = A2.at(i, p);
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) dB.at(p, j) += aip * dC.at(i, j);
        }
    }
  };
  return r;
}

Tape::Ref Tape::matvec(Ref a, Ref x) {
  check(a);
  check(x);
  const Tensor& A = nodes_[a.idx].value;
  const Tensor& X = nodes_[x.idx].value;
  require(A.rank() == 2 && X.rank() == 1 && A.cols() == X.size(),
          "matvec: incompatible shapes " + A.shape_str() + " x " + X.shape_str());
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += A.at(i, j) * X.at(j);
    out.at(i) = s;
  }
  bool ng = nodes_[a.idx].needs_grad || nodes_[x.idx].needs_grad;
  Ref r = push(std::move(out), ng, {}, "matvec");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, x, m, n, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    const Tensor& A2 = t.nodes_[a.idx].value;
    const Tensor& X2 = t.nodes_[x.idx].value;
    if (t.nodes_[a.idx].needs_grad) {
      Tensor& dA = t.nodes_[a.idx].grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dA.at(i, j) += dy.at(i) * X2.at(j);
    }
    if (t.nodes_[x.idx].needs_grad) {
      Tensor& dX = t.nodes_[x.idx].grad;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += A2.at(i, j) * dy.at(i);
        dX.at(j) += s;
      }
    }
  };
  return r;
}

namespace {

Tensor elementwise(const Tensor& a, const Tensor& b, const char* op,
                   double (*f)(double, double)) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = f(a.data()[i], b.data()[i]);
  return out;
}

}  // namespace

Tape::Ref Tape::add(Ref a, Ref b) {
  check(a);
  check(b);
  Tensor out = elementwise(nodes_[a.idx].value, nodes_[b.idx].value, "add",
                           [](double x, double y) { return x + y; });
  bool ng = nodes_[a.idx].needs_grad || nodes_[b.idx].needs_grad;
  Ref r = push(std::move(out), ng, {}, "add");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, b, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    if (t.nodes_[a.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        t.nodes_[a.idx].grad.data()[i] += dy.data()[i];
    if (t.nodes_[b.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        t.nodes_[b.idx].grad.data()[i] += dy.data()[i];
  };
  return r;
}

Tape::Ref Tape::sub(Ref a, Ref b) {
  check(a);
  check(b);
  Tensor out = elementwise(nodes_[a.idx].value, nodes_[b.idx].value, "sub",
                           [](double x, double y) { return x - y; });
  bool ng = nodes_[a.idx].needs_grad || nodes_[b.idx].needs_grad;
  Ref r = push(std::move(out), ng, {}, "sub");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, b, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    if (t.nodes_[a.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        t.nodes_[a.idx].grad.data()[i] += dy.data()[i];
    if (t.nodes_[b.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        t.nodes_[b.idx].grad.data()[i] -= dy.data()[i];
  };
  return r;
}

Tape::Ref Tape::mul(Ref a, Ref b) {
  check(a);
  check(b);
  Tensor out = elementwise(nodes_[a.idx].value, nodes_[b.idx].value, "mul",
                           [](double x, double y) { return x * y; });
  bool ng = nodes_[a.idx].needs_grad || nodes_[b.idx].needs_grad;
  Ref r = push(std::move(out), ng, {}, "mul");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, b, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    const Tensor& va = t.nodes_[a.idx].value;
    const Tensor& vb = t.nodes_[b.idx].value;
    if (t.nodes_[a.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        t.nodes_[a.idx].grad.data()[i] += dy.data()[i] * vb.data()[i];
    if (t.nodes_[b.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        t.nodes_[b.idx].grad.data()[i] += dy.data()[i] * va.data()[i];
  };
  return r;
}

Tape::Ref Tape::scale(Ref a, double k) {
  check(a);
  Tensor out = nodes_[a.idx].value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= k;
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "scale");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, k, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    if (t.nodes_[a.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        t.nodes_[a.idx].grad.data()[i] += k * dy.data()[i];
  };
  return r;
}

Tape::Ref Tape::relu(Ref a) {
  check(a);
  const Tensor& x = nodes_[a.idx].value;
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = std::fabs(x.data()[i]);
    if (d < kink_distance_) kink_distance_ = d;
    if (out.data()[i] < 0.0) out.data()[i] = 0.0;
  }
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "relu");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    const Tensor& x2 = t.nodes_[a.idx].value;
    if (t.nodes_[a.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        if (x2.data()[i] > 0.0) t.nodes_[a.idx].grad.data()[i] += dy.data()[i];
  };
  return r;
}

Tape::Ref Tape::sigmoid(Ref a) {
  check(a);
  Tensor out = nodes_[a.idx].value;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = 1.0 / (1.0 + std::exp(-out.data()[i]));
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "sigmoid");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    if (t.nodes_[a.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i) {
        const double s = y.data()[i];
        t.nodes_[a.idx].grad.data()[i] += dy.data()[i] * s * (1.0 - s);
      }
  };
  return r;
}

Tape::Ref Tape::log(Ref a) {
  check(a);
  Tensor out = nodes_[a.idx].value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::log(out.data()[i]);
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "log");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    const Tensor& x2 = t.nodes_[a.idx].value;
    if (t.nodes_[a.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        t.nodes_[a.idx].grad.data()[i] += dy.data()[i] / x2.data()[i];
  };
  return r;
}

Tape::Ref Tape::exp(Ref a) {
  check(a);
  Tensor out = nodes_[a.idx].value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::exp(out.data()[i]);
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "exp");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    if (t.nodes_[a.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        t.nodes_[a.idx].grad.data()[i] += dy.data()[i] * y.data()[i];
  };
  return r;
}

Tape::Ref Tape::clamp_min(Ref a, double floor) {
  check(a);
  const Tensor& x = nodes_[a.idx].value;
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = std::fabs(x.data()[i] - floor);
    if (d < kink_distance_) kink_distance_ = d;
    if (out.data()[i] < floor) {
      out.data()[i] = floor;
      ++clamp_events_;
    }
  }
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "clamp_min");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, floor, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    const Tensor& x2 = t.nodes_[a.idx].value;
    if (t.nodes_[a.idx].needs_grad)
      for (std::size_t i = 0; i < dy.size(); ++i)
        if (x2.data()[i] > floor) t.nodes_[a.idx].grad.data()[i] += dy.data()[i];
  };
  return r;
}

Tape::Ref Tape::transpose(Ref a) {
  check(a);
  const Tensor& x = nodes_[a.idx].value;
  require(x.rank() == 2, "transpose: needs a matrix, got " + x.shape_str());
  Tensor out(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(j, i) = x.at(i, j);
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "transpose");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    if (t.nodes_[a.idx].needs_grad) {
      Tensor& dx = t.nodes_[a.idx].grad;
      for (std::size_t i = 0; i < dy.rows(); ++i)
        for (std::size_t j = 0; j < dy.cols(); ++j) dx.at(j, i) += dy.at(i, j);
    }
  };
  return r;
}

namespace {

void softmax_span(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= z;
}

void softmax_span_back(const double* y, const double* dy, double* dx,
                       std::size_t n) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += y[i] * dy[i];
  for (std::size_t i = 0; i < n; ++i) dx[i] += y[i] * (dy[i] - dot);
}

}  // namespace

Tape::Ref Tape::softmax_rows(Ref a) {
  check(a);
  const Tensor& x = nodes_[a.idx].value;
  require(x.rank() == 2 && x.cols() > 0,
          "softmax_rows: needs a matrix, got " + x.shape_str());
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    softmax_span(x.data() + i * x.cols(), out.data() + i * x.cols(), x.cols());
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "softmax_rows");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, self](Tape& t) {
    if (!t.nodes_[a.idx].needs_grad) return;
    const Tensor& y = t.nodes_[self].value;
    const Tensor& dy = t.nodes_[self].grad;
    Tensor& dx = t.nodes_[a.idx].grad;
    for (std::size_t i = 0; i < y.rows(); ++i)
      softmax_span_back(y.data() + i * y.cols(), dy.data() + i * y.cols(),
                        dx.data() + i * y.cols(), y.cols());
  };
  return r;
}

Tape::Ref Tape::softmax_vec(Ref a) {
  check(a);
  const Tensor& x = nodes_[a.idx].value;
  require(x.rank() == 1 && x.size() > 0,
          "softmax_vec: needs a non-empty vector, got " + x.shape_str());
  Tensor out(x.size());
  softmax_span(x.data(), out.data(), x.size());
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "softmax_vec");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, self](Tape& t) {
    if (!t.nodes_[a.idx].needs_grad) return;
    const Tensor& y = t.nodes_[self].value;
    softmax_span_back(y.data(), t.nodes_[self].grad.data(),
                      t.nodes_[a.idx].grad.data(), y.size());
  };
  return r;
}

Tape::Ref Tape::mean_rows(Ref a) {
  check(a);
  const Tensor& x = nodes_[a.idx].value;
  require(x.rank() == 2 && x.rows() > 0,
          "mean_rows: needs a non-empty matrix, got " + x.shape_str());
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out(n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j) += x.at(i, j);
  for (std::size_t j = 0; j < n; ++j) out.at(j) /= static_cast<double>(m);
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "mean_rows");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, m, n, self](Tape& t) {
    if (!t.nodes_[a.idx].needs_grad) return;
    const Tensor& dy = t.nodes_[self].grad;
    Tensor& dx = t.nodes_[a.idx].grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        dx.at(i, j) += dy.at(j) / static_cast<double>(m);
  };
  return r;
}

Tape::Ref Tape::stack_rows(const std::vector<Ref>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  for (Ref r : rows) check(r);
  const std::size_t n = nodes_[rows[0].idx].value.size();
  bool ng = false;
  for (Ref r : rows) {
    const Tensor& v = nodes_[r.idx].value;
    require(v.rank() == 1 && v.size() == n,
            "stack_rows: rows must be equal-length vectors");
    ng = ng || nodes_[r.idx].needs_grad;
  }
  Tensor out(rows.size(), n);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = nodes_[rows[i].idx].value.at(j);
  Ref r = push(std::move(out), ng, {}, "stack_rows");
  const std::size_t self = r.idx;
  std::vector<Ref> rows_copy = rows;
  nodes_[r.idx].back = [rows_copy, n, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    for (std::size_t i = 0; i < rows_copy.size(); ++i) {
      if (!t.nodes_[rows_copy[i].idx].needs_grad) continue;
      Tensor& dr = t.nodes_[rows_copy[i].idx].grad;
      for (std::size_t j = 0; j < n; ++j) dr.at(j) += dy.at(i, j);
    }
  };
  return r;
}

Tape::Ref Tape::concat_rows(const std::vector<Ref>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  for (Ref p : parts) check(p);
  const std::size_t n = nodes_[parts[0].idx].value.cols();
  std::size_t m = 0;
  bool ng = false;
  for (Ref p : parts) {
    const Tensor& v = nodes_[p.idx].value;
    require(v.rank() == 2 && v.cols() == n,
            "concat_rows: parts must be matrices of equal width");
    m += v.rows();
    ng = ng || nodes_[p.idx].needs_grad;
  }
  Tensor out(m, n);
  std::size_t at = 0;
  for (Ref p : parts) {
    const Tensor& v = nodes_[p.idx].value;
    for (std::size_t i = 0; i < v.rows(); ++i, ++at)
      for (std::size_t j = 0; j < n; ++j) out.at(at, j) = v.at(i, j);
  }
  Ref r = push(std::move(out), ng, {}, "concat_rows");
  const std::size_t self = r.idx;
  std::vector<Ref> parts_copy = parts;
  nodes_[r.idx].back = [parts_copy, n, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    std::size_t at = 0;
    for (Ref p : parts_copy) {
      const std::size_t rows = t.nodes_[p.idx].value.rows();
      if (!t.nodes_[p.idx].needs_grad) {
        at += rows;
        continue;
      }
      Tensor& dp = t.nodes_[p.idx].grad;
      for (std::size_t i = 0; i < rows; ++i, ++at)
        for (std::size_t j = 0; j < n; ++j) dp.at(i, j) += dy.at(at, j);
    }
  };
  return r;
}

Tape::Ref Tape::slice_rows(Ref a, std::size_t begin, std::size_t count) {
  check(a);
  const Tensor& x = nodes_[a.idx].value;
  require(x.rank() == 2 && count > 0 && begin + count <= x.rows(),
          "slice_rows: block out of range for " + x.shape_str());
  const std::size_t n = x.cols();
  Tensor out(count, n);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = x.at(begin + i, j);
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "slice_rows");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, begin, count, n, self](Tape& t) {
    if (!t.nodes_[a.idx].needs_grad) return;
    const Tensor& dy = t.nodes_[self].grad;
    Tensor& dx = t.nodes_[a.idx].grad;
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < n; ++j) dx.at(begin + i, j) += dy.at(i, j);
  };
  return r;
}

Tape::Ref Tape::pick(Ref v, std::size_t i) {
  check(v);
  const Tensor& x = nodes_[v.idx].value;
  require(x.rank() == 1 && i < x.size(),
          "pick: index out of range for " + x.shape_str());
  Tensor out(1);
  out.at(0) = x.at(i);
  Ref r = push(std::move(out), nodes_[v.idx].needs_grad, {}, "pick");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [v, i, self](Tape& t) {
    if (t.nodes_[v.idx].needs_grad)
      t.nodes_[v.idx].grad.at(i) += t.nodes_[self].grad.at(0);
  };
  return r;
}

Tape::Ref Tape::sum_all(Ref a) {
  check(a);
  const Tensor& x = nodes_[a.idx].value;
  Tensor out(1);
  for (std::size_t i = 0; i < x.size(); ++i) out.at(0) += x.data()[i];
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "sum_all");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, self](Tape& t) {
    if (!t.nodes_[a.idx].needs_grad) return;
    const double g = t.nodes_[self].grad.at(0);
    Tensor& dx = t.nodes_[a.idx].grad;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] += g;
  };
  return r;
}

Tape::Ref Tape::abs_sum(Ref a) {
  check(a);
  const Tensor& x = nodes_[a.idx].value;
  Tensor out(1);
  for (std::size_t i = 0; i < x.size(); ++i) out.at(0) += std::fabs(x.data()[i]);
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "abs_sum");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, self](Tape& t) {
    if (!t.nodes_[a.idx].needs_grad) return;
    const double g = t.nodes_[self].grad.at(0);
    const Tensor& x2 = t.nodes_[a.idx].value;
    Tensor& dx = t.nodes_[a.idx].grad;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double v = x2.data()[i];
      if (v > 0.0)
        dx.data()[i] += g;
      else if (v < 0.0)
        dx.data()[i] -= g;
    }
  };
  return r;
}

Tape::Ref Tape::dropout_rows(Ref a, double p, RandomStream& rng) {
  check(a);
  if (!(p >= 0.0 && p < 1.0))
    throw InputError("dropout: p must be in [0, 1)");
  const Tensor& x = nodes_[a.idx].value;
  const double keep = 1.0 - p;
  std::vector<double> mask;  // per-row (or per-entry for vectors) multiplier
  Tensor out = x;
  if (x.rank() == 2) {
    mask.resize(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) *= mask[i];
    }
  } else {
    mask.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
      out.at(i) *= mask[i];
    }
  }
  Ref r = push(std::move(out), nodes_[a.idx].needs_grad, {}, "dropout");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [a, mask, self](Tape& t) {
    if (!t.nodes_[a.idx].needs_grad) return;
    const Tensor& dy = t.nodes_[self].grad;
    Tensor& dx = t.nodes_[a.idx].grad;
    if (dy.rank() == 2) {
      for (std::size_t i = 0; i < dy.rows(); ++i)
        for (std::size_t j = 0; j < dy.cols(); ++j)
          dx.at(i, j) += dy.at(i, j) * mask[i];
    } else {
      for (std::size_t i = 0; i < dy.size(); ++i)
        dx.at(i) += dy.at(i) * mask[i];
    }
  };
  return r;
}

Tape::Ref Tape::batch_norm(Ref x, Ref gamma, Ref beta, BatchNormState& state,
                           bool train) {
  check(x);
  check(gamma);
  check(beta);
  const Tensor& X = nodes_[x.idx].value;
  const Tensor& G = nodes_[gamma.idx].value;
  const Tensor& B = nodes_[beta.idx].value;
  require(X.rank() == 2 && X.rows() > 0, "batch_norm: needs a non-empty matrix");
  const std::size_t m = X.rows(), d = X.cols();
  require(G.rank() == 1 && G.size() == d && B.rank() == 1 && B.size() == d &&
              state.running_mean.size() == d && state.running_var.size() == d,
          "batch_norm: feature width mismatch");

  Tensor mean(d), invstd(d), xhat(m, d), out(m, d);
  if (train) {
    Tensor var(d);
    for (std::size_t j = 0; j < d; ++j) {
      double mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += X.at(i, j);
      mu /= static_cast<double>(m);
      double v = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double c = X.at(i, j) - mu;
        v += c * c;
      }
      v /= static_cast<double>(m);
      mean.at(j) = mu;
      var.at(j) = v;
      invstd.at(j) = 1.0 / std::sqrt(v + state.eps);
    }
    for (std::size_t j = 0; j < d; ++j) {
      state.running_mean.at(j) =
          (1.0 - state.momentum) * state.running_mean.at(j) + state.momentum * mean.at(j);
      state.running_var.at(j) =
          (1.0 - state.momentum) * state.running_var.at(j) + state.momentum * var.at(j);
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      mean.at(j) = state.running_mean.at(j);
      invstd.at(j) = 1.0 / std::sqrt(state.running_var.at(j) + state.eps);
    }
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      xhat.at(i, j) = (X.at(i, j) - mean.at(j)) * invstd.at(j);
      out.at(i, j) = G.at(j) * xhat.at(i, j) + B.at(j);
    }

  bool ng = nodes_[x.idx].needs_grad || nodes_[gamma.idx].needs_grad ||
            nodes_[beta.idx].needs_grad;
  Ref r = push(std::move(out), ng, {}, "batch_norm");
  const std::size_t self = r.idx;
  nodes_[r.idx].back = [x, gamma, beta, m, d, xhat, invstd, train, self](Tape& t) {
    const Tensor& dy = t.nodes_[self].grad;
    const Tensor& G2 = t.nodes_[gamma.idx].value;
    if (t.nodes_[gamma.idx].needs_grad) {
      Tensor& dg = t.nodes_[gamma.idx].grad;
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += dy.at(i, j) * xhat.at(i, j);
        dg.at(j) += s;
      }
    }
    if (t.nodes_[beta.idx].needs_grad) {
      Tensor& db = t.nodes_[beta.idx].grad;
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += dy.at(i, j);
        db.at(j) += s;
      }
    }
    if (!t.nodes_[x.idx].needs_grad) return;
    Tensor& dx = t.nodes_[x.idx].grad;
    if (!train) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j)
          dx.at(i, j) += dy.at(i, j) * G2.at(j) * invstd.at(j);
      return;
    }
    for (std::size_t j = 0; j < d; ++j) {
      double sum_dxh = 0.0, sum_dxh_xh = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double dxh = dy.at(i, j) * G2.at(j);
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xhat.at(i, j);
      }
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        const double dxh = dy.at(i, j) * G2.at(j);
        dx.at(i, j) += invstd.at(j) *
                       (dxh - inv_m * sum_dxh - xhat.at(i, j) * inv_m * sum_dxh_xh);
      }
    }
  };
  return r;
}

void Tape::backward(Ref loss) {
  check(loss);
  if (swept_) throw InputError("tape: backward already run");
  const Node& L = nodes_[loss.idx];
  if (L.value.size() != 1)
    throw DimensionError("backward: loss must be scalar, got " + L.value.shape_str());
  swept_ = true;
  if (!L.needs_grad) return;
  nodes_[loss.idx].grad.at(0) = 1.0;
  for (std::size_t i = loss.idx + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.back) n.back(*this);
  }
}

}  // namespace cneuro
