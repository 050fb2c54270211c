#include "casim/nn/ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace casim::nn {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Var constant(Mat value) { return Var(std::move(value), false); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  auto na = a.node(), nb = b.node();
  return make_result(a.value() + b.value(), {a, b}, [na, nb](const Mat& g) {
    na->accumulate(g);
    nb->accumulate(g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  auto na = a.node(), nb = b.node();
  return make_result(a.value() - b.value(), {a, b}, [na, nb](const Mat& g) {
    na->accumulate(g);
    nb->accumulate_expr(-g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  auto na = a.node(), nb = b.node();
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [na, nb](const Mat& g) {
    na->accumulate_expr(g.cwiseProduct(nb->value));
    nb->accumulate_expr(g.cwiseProduct(na->value));
  });
}

Var scale(const Var& a, double s) {
  auto na = a.node();
  return make_result(a.value() * s, {a}, [na, s](const Mat& g) { na->accumulate_expr(g * s); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: expected 1x" + std::to_string(a.cols()) + " row");
  }
  auto na = a.node(), nr = row.node();
  Mat out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a, row}, [na, nr](const Mat& g) {
    na->accumulate(g);
    nr->accumulate_expr(g.colwise().sum());
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.value().size() != 1) throw std::invalid_argument("mul_scalar: expected 1x1 scale");
  auto na = a.node(), ns = s.node();
  const double sv = s.value()(0, 0);
  return make_result(a.value() * sv, {a, s}, [na, ns, sv](const Mat& g) {
    na->accumulate_expr(g * sv);
    if (ns->requires_grad) {
      Mat gs(1, 1);
      gs(0, 0) = g.cwiseProduct(na->value).sum();
      ns->accumulate(gs);
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                                std::to_string(b.rows()) + " differ");
  }
  auto na = a.node(), nb = b.node();
  Mat out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [na, nb](const Mat& g) {
    if (na->requires_grad) na->accumulate_expr(g * nb->value.transpose());
    if (nb->requires_grad) nb->accumulate_expr(na->value.transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: column counts differ");
  }
  auto na = a.node(), nb = b.node();
  Mat out = a.value() * b.value().transpose();
  return make_result(std::move(out), {a, b}, [na, nb](const Mat& g) {
    if (na->requires_grad) na->accumulate_expr(g * nb->value);
    if (nb->requires_grad) nb->accumulate_expr(g.transpose() * na->value);
  });
}

Var transpose(const Var& a) {
  auto na = a.node();
  Mat out = a.value().transpose();
  return make_result(std::move(out), {a},
                     [na](const Mat& g) { na->accumulate_expr(g.transpose()); });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.rows()) {
    throw std::invalid_argument("linear: input has " + std::to_string(x.cols()) +
                                " features, weight expects " + std::to_string(weight.rows()));
  }
  auto nx = x.node(), nw = weight.node();
  std::shared_ptr<Node> nb = bias.defined() ? bias.node() : nullptr;
  Mat out = x.value() * weight.value();
  if (nb) out.rowwise() += nb->value.row(0);
  std::vector<Var> parents{x, weight};
  if (nb) parents.push_back(bias);
  return make_result(std::move(out), parents, [nx, nw, nb](const Mat& g) {
    if (nx->requires_grad) nx->accumulate_expr(g * nw->value.transpose());
    if (nw->requires_grad) nw->accumulate_expr(nx->value.transpose() * g);
    if (nb && nb->requires_grad) nb->accumulate_expr(g.colwise().sum());
  });
}

Var relu(const Var& x) {
  auto nx = x.node();
  Mat out = x.value().cwiseMax(0.0);
  return make_result(std::move(out), {x}, [nx](const Mat& g) {
    nx->accumulate_expr((nx->value.array() > 0.0).cast<double>().matrix().cwiseProduct(g));
  });
}

namespace {
constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kA = 0.044715;
}  // namespace

Var gelu(const Var& x) {
  auto nx = x.node();
  const Mat& xv = x.value();
  Mat t = (kC * (xv.array() + kA * xv.array().cube())).tanh().matrix();
  Mat out = (0.5 * xv.array() * (1.0 + t.array())).matrix();
  return make_result(std::move(out), {x}, [nx, t](const Mat& g) {
    const auto xa = nx->value.array();
    auto sech2 = 1.0 - t.array().square();
    auto d = 0.5 * (1.0 + t.array()) + 0.5 * xa * sech2 * kC * (1.0 + 3.0 * kA * xa.square());
    nx->accumulate_expr((g.array() * d).matrix());
  });
}

Var exp(const Var& x) {
  auto nx = x.node();
  Mat out = x.value().array().exp().matrix();
  return make_result(out, {x}, [nx, out](const Mat& g) {
    nx->accumulate_expr(g.cwiseProduct(out));
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x.rows(), c = x.cols();
  if (gamma.cols() != c || beta.cols() != c) {
    throw std::invalid_argument("layer_norm: gamma/beta width mismatch");
  }
  auto nx = x.node(), ng = gamma.node(), nb = beta.node();
  Mat xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return make_result(std::move(out), {x, gamma, beta},
                     [nx, ng, nb, xhat, inv_std, c](const Mat& g) {
                       if (ng->requires_grad) ng->accumulate_expr(g.cwiseProduct(xhat).colwise().sum());
                       if (nb->requires_grad) nb->accumulate_expr(g.colwise().sum());
                       if (!nx->requires_grad) return;
                       Mat gx(g.rows(), c);
                       for (Eigen::Index i = 0; i < g.rows(); ++i) {
                         RowVec gh = g.row(i).cwiseProduct(ng->value.row(0));
                         const double m1 = gh.mean();
                         const double m2 = gh.cwiseProduct(xhat.row(i)).mean();
                         gx.row(i) = (gh.array() - m1 - xhat.row(i).array() * m2) * inv_std(i);
                       }
                       nx->accumulate(gx);
                     });
}

Var l2_normalize_rows(const Var& x, double eps) {
  auto nx = x.node();
  Eigen::VectorXd norms = x.value().rowwise().norm();
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = x.value().row(i) / std::max(norms(i), eps);
  return make_result(out, {x}, [nx, out, norms, eps](const Mat& g) {
    Mat gx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double n = std::max(norms(i), eps);
      const double dot = g.row(i).dot(out.row(i));
      gx.row(i) = (g.row(i) - dot * out.row(i)) / n;
    }
    nx->accumulate(gx);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Eigen::Index c = parts.front().cols();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
    total += p.rows();
  }
  Mat out(total, c);
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(off);
    off += p.rows();
  }
  return make_result(std::move(out), parts, [nodes, offsets](const Mat& g) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad) {
        nodes[i]->accumulate_expr(g.middleRows(offsets[i], nodes[i]->value.rows()));
      }
    }
  });
}

Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw std::out_of_range("slice_rows: [" + std::to_string(start) + ", " +
                            std::to_string(start + count) + ") outside " +
                            std::to_string(x.rows()) + " rows");
  }
  auto nx = x.node();
  Mat out = x.value().middleRows(start, count);
  return make_result(std::move(out), {x}, [nx, start, count](const Mat& g) {
    if (nx->grad.size() == 0) nx->grad = Mat::Zero(nx->value.rows(), nx->value.cols());
    nx->grad.middleRows(start, count) += g;
  });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  auto nt = table.node();
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  Mat out(n, table.cols());
  std::vector<int> idv(ids.begin(), ids.end());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int id = idv[static_cast<std::size_t>(i)];
    if (id < 0 || id >= table.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(id) + " outside table of " +
                              std::to_string(table.rows()));
    }
    out.row(i) = table.value().row(id);
  }
  return make_result(std::move(out), {table}, [nt, idv](const Mat& g) {
    if (nt->grad.size() == 0) nt->grad = Mat::Zero(nt->value.rows(), nt->value.cols());
    for (std::size_t i = 0; i < idv.size(); ++i) {
      nt->grad.row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var repeat_rows(const Var& x, int factor) {
  if (factor < 1) throw std::invalid_argument("repeat_rows: factor must be >= 1");
  auto nx = x.node();
  Mat out(x.rows() * factor, x.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = x.value().row(i / factor);
  return make_result(std::move(out), {x}, [nx, factor](const Mat& g) {
    Mat gx = Mat::Zero(nx->value.rows(), nx->value.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) gx.row(i / factor) += g.row(i);
    nx->accumulate(gx);
  });
}

Var mask_rows(const Var& x, const std::vector<bool>& keep) {
  if (static_cast<Eigen::Index>(keep.size()) != x.rows()) {
    throw std::invalid_argument("mask_rows: mask length differs from row count");
  }
  auto nx = x.node();
  Mat out = x.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (!keep[static_cast<std::size_t>(i)]) out.row(i).setZero();
  }
  return make_result(std::move(out), {x}, [nx, keep](const Mat& g) {
    Mat gx = g;
    for (Eigen::Index i = 0; i < gx.rows(); ++i) {
      if (!keep[static_cast<std::size_t>(i)]) gx.row(i).setZero();
    }
    nx->accumulate(gx);
  });
}

Var row_diff(const Var& x) {
  if (x.rows() < 2) throw std::invalid_argument("row_diff: need at least two rows");
  auto nx = x.node();
  const Eigen::Index n = x.rows() - 1;
  Mat out = x.value().bottomRows(n) - x.value().topRows(n);
  return make_result(std::move(out), {x}, [nx, n](const Mat& g) {
    Mat gx = Mat::Zero(n + 1, g.cols());
    gx.bottomRows(n) += g;
    gx.topRows(n) -= g;
    nx->accumulate(gx);
  });
}

Eigen::Index unfold1d_length(Eigen::Index rows, int kernel, int stride, int pad) {
  return (rows + 2 * pad - kernel) / stride + 1;
}

Var unfold1d(const Var& x, int kernel, int stride, int pad) {
  const Eigen::Index t_in = x.rows(), c = x.cols();
  const Eigen::Index t_out = unfold1d_length(t_in, kernel, stride, pad);
  if (t_out < 1) throw std::invalid_argument("unfold1d: input shorter than kernel");
  auto nx = x.node();
  Mat out = Mat::Zero(t_out, kernel * c);
  for (Eigen::Index t = 0; t < t_out; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = t * stride - pad + k;
      if (src >= 0 && src < t_in) out.block(t, k * c, 1, c) = x.value().row(src);
    }
  }
  return make_result(std::move(out), {x}, [nx, kernel, stride, pad, t_in, c](const Mat& g) {
    Mat gx = Mat::Zero(t_in, c);
    for (Eigen::Index t = 0; t < g.rows(); ++t) {
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = t * stride - pad + k;
        if (src >= 0 && src < t_in) gx.row(src) += g.block(t, k * c, 1, c);
      }
    }
    nx->accumulate(gx);
  });
}

Var sum(const Var& x) {
  auto nx = x.node();
  Mat out(1, 1);
  out(0, 0) = x.value().sum();
  return make_result(std::move(out), {x}, [nx](const Mat& g) {
    nx->accumulate_expr(Mat::Constant(nx->value.rows(), nx->value.cols(), g(0, 0)));
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var mean_rows(const Var& x) {
  auto nx = x.node();
  const double n = static_cast<double>(x.rows());
  Mat out = x.value().colwise().mean();
  return make_result(std::move(out), {x}, [nx, n](const Mat& g) {
    Mat gx = g.replicate(nx->value.rows(), 1) / n;
    nx->accumulate(gx);
  });
}

Var mse_loss(const Var& pred, const Var& target) {
  require_same_shape(pred, target, "mse_loss");
  auto np = pred.node(), nt = target.node();
  Mat diff = pred.value() - target.value();
  const double n = static_cast<double>(diff.size());
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return make_result(std::move(out), {pred, target}, [np, nt, diff, n](const Mat& g) {
    const double s = 2.0 * g(0, 0) / n;
    np->accumulate_expr(diff * s);
    nt->accumulate_expr(diff * -s);
  });
}

Var smooth_l1_loss(const Var& pred, const Var& target, double beta) {
  require_same_shape(pred, target, "smooth_l1_loss");
  auto np = pred.node(), nt = target.node();
  Mat diff = pred.value() - target.value();
  const double n = static_cast<double>(diff.size());
  double total = 0.0;
  Mat d = Mat(diff.rows(), diff.cols());
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    const double x = diff.data()[i];
    const double ax = std::abs(x);
    if (ax < beta) {
      total += 0.5 * x * x / beta;
      d.data()[i] = x / beta;
    } else {
      total += ax - 0.5 * beta;
      d.data()[i] = x > 0 ? 1.0 : -1.0;
    }
  }
  Mat out(1, 1);
  out(0, 0) = total / n;
  return make_result(std::move(out), {pred, target}, [np, nt, d, n](const Mat& g) {
    const double s = g(0, 0) / n;
    np->accumulate_expr(d * s);
    nt->accumulate_expr(d * -s);
  });
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw std::invalid_argument("cross_entropy: target count differs from logit rows");
  }
  auto nl = logits.node();
  const Eigen::Index n = logits.rows(), k = logits.cols();
  std::vector<int> tv(targets.begin(), targets.end());
  Mat probs(n, k);
  double total = 0.0;
  int counted = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.value().row(i).maxCoeff();
    RowVec e = (logits.value().row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    probs.row(i) = e / z;
    const int t = tv[static_cast<std::size_t>(i)];
    if (t >= 0) {
      if (t >= k) throw std::out_of_range("cross_entropy: target class out of range");
      total += -(logits.value()(i, t) - mx - std::log(z));
      ++counted;
    }
  }
  const double denom = counted > 0 ? static_cast<double>(counted) : 1.0;
  Mat out(1, 1);
  out(0, 0) = total / denom;
  return make_result(std::move(out), {logits}, [nl, probs, tv, denom](const Mat& g) {
    Mat gl = Mat::Zero(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      const int t = tv[static_cast<std::size_t>(i)];
      if (t < 0) continue;
      gl.row(i) = probs.row(i);
      gl(i, t) -= 1.0;
    }
    nl->accumulate_expr(gl * (g(0, 0) / denom));
  });
}

Var straight_through(const Var& latent, const Var& code) {
  require_same_shape(latent, code, "straight_through");
  auto nz = latent.node();
  return make_result(code.value(), {latent}, [nz](const Mat& g) { nz->accumulate(g); });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, const BoolMat* mask,
              std::vector<Mat>* capture) {
  const Eigen::Index n = q.rows(), m = k.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != m) {
    throw std::invalid_argument("attention: q/k/v shapes are inconsistent");
  }
  if (heads < 1 || d % heads != 0) {
    throw std::invalid_argument("attention: head count " + std::to_string(heads) +
                                " does not divide width " + std::to_string(d));
  }
  if (mask && (mask->rows() != n || mask->cols() != m)) {
    throw std::invalid_argument("attention: mask is " + std::to_string(mask->rows()) + "x" +
                                std::to_string(mask->cols()) + ", expected " +
                                std::to_string(n) + "x" + std::to_string(m));
  }
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto nq = q.node(), nk = k.node(), nv = v.node();

  std::vector<Mat> probs(static_cast<std::size_t>(heads));
  Mat out(n, d);
  for (int h = 0; h < heads; ++h) {
    Mat s = q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose();
    s *= inv_sqrt;
    Mat& p = probs[static_cast<std::size_t>(h)];
    p = Mat::Zero(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < m; ++j) {
        if (!mask || (*mask)(i, j)) mx = std::max(mx, s(i, j));
      }
      if (mx == -std::numeric_limits<double>::infinity()) continue;
      double z = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (!mask || (*mask)(i, j)) {
          const double e = std::exp(s(i, j) - mx);
          p(i, j) = e;
          z += e;
        }
      }
      p.row(i) /= z;
    }
    out.middleCols(h * dh, dh) = p * v.value().middleCols(h * dh, dh);
  }
  if (capture) {
    for (const auto& p : probs) capture->push_back(p);
  }

  return make_result(std::move(out), {q, k, v},
                     [nq, nk, nv, probs, heads, dh, inv_sqrt, n, m, d](const Mat& g) {
                       Mat gq = Mat::Zero(n, d), gk = Mat::Zero(m, d), gv = Mat::Zero(m, d);
                       for (int h = 0; h < heads; ++h) {
                         const Mat& p = probs[static_cast<std::size_t>(h)];
                         auto gh = g.middleCols(h * dh, dh);
                         gv.middleCols(h * dh, dh) += p.transpose() * gh;
                         Mat dp = gh * nv->value.middleCols(h * dh, dh).transpose();
                         Eigen::VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
                         Mat ds = p.cwiseProduct(dp.colwise() - row_dot) * inv_sqrt;
                         gq.middleCols(h * dh, dh) += ds * nk->value.middleCols(h * dh, dh);
                         gk.middleCols(h * dh, dh) += ds.transpose() * nq->value.middleCols(h * dh, dh);
                       }
                       nq->accumulate(gq);
                       nk->accumulate(gk);
                       nv->accumulate(gv);
                     });
}

}  // namespace casim::nn
