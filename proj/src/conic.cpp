#include "mcast/conic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

namespace mcast::conic {

namespace {

constexpr double kLn2 = 0.69314718055994530942;

// Exponents above this cannot belong to a feasible rate slack; treating them
// as infeasible keeps exp2 out of overflow during line search.
constexpr double kMaxExponent = 500.0;

double safe_exp2(double w) { return std::exp2(w); }

}  // namespace

AffExpr& AffExpr::append(const AffExpr& other, double scale) {
  constant += scale * other.constant;
  for (const auto& [idx, c] : other.terms) add(idx, scale * c);
  return *this;
}

double AffExpr::eval(const Eigen::VectorXd& x) const {
  double v = constant;
  for (const auto& [idx, c] : terms) v += c * x[idx];
  return v;
}

int BarrierProblem::add_vars(int count) {
  const int off = num_vars_;
  num_vars_ += count;
  return off;
}

int BarrierProblem::add_psd_block(int dim) {
  const int off = add_vars(dim * dim);
  psd_.push_back({off, dim});
  return off;
}

void BarrierProblem::add_linear(AffExpr a) { linear_.push_back(std::move(a)); }

void BarrierProblem::add_rate(AffExpr u, AffExpr w) {
  RateCon rc;
  rc.u = std::move(u);
  rc.w = std::move(w);
  std::map<int, std::array<double, 2>> merged;
  for (const auto& [idx, c] : rc.u.terms) merged[idx][0] += c;
  for (const auto& [idx, c] : rc.w.terms) merged[idx][1] += c;
  for (const auto& [idx, cs] : merged) {
    rc.support.push_back(idx);
    rc.coefs.push_back(cs);
  }
  rate_.push_back(std::move(rc));
}

void BarrierProblem::add_lmi2(AffExpr p, AffExpr q, AffExpr r) {
  lmi_.push_back({std::move(p), std::move(q), std::move(r)});
}

void BarrierProblem::mark_eliminable(int offset, int count) {
  elim_offset_ = offset;
  elim_count_ = count;
  auto is_elim = [&](int i) { return i >= offset && i < offset + count; };
  auto none = [&](const AffExpr& a) {
    for (const auto& [idx, c] : a.terms)
      if (is_elim(idx)) return false;
    return true;
  };
  // The elimination exploits a diagonal-plus-low-rank complement; verify the
  // declared variables only appear where that structure holds.
  if (!none(objective_)) throw std::logic_error("eliminable variable in the objective");
  for (const auto& a : log_objective_)
    if (!none(a)) throw std::logic_error("eliminable variable in a log objective");
  for (const auto& a : linear_) {
    if (a.terms.size() > 1 && !none(a))
      throw std::logic_error("eliminable variable in a coupled linear constraint");
  }
  for (const auto& rc : rate_) {
    if (!none(rc.u)) throw std::logic_error("eliminable variable on the u side of a rate slack");
    int hits = 0;
    for (const auto& [idx, c] : rc.w.terms)
      if (is_elim(idx)) ++hits;
    if (hits > 1) throw std::logic_error("rate slack touches several eliminable variables");
  }
  for (const auto& l : lmi_) {
    if (!none(l.p) || !none(l.q))
      throw std::logic_error("eliminable variable on an LMI diagonal/off-diagonal entry");
  }
  for (const auto& b : psd_)
    if (offset < b.offset + b.dim * b.dim && b.offset < offset + count)
      throw std::logic_error("eliminable range overlaps a PSD block");
}

double BarrierProblem::barrier_nu() const {
  double nu = static_cast<double>(linear_.size() + rate_.size() + 2 * lmi_.size());
  for (const auto& b : psd_) nu += b.dim;
  return nu;
}

double BarrierProblem::objective_value(const Eigen::VectorXd& x) const {
  double v = objective_.eval(x);
  for (const auto& a : log_objective_) v += std::log(a.eval(x));
  return v;
}

void BarrierProblem::unpack_hermitian(const double* params, int dim, CMatrix& out) {
  out.resize(dim, dim);
  for (int i = 0; i < dim; ++i) out(i, i) = params[i];
  int p = dim;
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      out(i, j) = Cdouble(params[p], params[p + 1]);
      out(j, i) = std::conj(out(i, j));
      p += 2;
    }
}

void BarrierProblem::pack_hermitian(const CMatrix& q, int dim, double* params) {
  for (int i = 0; i < dim; ++i) params[i] = q(i, i).real();
  int p = dim;
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      params[p] = q(i, j).real();
      params[p + 1] = q(i, j).imag();
      p += 2;
    }
}

AffExpr BarrierProblem::trace_expr(int offset, const CMatrix& h) {
  const int dim = static_cast<int>(h.rows());
  AffExpr a;
  for (int i = 0; i < dim; ++i) a.add(offset + i, h(i, i).real());
  int p = dim;
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      // tr(QH) picks up 2 Re(H_ji) x_re - 2 Im(H_ji) x_im from the (i,j) pair.
      a.add(offset + p, 2.0 * h(j, i).real());
      a.add(offset + p + 1, -2.0 * h(j, i).imag());
      p += 2;
    }
  return a;
}

bool BarrierProblem::eval_phi(const Eigen::VectorXd& x, double t, double* phi) const {
  double f0 = -objective_.eval(x);
  for (const auto& a : log_objective_) {
    const double v = a.eval(x);
    if (v <= 0.0) return false;
    f0 -= std::log(v);
  }
  double bar = 0.0;
  for (const auto& a : linear_) {
    const double s = a.eval(x);
    if (s <= 0.0) return false;
    bar -= std::log(s);
  }
  for (const auto& rc : rate_) {
    const double w = rc.w.eval(x);
    if (w > kMaxExponent) return false;
    const double g = rc.u.eval(x) - safe_exp2(w);
    if (g <= 0.0) return false;
    bar -= std::log(g);
  }
  for (const auto& l : lmi_) {
    const double p = l.p.eval(x), q = l.q.eval(x), r = l.r.eval(x);
    const double det = p * r - q * q;
    if (p <= 0.0 || det <= 0.0) return false;
    bar -= std::log(det);
  }
  CMatrix qmat;
  for (const auto& b : psd_) {
    unpack_hermitian(x.data() + b.offset, b.dim, qmat);
    Eigen::LLT<CMatrix> llt(qmat);
    if (llt.info() != Eigen::Success) return false;
    double logdet = 0.0;
    for (int i = 0; i < b.dim; ++i) {
      const double d = llt.matrixLLT()(i, i).real();
      if (!(d > 0.0)) return false;
      logdet += std::log(d);
    }
    bar -= 2.0 * logdet;
  }
  if (phi) *phi = t * f0 + bar;
  return true;
}

bool BarrierProblem::strictly_feasible(const Eigen::VectorXd& x) const {
  return eval_phi(x, 1.0, nullptr);
}

double BarrierProblem::max_violation(const Eigen::VectorXd& x) const {
  double worst = 0.0;
  auto scale = [](double v, double ref) { return std::max(0.0, -v) / (1.0 + std::abs(ref)); };
  for (const auto& a : linear_) worst = std::max(worst, scale(a.eval(x), a.constant));
  for (const auto& rc : rate_) {
    const double g = rc.u.eval(x) - safe_exp2(rc.w.eval(x));
    worst = std::max(worst, scale(g, rc.u.constant));
  }
  for (const auto& l : lmi_) {
    const double p = l.p.eval(x), q = l.q.eval(x), r = l.r.eval(x);
    // smallest eigenvalue of the symmetric 2x2
    const double mid = 0.5 * (p + r);
    const double rad = std::sqrt(0.25 * (p - r) * (p - r) + q * q);
    worst = std::max(worst, scale(mid - rad, 1.0));
  }
  CMatrix qmat;
  for (const auto& b : psd_) {
    unpack_hermitian(x.data() + b.offset, b.dim, qmat);
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(qmat, Eigen::EigenvaluesOnly);
    worst = std::max(worst, scale(eig.eigenvalues().minCoeff(), qmat.real().trace()));
  }
  return worst;
}

// Outer products over the dense covariance-parameter prefix are batched into
// columns of a side matrix and applied as one symmetric rank update; only the
// few non-prefix couplings are scattered explicitly.
void BarrierProblem::assemble(const Eigen::VectorXd& x, double t, Eigen::VectorXd& grad,
                              Eigen::MatrixXd& hess) const {
  const int n = num_vars_;
  int np = 0;
  for (const auto& b : psd_) np = std::max(np, b.offset + b.dim * b.dim);
  grad.setZero(n);
  hess.setZero(n, n);
  double* hd = hess.data();
  auto at = [&](int i, int j) -> double& { return hd[i + static_cast<long>(j) * n]; };

  Eigen::MatrixXd vq(np, 2 * rate_.size() + linear_.size() + log_objective_.size());
  int vq_cols = 0;
  std::vector<std::pair<int, double>> rest;
  // one barrier/objective term with gradient coefficient vector `a`, scaled
  // so its Hessian contribution is the outer product with itself
  auto add_outer = [&](const std::vector<std::pair<int, double>>& terms, double scale) {
    rest.clear();
    double* col = vq.col(vq_cols).data();
    std::fill(col, col + np, 0.0);
    bool any_prefix = false;
    for (const auto& [idx, c] : terms) {
      if (idx < np) {
        col[idx] = scale * c;
        any_prefix = true;
      } else {
        rest.emplace_back(idx, scale * c);
      }
    }
    for (size_t a = 0; a < rest.size(); ++a) {
      for (size_t b = 0; b < rest.size(); ++b)
        at(rest[a].first, rest[b].first) += rest[a].second * rest[b].second;
      if (any_prefix) {
        const auto [ri, rv] = rest[a];
        for (int i = 0; i < np; ++i) {
          if (col[i] == 0.0) continue;
          const double v = col[i] * rv;
          at(i, ri) += v;
          at(ri, i) += v;
        }
      }
    }
    if (any_prefix) ++vq_cols;
  };

  // objective: minimize t * (-c.x - sum ln aff)
  for (const auto& [idx, c] : objective_.terms) grad[idx] -= t * c;
  for (const auto& a : log_objective_) {
    const double v = a.eval(x);
    const double gc = t / v;
    for (const auto& [i, ci] : a.terms) grad[i] -= gc * ci;
    add_outer(a.terms, std::sqrt(t) / v);
  }
  for (const auto& a : linear_) {
    const double s = a.eval(x);
    const double gc = 1.0 / s;
    if (a.terms.size() == 1) {  // box constraints stay scalar
      const auto [i, ci] = a.terms[0];
      grad[i] -= gc * ci;
      at(i, i) += gc * gc * ci * ci;
      continue;
    }
    for (const auto& [i, ci] : a.terms) grad[i] -= gc * ci;
    add_outer(a.terms, gc);
  }

  std::vector<std::pair<int, double>> va, vb;
  for (const auto& rc : rate_) {
    const double w = rc.w.eval(x);
    const double p2 = safe_exp2(w);
    const double g = rc.u.eval(x) - p2;
    const double d = kLn2 * p2;  // derivative factor of 2^w
    const int m = static_cast<int>(rc.support.size());
    va.clear();
    vb.clear();
    const double bcoef = kLn2 * std::sqrt(p2 / g);
    for (int i = 0; i < m; ++i) {
      const double dg = rc.coefs[i][0] - d * rc.coefs[i][1];
      grad[rc.support[i]] -= dg / g;
      if (dg != 0.0) va.emplace_back(rc.support[i], dg / g);
      if (rc.coefs[i][1] != 0.0) vb.emplace_back(rc.support[i], bcoef * rc.coefs[i][1]);
    }
    add_outer(va, 1.0);
    add_outer(vb, 1.0);
  }
  if (vq_cols > 0) {
    hess.topLeftCorner(np, np)
        .selfadjointView<Eigen::Lower>()
        .rankUpdate(vq.leftCols(vq_cols));
    hess.topLeftCorner(np, np)
        .triangularView<Eigen::StrictlyUpper>() =
        hess.topLeftCorner(np, np).transpose();
  }

  for (const auto& l : lmi_) {
    const double p = l.p.eval(x), q = l.q.eval(x), r = l.r.eval(x);
    const double det = p * r - q * q;
    const double d2 = det * det;
    // gradient and Hessian of -ln(p r - q^2) in (p, q, r)
    const double gp = -r / det, gq = 2.0 * q / det, gr = -p / det;
    const double hpp = r * r / d2, hqq = 2.0 / det + 4.0 * q * q / d2, hrr = p * p / d2;
    const double hpq = -2.0 * q * r / d2, hpr = q * q / d2, hqr = -2.0 * p * q / d2;
    const std::array<const AffExpr*, 3> e = {&l.p, &l.q, &l.r};
    const std::array<double, 3> gcoef = {gp, gq, gr};
    const double hmat[3][3] = {{hpp, hpq, hpr}, {hpq, hqq, hqr}, {hpr, hqr, hrr}};
    for (int a = 0; a < 3; ++a)
      for (const auto& [i, ci] : e[a]->terms) grad[i] += gcoef[a] * ci;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const double h = hmat[a][b];
        if (h == 0.0) continue;
        for (const auto& [i, ci] : e[a]->terms)
          for (const auto& [j, cj] : e[b]->terms) at(i, j) += h * ci * cj;
      }
  }

  // PSD blocks: -log det Q. With S = Q^{-1} and E_p the parameter basis,
  // grad_p = -tr(S E_p) and H_pq = Re tr(S E_p S E_q). Each S E_p has at most
  // two nonzero columns, all scaled columns of S, so every Hessian entry is a
  // four-term product.
  CMatrix qmat;
  struct Col {
    int col;
    Cdouble factor;
    int src;
  };
  std::vector<std::array<Col, 2>> cols;
  std::vector<int> ncols;
  for (const auto& b : psd_) {
    const int dim = b.dim;
    unpack_hermitian(x.data() + b.offset, dim, qmat);
    const CMatrix s = qmat.llt().solve(CMatrix::Identity(dim, dim));
    const int np = dim * dim;
    cols.assign(np, {});
    ncols.assign(np, 0);
    for (int i = 0; i < dim; ++i) {
      cols[i][0] = {i, Cdouble(1, 0), i};
      ncols[i] = 1;
      grad[b.offset + i] -= s(i, i).real();
    }
    int p = dim;
    for (int i = 0; i < dim; ++i)
      for (int j = i + 1; j < dim; ++j) {
        cols[p][0] = {j, Cdouble(1, 0), i};
        cols[p][1] = {i, Cdouble(1, 0), j};
        ncols[p] = 2;
        cols[p + 1][0] = {j, Cdouble(0, 1), i};
        cols[p + 1][1] = {i, Cdouble(0, -1), j};
        ncols[p + 1] = 2;
        grad[b.offset + p] -= 2.0 * s(i, j).real();
        grad[b.offset + p + 1] -= 2.0 * s(i, j).imag();
        p += 2;
      }
    for (int a = 0; a < np; ++a)
      for (int c = a; c < np; ++c) {
        Cdouble acc(0, 0);
        for (int ia = 0; ia < ncols[a]; ++ia)
          for (int ic = 0; ic < ncols[c]; ++ic) {
            const Col& ca = cols[a][ia];
            const Col& cc = cols[c][ic];
            // tr(W_a W_c) term: W_a col ca.col = ca.factor * S(:, ca.src)
            acc += ca.factor * cc.factor * s(cc.col, ca.src) * s(ca.col, cc.src);
          }
        const double v = acc.real();
        at(b.offset + a, b.offset + c) += v;
        if (c != a) at(b.offset + c, b.offset + a) += v;
      }
  }
}

// Partitioned Newton system for tail-eliminable variables: the full Hessian
// is [[A, B], [B^T, D]] with D = diag(d) + W W^T, so the direction comes from
// a dense solve on the Schur complement A - B D^{-1} B^T plus cheap
// back-substitution.
struct BarrierProblem::ArrowSystem {
  int core = 0;
  Eigen::MatrixXd hcore;
  Eigen::MatrixXd b;      // core x elim
  Eigen::VectorXd d;      // elim diagonal
  Eigen::MatrixXd w;      // elim x (#LMIs with eliminable tally entries)
};

void BarrierProblem::assemble_arrow(const Eigen::VectorXd& x, double t, Eigen::VectorXd& grad,
                                    ArrowSystem& sys) const {
  const int off = elim_offset_;
  const int ne = elim_count_;
  const int nc = off;
  sys.core = nc;
  grad.setZero(num_vars_);
  sys.hcore.setZero(nc, nc);
  sys.b.setZero(nc, ne);
  sys.d.setZero(ne);
  int lcols = 0;
  for (const auto& l : lmi_)
    for (const auto& [idx, c] : l.r.terms)
      if (idx >= off) {
        ++lcols;
        break;
      }
  sys.w.setZero(ne, lcols);

  auto add2 = [&](int i, int j, double v) {
    if (i < off) {
      if (j < off)
        sys.hcore(i, j) += v;
      else
        sys.b(i, j - off) += v;
    } else if (i == j) {
      sys.d(i - off) += v;
    }
    // (elim, core) pairs are the mirror of (core, elim); dropped here
  };

  int np = 0;
  for (const auto& b : psd_) np = std::max(np, b.offset + b.dim * b.dim);
  Eigen::MatrixXd vq(np, 2 * rate_.size() + linear_.size() + log_objective_.size());
  int vq_cols = 0;
  std::vector<std::pair<int, double>> rest;
  auto add_outer = [&](const std::vector<std::pair<int, double>>& terms, double scale) {
    rest.clear();
    double* col = vq.col(vq_cols).data();
    std::fill(col, col + np, 0.0);
    bool any_prefix = false;
    for (const auto& [idx, c] : terms) {
      if (idx < np) {
        col[idx] = scale * c;
        any_prefix = true;
      } else {
        rest.emplace_back(idx, scale * c);
      }
    }
    for (size_t a = 0; a < rest.size(); ++a) {
      for (size_t b = 0; b < rest.size(); ++b)
        add2(rest[a].first, rest[b].first, rest[a].second * rest[b].second);
      if (any_prefix) {
        const auto [ri, rv] = rest[a];
        for (int i = 0; i < np; ++i) {
          if (col[i] == 0.0) continue;
          add2(i, ri, col[i] * rv);
          add2(ri, i, col[i] * rv);
        }
      }
    }
    if (any_prefix) ++vq_cols;
  };

  for (const auto& [idx, c] : objective_.terms) grad[idx] -= t * c;
  for (const auto& a : log_objective_) {
    const double v = a.eval(x);
    const double gc = t / v;
    for (const auto& [i, ci] : a.terms) grad[i] -= gc * ci;
    add_outer(a.terms, std::sqrt(t) / v);
  }
  for (const auto& a : linear_) {
    const double s = a.eval(x);
    const double gc = 1.0 / s;
    if (a.terms.size() == 1) {
      const auto [i, ci] = a.terms[0];
      grad[i] -= gc * ci;
      add2(i, i, gc * gc * ci * ci);
      continue;
    }
    for (const auto& [i, ci] : a.terms) grad[i] -= gc * ci;
    add_outer(a.terms, gc);
  }
  std::vector<std::pair<int, double>> va, vb;
  for (const auto& rc : rate_) {
    const double wv = rc.w.eval(x);
    const double p2 = safe_exp2(wv);
    const double g = rc.u.eval(x) - p2;
    const double dfac = kLn2 * p2;
    const int m = static_cast<int>(rc.support.size());
    va.clear();
    vb.clear();
    const double bcoef = kLn2 * std::sqrt(p2 / g);
    for (int i = 0; i < m; ++i) {
      const double dg = rc.coefs[i][0] - dfac * rc.coefs[i][1];
      grad[rc.support[i]] -= dg / g;
      if (dg != 0.0) va.emplace_back(rc.support[i], dg / g);
      if (rc.coefs[i][1] != 0.0) vb.emplace_back(rc.support[i], bcoef * rc.coefs[i][1]);
    }
    add_outer(va, 1.0);
    add_outer(vb, 1.0);
  }
  if (vq_cols > 0) {
    sys.hcore.topLeftCorner(np, np)
        .selfadjointView<Eigen::Lower>()
        .rankUpdate(vq.leftCols(vq_cols));
    sys.hcore.topLeftCorner(np, np)
        .triangularView<Eigen::StrictlyUpper>() =
        sys.hcore.topLeftCorner(np, np).transpose();
  }
  int wcol = 0;
  for (const auto& l : lmi_) {
    const double p = l.p.eval(x), q = l.q.eval(x), r = l.r.eval(x);
    const double det = p * r - q * q;
    const double d2 = det * det;
    const double gp = -r / det, gq = 2.0 * q / det, gr = -p / det;
    const double hpp = r * r / d2, hqq = 2.0 / det + 4.0 * q * q / d2, hrr = p * p / d2;
    const double hpq = -2.0 * q * r / d2, hpr = q * q / d2, hqr = -2.0 * p * q / d2;
    const std::array<const AffExpr*, 3> e = {&l.p, &l.q, &l.r};
    const std::array<double, 3> gcoef = {gp, gq, gr};
    const double hmat[3][3] = {{hpp, hpq, hpr}, {hpq, hqq, hqr}, {hpr, hqr, hrr}};
    for (int a = 0; a < 3; ++a)
      for (const auto& [i, ci] : e[a]->terms) grad[i] += gcoef[a] * ci;
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 3; ++c) {
        const double h = hmat[a][c];
        if (h == 0.0) continue;
        const bool both_r = (a == 2 && c == 2);
        for (const auto& [i, ci] : e[a]->terms)
          for (const auto& [j, cj] : e[c]->terms) {
            if (both_r && i >= off && j >= off) continue;  // captured as low rank
            add2(i, j, h * ci * cj);
          }
      }
    bool has_elim = false;
    for (const auto& [idx, c] : l.r.terms)
      if (idx >= off) {
        sys.w(idx - off, wcol) = std::sqrt(hrr) * c;
        has_elim = true;
      }
    if (has_elim) ++wcol;
  }

  CMatrix qmat;
  struct Col {
    int col;
    Cdouble factor;
    int src;
  };
  std::vector<std::array<Col, 2>> cols;
  std::vector<int> ncols;
  for (const auto& blk : psd_) {
    const int dim = blk.dim;
    unpack_hermitian(x.data() + blk.offset, dim, qmat);
    const CMatrix s = qmat.llt().solve(CMatrix::Identity(dim, dim));
    const int np = dim * dim;
    cols.assign(np, {});
    ncols.assign(np, 0);
    for (int i = 0; i < dim; ++i) {
      cols[i][0] = {i, Cdouble(1, 0), i};
      ncols[i] = 1;
      grad[blk.offset + i] -= s(i, i).real();
    }
    int p = dim;
    for (int i = 0; i < dim; ++i)
      for (int j = i + 1; j < dim; ++j) {
        cols[p][0] = {j, Cdouble(1, 0), i};
        cols[p][1] = {i, Cdouble(1, 0), j};
        ncols[p] = 2;
        cols[p + 1][0] = {j, Cdouble(0, 1), i};
        cols[p + 1][1] = {i, Cdouble(0, -1), j};
        ncols[p + 1] = 2;
        grad[blk.offset + p] -= 2.0 * s(i, j).real();
        grad[blk.offset + p + 1] -= 2.0 * s(i, j).imag();
        p += 2;
      }
    for (int a = 0; a < np; ++a)
      for (int c = a; c < np; ++c) {
        Cdouble acc(0, 0);
        for (int ia = 0; ia < ncols[a]; ++ia)
          for (int ic = 0; ic < ncols[c]; ++ic) {
            const Col& ca = cols[a][ia];
            const Col& cc = cols[c][ic];
            acc += ca.factor * cc.factor * s(cc.col, ca.src) * s(ca.col, cc.src);
          }
        const double v = acc.real();
        sys.hcore(blk.offset + a, blk.offset + c) += v;
        if (c != a) sys.hcore(blk.offset + c, blk.offset + a) += v;
      }
  }
}

namespace {

Eigen::VectorXd spd_ridge_solve(Eigen::MatrixXd& m, const Eigen::VectorXd& rhs) {
  double ridge = 0.0;
  const double scale = std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
  for (int attempt = 0; attempt < 7; ++attempt) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() == Eigen::Success) {
      Eigen::VectorXd d = ldlt.solve(rhs);
      if (d.allFinite()) return d;
    }
    ridge = (ridge == 0.0) ? 1e-12 * scale : ridge * 100.0;
    m.diagonal().array() += ridge;
  }
  return rhs;  // vetted by the caller's descent check
}

Eigen::VectorXd newton_direction(Eigen::MatrixXd& hess, const Eigen::VectorXd& grad) {
  double ridge = 0.0;
  const double scale = std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
  for (int attempt = 0; attempt < 7; ++attempt) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() == Eigen::Success) {
      Eigen::VectorXd d = ldlt.solve(-grad);
      if (d.allFinite() && -grad.dot(d) > 0.0) return d;
    }
    ridge = (ridge == 0.0) ? 1e-12 * scale : ridge * 100.0;
    hess.diagonal().array() += ridge;
  }
  return -grad;  // steepest descent fallback
}

}  // namespace

SolveReport BarrierProblem::solve(Eigen::VectorXd& x, const SolveOptions& opt,
                                  const StageCallback& cb) const {
  if (!strictly_feasible(x))
    throw std::runtime_error("barrier solve started from an infeasible point");
  const int n = num_vars_;
  const bool arrow = elim_count_ > 0;
  if (arrow && elim_offset_ + elim_count_ != n)
    throw std::logic_error("eliminable range must be the variable tail");
  const double nu = barrier_nu();
  Eigen::VectorXd grad(n), xn(n);
  Eigen::MatrixXd hess;
  if (!arrow) hess.resize(n, n);
  ArrowSystem sys;
  double t = opt.t0;
  int iters = 0;
  bool budget_hit = false;

  auto arrow_direction = [&]() {
    const int off = elim_offset_, ne = elim_count_;
    const int lcols = static_cast<int>(sys.w.cols());
    const Eigen::ArrayXd dinv = sys.d.array().inverse();
    if (!dinv.isFinite().all())
      throw std::logic_error("eliminable variable without a diagonal barrier term");
    Eigen::MatrixXd dw;
    Eigen::LDLT<Eigen::MatrixXd> mldlt;
    if (lcols > 0) {
      dw = dinv.matrix().asDiagonal() * sys.w;
      Eigen::MatrixXd m = Eigen::MatrixXd::Identity(lcols, lcols) + sys.w.transpose() * dw;
      mldlt.compute(m);
    }
    auto dinv_apply = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd r = (dinv * v.array()).matrix();
      if (lcols > 0) r.noalias() -= dw * mldlt.solve(dw.transpose() * v);
      return r;
    };
    Eigen::MatrixXd schur = sys.hcore;
    {
      const Eigen::MatrixXd bs = sys.b * dinv.sqrt().matrix().asDiagonal();
      schur.noalias() -= bs * bs.transpose();
      if (lcols > 0) {
        const Eigen::MatrixXd bdw = sys.b * dw;
        schur.noalias() += bdw * mldlt.solve(bdw.transpose());
      }
    }
    const Eigen::VectorXd gt = grad.tail(ne);
    Eigen::VectorXd rhs = -grad.head(off);
    rhs.noalias() += sys.b * dinv_apply(gt);
    Eigen::VectorXd dir(n);
    dir.head(off) = spd_ridge_solve(schur, rhs);
    dir.tail(ne) = -dinv_apply(gt + sys.b.transpose() * dir.head(off));
    return dir;
  };

  // Intermediate stages only need rough centering; the reported certificate
  // relies on the final stage, which is polished tight.
  // Returns whether the decrement tolerance was actually reached; bounds
  // derived from the centered point are only trusted then.
  auto center = [&](double tol) -> bool {
    for (int inner = 0; inner < 60; ++inner) {
      if (iters >= opt.max_newton) {
        budget_hit = true;
        return false;
      }
      Eigen::VectorXd dir;
      if (arrow) {
        assemble_arrow(x, t, grad, sys);
        dir = arrow_direction();
      } else {
        assemble(x, t, grad, hess);
        dir = newton_direction(hess, grad);
      }
      const double lambda2 = -grad.dot(dir);
      if (!(lambda2 > tol)) return true;  // centered
      double phi0 = 0.0;
      eval_phi(x, t, &phi0);
      double sigma = 1.0;
      bool accepted = false;
      for (int trial = 0; trial < 70; ++trial) {
        xn = x + sigma * dir;
        double phin = 0.0;
        if (eval_phi(xn, t, &phin) && phin <= phi0 - 0.25 * sigma * lambda2) {
          x.swap(xn);
          accepted = true;
          break;
        }
        sigma *= 0.5;
      }
      ++iters;
      if (!accepted) return lambda2 <= 1e4 * tol;  // numerical floor for this stage
    }
    return false;
  };

  // duality-gap bound with slack for approximate centering (valid for
  // Newton decrements below one)
  const double gap_nu = nu + std::sqrt(nu);
  for (int stage = 0; stage < 64 && !budget_hit; ++stage) {
    const bool centered = center(1e-5);
    if (budget_hit) break;
    const double obj = objective_value(x);
    const double ub =
        centered ? obj + gap_nu / t : std::numeric_limits<double>::infinity();
    const double target = std::max(opt.gap_abs, opt.gap_rel * (1.0 + std::abs(obj)));
    const bool done = gap_nu / t <= target;
    const bool stop = cb && cb(obj, ub) == StageAction::stop;
    if (done || stop) {
      center(1e-10);
      break;
    }
    t = std::min(t * opt.mu, 1.0001 * gap_nu / target);  // land on the target gap
  }

  SolveReport rep;
  rep.objective = objective_value(x);
  rep.certificate = (nu + std::sqrt(nu)) / t;
  rep.newton_iters = iters;
  rep.status = rep.certificate <= opt.optimal_rel * (1.0 + std::abs(rep.objective))
                   ? SolveStatus::optimal
                   : SolveStatus::max_iter;
  return rep;
}

namespace {

void dump_expr(std::ostream& os, const AffExpr& a) {
  os << a.constant;
  for (const auto& [idx, c] : a.terms) os << ' ' << idx << ':' << c;
}

}  // namespace

void BarrierProblem::dump(std::ostream& os) const {
  os << "mcast-conic-problem v1\n";
  os << "vars " << num_vars_ << "\n";
  os << "objective ";
  dump_expr(os, objective_);
  os << "\n";
  for (const auto& a : log_objective_) {
    os << "log-objective ";
    dump_expr(os, a);
    os << "\n";
  }
  for (const auto& b : psd_) os << "psd " << b.offset << ' ' << b.dim << "\n";
  for (const auto& a : linear_) {
    os << "linear ";
    dump_expr(os, a);
    os << "\n";
  }
  for (const auto& rc : rate_) {
    os << "rate u ";
    dump_expr(os, rc.u);
    os << " w ";
    dump_expr(os, rc.w);
    os << "\n";
  }
  for (const auto& l : lmi_) {
    os << "lmi2 p ";
    dump_expr(os, l.p);
    os << " q ";
    dump_expr(os, l.q);
    os << " r ";
    dump_expr(os, l.r);
    os << "\n";
  }
}

// ---------------------------------------------------------------------------
// Wrappers
// ---------------------------------------------------------------------------

namespace {

CVector compact_of_stacked(const CVector& full, const std::vector<int>& serving, int antennas) {
  CVector out(static_cast<Eigen::Index>(serving.size()) * antennas);
  for (int i = 0; i < static_cast<int>(serving.size()); ++i)
    out.segment(i * antennas, antennas) = full.segment(serving[i] * antennas, antennas);
  return out;
}

std::vector<int> all_bs(int num_bs) {
  std::vector<int> v(num_bs);
  for (int b = 0; b < num_bs; ++b) v[b] = b;
  return v;
}

// Per-BS cap P_b - sum of diagonal params of that BS's rows, over all groups
// whose compact block contains the BS.
void add_power_constraints(BarrierProblem& bp, const std::vector<int>& offsets,
                           const std::vector<std::vector<int>>& serving, int antennas,
                           const RVector& powers) {
  const int num_bs = static_cast<int>(powers.size());
  for (int b = 0; b < num_bs; ++b) {
    AffExpr cap(powers[b]);
    for (int g = 0; g < static_cast<int>(serving.size()); ++g) {
      auto it = std::find(serving[g].begin(), serving[g].end(), b);
      if (it == serving[g].end()) continue;
      const int local = static_cast<int>(it - serving[g].begin());
      for (int m = 0; m < antennas; ++m) cap.add(offsets[g] + local * antennas + m, -1.0);
    }
    bp.add_linear(std::move(cap));
  }
}

CovarianceSet covs_from_params(const Eigen::VectorXd& x, const std::vector<int>& offsets,
                               const std::vector<std::vector<int>>& serving, int num_bs,
                               int antennas) {
  CovarianceSet cs;
  cs.num_bs = num_bs;
  cs.antennas = antennas;
  cs.serving = serving;
  for (int g = 0; g < static_cast<int>(serving.size()); ++g) {
    const int dim = antennas * static_cast<int>(serving[g].size());
    CMatrix q;
    BarrierProblem::unpack_hermitian(x.data() + offsets[g], dim, q);
    cs.blocks.push_back(std::move(q));
  }
  return cs;
}

void require_verified(const BarrierProblem& bp, const Eigen::VectorXd& x) {
  if (bp.max_violation(x) > 1e-6)
    throw std::runtime_error("solver output failed constraint re-verification");
}

}  // namespace

CovarianceSet uniform_power_point(const Scenario& sc, double fraction) {
  CovarianceSet cs = CovarianceSet::zero(sc);
  const auto served = sc.served_groups();
  for (int g = 0; g < sc.num_groups(); ++g) {
    const auto& srv = sc.serving_bs[g];
    for (int i = 0; i < static_cast<int>(srv.size()); ++i) {
      const int b = srv[i];
      const double v = fraction * sc.powers[b] / (sc.antennas * served[b].size());
      for (int m = 0; m < sc.antennas; ++m)
        cs.blocks[g](i * sc.antennas + m, i * sc.antennas + m) = v;
    }
  }
  return cs;
}

FixedSubsetResult solve_fixed_subset_grm(const ChannelSet& ch, const std::vector<int>& subset,
                                         const RVector& powers, const SolveOptions& opt) {
  if (subset.empty()) throw std::invalid_argument("fixed-subset solve needs a nonempty subset");
  const int M = ch.antennas, B = ch.num_bs;
  const int dim = M * B;
  const std::vector<std::vector<int>> serving = {all_bs(B)};

  BarrierProblem bp;
  const int qoff = bp.add_psd_block(dim);
  const int tvar = bp.add_vars(1);
  for (int k : subset) {
    const CVector hk = ch.stacked(k);
    AffExpr a = BarrierProblem::trace_expr(qoff, hk * hk.adjoint());
    a.add(tvar, -1.0);
    bp.add_linear(std::move(a));
  }
  add_power_constraints(bp, {qoff}, serving, M, powers);
  AffExpr obj;
  obj.add(tvar, 1.0);
  bp.set_objective(std::move(obj));

  Eigen::VectorXd x = Eigen::VectorXd::Zero(bp.num_vars());
  double min_tr = std::numeric_limits<double>::infinity();
  for (int k : subset) {
    double tr = 0.0;
    for (int b = 0; b < B; ++b) tr += powers[b] / (2.0 * M) * ch.bs_gain(b, k);
    min_tr = std::min(min_tr, tr);
  }
  FixedSubsetResult res;
  if (!(min_tr > 0.0)) {
    // A zero-channel user pins the threshold at zero; no solve needed.
    res.covs = covs_from_params(x, {qoff}, serving, B, M);
    res.threshold = 0.0;
    res.rate = 0.0;
    res.report = {SolveStatus::optimal, 0.0, 0.0, 0};
    return res;
  }
  for (int b = 0; b < B; ++b)
    for (int m = 0; m < M; ++m) x[qoff + b * M + m] = powers[b] / (2.0 * M);
  x[tvar] = 0.5 * min_tr;

  res.report = bp.solve(x, opt);
  require_verified(bp, x);
  res.covs = covs_from_params(x, {qoff}, serving, B, M);
  res.threshold = x[tvar];
  res.rate = std::log2(1.0 + res.threshold);
  return res;
}

RateOffsetResult solve_rate_offset_grm(const ChannelSet& ch, const std::vector<int>& users,
                                       const std::vector<double>& offsets, const RVector& powers,
                                       const SolveOptions& opt) {
  if (users.empty()) throw std::invalid_argument("rate-offset solve needs users");
  if (users.size() != offsets.size()) throw std::invalid_argument("offset count mismatch");
  const int M = ch.antennas, B = ch.num_bs;
  const int dim = M * B;
  const std::vector<std::vector<int>> serving = {all_bs(B)};

  BarrierProblem bp;
  const int qoff = bp.add_psd_block(dim);
  const int rvar = bp.add_vars(1);
  for (int i = 0; i < static_cast<int>(users.size()); ++i) {
    const CVector hk = ch.stacked(users[i]);
    AffExpr u = BarrierProblem::trace_expr(qoff, hk * hk.adjoint());
    u.constant += 1.0;
    AffExpr w(-offsets[i]);
    w.add(rvar, 1.0);
    bp.add_rate(std::move(u), std::move(w));
  }
  add_power_constraints(bp, {qoff}, serving, M, powers);
  AffExpr obj;
  obj.add(rvar, 1.0);
  bp.set_objective(std::move(obj));

  Eigen::VectorXd x = Eigen::VectorXd::Zero(bp.num_vars());
  for (int b = 0; b < B; ++b)
    for (int m = 0; m < M; ++m) x[qoff + b * M + m] = powers[b] / (2.0 * M);
  double r0 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(users.size()); ++i) {
    double tr = 0.0;
    for (int b = 0; b < B; ++b) tr += powers[b] / (2.0 * M) * ch.bs_gain(b, users[i]);
    r0 = std::min(r0, std::log2(1.0 + tr) + offsets[i]);
  }
  x[rvar] = r0 - 1.0;

  RateOffsetResult res;
  res.report = bp.solve(x, opt);
  require_verified(bp, x);
  res.covs = covs_from_params(x, {qoff}, serving, B, M);
  res.rate = x[rvar];
  return res;
}

RelaxedGrmResult solve_relaxed_grm(const ChannelSet& ch, const std::vector<int>& users,
                                   const RVector& powers, double delta, const SolveOptions& opt) {
  if (delta <= 0.0) throw std::invalid_argument("delta must be positive");
  if (users.empty()) throw std::invalid_argument("relaxed solve needs users");
  const int M = ch.antennas, B = ch.num_bs;
  const int dim = M * B;
  const double inv_delta = 1.0 / delta;
  const std::vector<std::vector<int>> serving = {all_bs(B)};

  BarrierProblem bp;
  const int qoff = bp.add_psd_block(dim);
  const int rvar = bp.add_vars(1);
  const int soff = bp.add_vars(static_cast<int>(users.size()));
  AffExpr ssum;
  for (int i = 0; i < static_cast<int>(users.size()); ++i) {
    const CVector hk = ch.stacked(users[i]);
    AffExpr u = BarrierProblem::trace_expr(qoff, hk * hk.adjoint());
    u.constant += 1.0;
    AffExpr w(-inv_delta);
    w.add(rvar, 1.0).add(soff + i, inv_delta);
    bp.add_rate(std::move(u), std::move(w));
    AffExpr lo;
    lo.add(soff + i, 1.0);
    bp.add_linear(std::move(lo));
    AffExpr hi(1.0);
    hi.add(soff + i, -1.0);
    bp.add_linear(std::move(hi));
    ssum.add(soff + i, 1.0);
  }
  add_power_constraints(bp, {qoff}, serving, M, powers);
  AffExpr rlog;
  rlog.add(rvar, 1.0);
  bp.add_log_objective(std::move(rlog));
  bp.add_log_objective(std::move(ssum));

  Eigen::VectorXd x = Eigen::VectorXd::Zero(bp.num_vars());
  for (int b = 0; b < B; ++b)
    for (int m = 0; m < M; ++m) x[qoff + b * M + m] = powers[b] / (2.0 * M);
  for (int i = 0; i < static_cast<int>(users.size()); ++i) x[soff + i] = 0.5;
  x[rvar] = inv_delta / 4.0;

  RelaxedGrmResult res;
  res.report = bp.solve(x, opt);
  require_verified(bp, x);
  res.covs = covs_from_params(x, {qoff}, serving, B, M);
  res.rate = x[rvar];
  res.s.resize(users.size());
  for (int i = 0; i < static_cast<int>(users.size()); ++i) res.s[i] = x[soff + i];
  res.objective = res.report.objective;
  return res;
}

MarginResult grb_feasibility(const FeasibilityInstance& inst, const SolveOptions& opt,
                             bool early_exit, const CovarianceSet* warm) {
  const Scenario& sc = *inst.scenario;
  const ChannelSet& ch = *inst.channels;
  const int G = sc.num_groups();
  MarginResult res;
  if (inst.alpha <= 0.0) {
    // Zero rates are achievable with zero covariances.
    res.feasible = true;
    res.margin = 0.0;
    res.covs = CovarianceSet::zero(sc);
    res.report = {SolveStatus::optimal, 0.0, 0.0, 0};
    return res;
  }

  BarrierProblem bp;
  std::vector<int> offsets(G);
  for (int g = 0; g < G; ++g)
    bp.add_psd_block(sc.antennas * static_cast<int>(sc.serving_bs[g].size()));
  // offsets follow block registration order
  {
    int off = 0;
    for (int g = 0; g < G; ++g) {
      offsets[g] = off;
      const int d = sc.antennas * static_cast<int>(sc.serving_bs[g].size());
      off += d * d;
    }
  }
  const int mvar = bp.add_vars(1);

  auto add_margin_constraint = [&](int g, const CVector& stacked) {
    const double gamma = std::exp2(inst.tau_prime[g] * inst.alpha) - 1.0;
    AffExpr a = BarrierProblem::trace_expr(
        offsets[g], [&] {
          const CVector hc = compact_of_stacked(stacked, sc.serving_bs[g], sc.antennas);
          return CMatrix(hc * hc.adjoint());
        }());
    for (int l = 0; l < G; ++l) {
      if (l == g) continue;
      const CVector hl = compact_of_stacked(stacked, sc.serving_bs[l], sc.antennas);
      a.append(BarrierProblem::trace_expr(offsets[l], hl * hl.adjoint()), -gamma);
    }
    a.constant -= gamma;
    a.add(mvar, -1.0);
    bp.add_linear(std::move(a));
  };
  for (int g = 0; g < G; ++g) {
    for (int k : inst.subsets[g]) add_margin_constraint(g, ch.stacked(k));
    if (g < static_cast<int>(inst.virtuals.size()))
      for (const auto& ve : inst.virtuals[g]) add_margin_constraint(g, ve.channel);
  }
  add_power_constraints(bp, offsets, sc.serving_bs, sc.antennas, sc.powers);
  AffExpr obj;
  obj.add(mvar, 1.0);
  bp.set_objective(std::move(obj));

  Eigen::VectorXd x = Eigen::VectorXd::Zero(bp.num_vars());
  CovarianceSet start = uniform_power_point(sc, 0.5);
  if (warm && warm->num_groups() == G) {
    for (int g = 0; g < G; ++g)
      if (warm->blocks[g].rows() == start.blocks[g].rows())
        start.blocks[g] = 0.9 * warm->blocks[g] + 0.1 * start.blocks[g];
  }
  for (int g = 0; g < G; ++g) {
    const int d = static_cast<int>(start.blocks[g].rows());
    BarrierProblem::pack_hermitian(start.blocks[g], d, x.data() + offsets[g]);
  }
  // Start the margin strictly below every constraint body.
  bool any_constraint = false;
  double min_lhs = std::numeric_limits<double>::infinity();
  for (int g = 0; g < G; ++g) {
    const double gamma = std::exp2(inst.tau_prime[g] * inst.alpha) - 1.0;
    auto lhs_of = [&](const CVector& stacked) {
      double sig = quad_form(start.blocks[g],
                             compact_of_stacked(stacked, sc.serving_bs[g], sc.antennas));
      double intf = 0.0;
      for (int l = 0; l < G; ++l) {
        if (l == g) continue;
        intf += quad_form(start.blocks[l],
                          compact_of_stacked(stacked, sc.serving_bs[l], sc.antennas));
      }
      return sig - gamma * (intf + 1.0);
    };
    for (int k : inst.subsets[g]) min_lhs = std::min(min_lhs, lhs_of(ch.stacked(k)));
    if (g < static_cast<int>(inst.virtuals.size()))
      for (const auto& ve : inst.virtuals[g]) min_lhs = std::min(min_lhs, lhs_of(ve.channel));
    any_constraint = any_constraint || !inst.subsets[g].empty() ||
                     (g < static_cast<int>(inst.virtuals.size()) && !inst.virtuals[g].empty());
  }
  if (!any_constraint) {
    res.feasible = true;
    res.margin = std::numeric_limits<double>::infinity();
    res.covs = start;
    res.report = {SolveStatus::optimal, 0.0, 0.0, 0};
    return res;
  }
  x[mvar] = min_lhs - std::max(1.0, 0.5 * std::abs(min_lhs));

  BarrierProblem::StageCallback cb;
  if (early_exit) {
    cb = [](double objv, double ub) {
      if (objv > 1e-12 || ub <= 0.0) return BarrierProblem::StageAction::stop;
      return BarrierProblem::StageAction::proceed;
    };
  }
  res.report = bp.solve(x, opt, cb);
  res.margin = x[mvar];
  res.feasible = res.margin > 0.0;
  if (res.feasible) {
    require_verified(bp, x);
    res.covs = covs_from_params(x, offsets, sc.serving_bs, sc.num_bs, sc.antennas);
  }
  return res;
}

ScaResult solve_sca_subproblem(const ScaInstance& inst, const CovarianceSet& expansion,
                               const SolveOptions& opt, const ScaResult* warm,
                               double warm_gap) {
  const Scenario& sc = *inst.scenario;
  const ChannelSet& ch = *inst.channels;
  const int G = sc.num_groups();
  if (inst.delta <= 0.0) throw std::invalid_argument("delta must be positive");
  try {
    expansion.validate(sc.powers, 1e-6);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("infeasible expansion point: ") + e.what());
  }
  const double inv_delta = 1.0 / inst.delta;

  struct UserCon {
    int group;
    CVector stacked;
    int var;  // selection variable index
  };
  BarrierProblem bp;
  std::vector<int> offsets(G);
  {
    int off = 0;
    for (int g = 0; g < G; ++g) {
      offsets[g] = off;
      const int d = sc.antennas * static_cast<int>(sc.serving_bs[g].size());
      bp.add_psd_block(d);
      off += d * d;
    }
  }
  const int roff = bp.add_vars(G);
  const int avar = bp.add_vars(1);
  std::vector<std::vector<int>> svars(G), tvars(G);
  for (int g = 0; g < G; ++g) {
    svars[g].resize(inst.active[g].size());
    for (auto& v : svars[g]) v = bp.add_vars(1);
    if (g < static_cast<int>(inst.virtuals.size())) {
      tvars[g].resize(inst.virtuals[g].size());
      for (auto& v : tvars[g]) v = bp.add_vars(1);
    }
  }

  auto interference_at = [&](const CVector& stacked, int g, const CovarianceSet& covs) {
    double intf = 0.0;
    for (int l = 0; l < G; ++l) {
      if (l == g) continue;
      intf +=
          quad_form(covs.blocks[l], compact_of_stacked(stacked, sc.serving_bs[l], sc.antennas));
    }
    return intf;
  };

  auto add_sca_rate = [&](int g, const CVector& stacked, int sel_var) {
    const double ck = 1.0 + interference_at(stacked, g, expansion);
    AffExpr u(1.0);
    AffExpr w(std::log2(ck) - inv_delta);
    for (int l = 0; l < G; ++l) {
      const CVector hl = compact_of_stacked(stacked, sc.serving_bs[l], sc.antennas);
      const CMatrix hmat = hl * hl.adjoint();
      u.append(BarrierProblem::trace_expr(offsets[l], hmat));
      if (l != g) {
        const double tr_tilde = quad_form(expansion.blocks[l], hl);
        w.append(BarrierProblem::trace_expr(offsets[l], hmat), 1.0 / (ck * kLn2));
        w.constant -= tr_tilde / (ck * kLn2);
      }
    }
    w.add(roff + g, 1.0).add(sel_var, inv_delta);
    bp.add_rate(std::move(u), std::move(w));
    AffExpr lo;
    lo.add(sel_var, 1.0);
    bp.add_linear(std::move(lo));
    AffExpr hi(1.0);
    hi.add(sel_var, -1.0);
    bp.add_linear(std::move(hi));
  };

  for (int g = 0; g < G; ++g) {
    for (int i = 0; i < static_cast<int>(inst.active[g].size()); ++i)
      add_sca_rate(g, ch.stacked(inst.active[g][i]), svars[g][i]);
    if (g < static_cast<int>(inst.virtuals.size()))
      for (int i = 0; i < static_cast<int>(inst.virtuals[g].size()); ++i)
        add_sca_rate(g, inst.virtuals[g][i].channel, tvars[g][i]);
  }

  // Per-group Schur LMI [[R_g, a*sqrt(tau''_g)], [., tally_g]] >= 0 with
  // tau''_g = tau_g * |K_g| and tally the weighted selection sum.
  for (int g = 0; g < G; ++g) {
    const double tau2 = sc.priorities[g] * static_cast<double>(sc.groups[g].size());
    AffExpr p;
    p.add(roff + g, 1.0);
    AffExpr q;
    q.add(avar, std::sqrt(tau2));
    AffExpr r;
    for (int v : svars[g]) r.add(v, 1.0);
    if (g < static_cast<int>(inst.virtuals.size()))
      for (int i = 0; i < static_cast<int>(inst.virtuals[g].size()); ++i)
        r.add(tvars[g][i], inst.virtuals[g][i].weight);
    if (r.terms.empty())
      throw std::invalid_argument("group without active or sampled users in SCA subproblem");
    bp.add_lmi2(std::move(p), std::move(q), std::move(r));
  }
  add_power_constraints(bp, offsets, sc.serving_bs, sc.antennas, sc.powers);
  AffExpr obj;
  obj.add(avar, 1.0);
  bp.set_objective(std::move(obj));
  // Selection variables sit at the tail and carry the arrow structure.
  if (bp.num_vars() > avar + 1) bp.mark_eliminable(avar + 1, bp.num_vars() - avar - 1);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(bp.num_vars());
  const CovarianceSet base = uniform_power_point(sc, 0.5);
  SolveOptions run_opt = opt;

  // A structurally matching previous solution seeds the path near the
  // optimum with a raised initial barrier parameter.
  bool ok = false;
  if (warm && warm->covs.num_groups() == G) {
    bool shapes = static_cast<int>(warm->rates.size()) == G;
    for (int g = 0; shapes && g < G; ++g)
      shapes = warm->s[g].size() == inst.active[g].size() &&
               warm->t[g].size() ==
                   (g < static_cast<int>(inst.virtuals.size()) ? inst.virtuals[g].size() : 0);
    if (shapes) {
      for (int g = 0; g < G; ++g) {
        CMatrix q0 = 0.95 * warm->covs.blocks[g] + 0.05 * base.blocks[g];
        BarrierProblem::pack_hermitian(q0, static_cast<int>(q0.rows()), x.data() + offsets[g]);
        x[roff + g] = std::max(1e-8, 0.999 * warm->rates[g]);
        for (int i = 0; i < static_cast<int>(svars[g].size()); ++i)
          x[svars[g][i]] = 0.02 + 0.96 * std::clamp(warm->s[g][i], 0.0, 1.0);
        for (int i = 0; i < static_cast<int>(tvars[g].size()); ++i)
          x[tvars[g][i]] = 0.02 + 0.96 * std::clamp(warm->t[g][i], 0.0, 1.0);
      }
      x[avar] = 0.98 * warm->alpha;
      if (bp.strictly_feasible(x)) {
        ok = true;
        const double gap0 =
            std::clamp(warm_gap, 1e-6, 0.05 * (1.0 + std::abs(warm->alpha)));
        run_opt.t0 = std::max(opt.t0, bp.barrier_nu() / gap0);
      }
    }
  }
  for (double beta : {1e-3, 1e-5, 1e-8}) {
    if (ok) break;
    for (double s0 : {0.5, 0.05}) {
      CovarianceSet q0 = expansion;
      for (int g = 0; g < G; ++g)
        q0.blocks[g] = (1.0 - beta) * expansion.blocks[g] + beta * base.blocks[g];
      double head = std::numeric_limits<double>::infinity();
      for (int g = 0; g < G; ++g) {
        auto headroom = [&](const CVector& stacked) {
          return rbar(q0, expansion, stacked, g) + inv_delta * (1.0 - s0);
        };
        for (int k : inst.active[g]) head = std::min(head, headroom(ch.stacked(k)));
        if (g < static_cast<int>(inst.virtuals.size()))
          for (const auto& ve : inst.virtuals[g]) head = std::min(head, headroom(ve.channel));
      }
      if (!(head > 1e-9)) continue;
      const double r0 = std::min(inv_delta / 4.0, head / 2.0);
      for (int g = 0; g < G; ++g) {
        const int d = static_cast<int>(q0.blocks[g].rows());
        BarrierProblem::pack_hermitian(q0.blocks[g], d, x.data() + offsets[g]);
        x[roff + g] = r0;
        for (int v : svars[g]) x[v] = s0;
        for (int v : tvars[g]) x[v] = s0;
      }
      double alpha0 = std::numeric_limits<double>::infinity();
      for (int g = 0; g < G; ++g) {
        const double tau2 = sc.priorities[g] * static_cast<double>(sc.groups[g].size());
        double tally = s0 * static_cast<double>(inst.active[g].size());
        if (g < static_cast<int>(inst.virtuals.size()))
          for (const auto& ve : inst.virtuals[g]) tally += s0 * ve.weight;
        alpha0 = std::min(alpha0, 0.5 * std::sqrt(r0 * tally / tau2));
      }
      x[avar] = alpha0;
      if (bp.strictly_feasible(x)) {
        ok = true;
        break;
      }
    }
    if (ok) break;
  }
  if (!ok) throw std::runtime_error("could not construct an interior start for SCA subproblem");

  ScaResult res;
  res.report = bp.solve(x, run_opt);
  require_verified(bp, x);
  res.covs = covs_from_params(x, offsets, sc.serving_bs, sc.num_bs, sc.antennas);
  res.rates.resize(G);
  res.s.resize(G);
  res.t.resize(G);
  for (int g = 0; g < G; ++g) {
    res.rates[g] = x[roff + g];
    res.s[g].resize(svars[g].size());
    for (int i = 0; i < static_cast<int>(svars[g].size()); ++i) res.s[g][i] = x[svars[g][i]];
    res.t[g].resize(tvars[g].size());
    for (int i = 0; i < static_cast<int>(tvars[g].size()); ++i) res.t[g][i] = x[tvars[g][i]];
  }
  res.alpha = x[avar];
  return res;
}

double rbar(const CovarianceSet& covs, const CovarianceSet& expansion, const CVector& h, int g) {
  const int G = covs.num_groups();
  double total = 0.0, intf = 0.0, intf_tilde = 0.0;
  for (int l = 0; l < G; ++l) {
    const CVector hl = compact_of_stacked(h, covs.serving[l], covs.antennas);
    const double tr = quad_form(covs.blocks[l], hl);
    total += tr;
    if (l != g) {
      intf += tr;
      intf_tilde += quad_form(expansion.blocks[l], hl);
    }
  }
  const double c = 1.0 + intf_tilde;
  return std::log2(1.0 + total) - std::log2(c) - (intf - intf_tilde) / (c * kLn2);
}

}  // namespace mcast::conic
