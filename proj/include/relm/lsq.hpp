#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "relm/errors.hpp"
#include "relm/tensor.hpp"

namespace relm {

enum class RankFlag : std::uint8_t { full_rank, regularized };

inline std::string_view to_string(RankFlag f) noexcept {
  return f == RankFlag::full_rank ? "full_rank" : "regularized";
}

struct LsqSolution {
  DenseTensor beta;
  double residual_norm = 0.0;  // ||H beta - Y||_2
  RankFlag rank_flag = RankFlag::full_rank;
  double ridge_lambda = 0.0;
};

/// Householder reflectors of an n x M matrix (n >= M), stored column-major.
/// Column k holds v_k below the diagonal with implicit v_k[k] = 1; R sits on
/// and above the diagonal.
class HouseholderQR {
 public:
  explicit HouseholderQR(const DenseTensor& A) {
    if (A.rank() != 2) throw DimensionError("QR needs a 2-D matrix");
    n_ = A.extent(0);
    m_ = A.extent(1);
    if (n_ < m_) {
      throw UnderdeterminedError("QR needs at least as many rows as columns (n=" + std::to_string(n_) +
                                 ", M=" + std::to_string(m_) + ")");
    }
    if (!A.all_finite()) throw NumericError("matrix contains non-finite entries");
    a_.resize(n_ * m_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < m_; ++j) a_[j * n_ + i] = A(i, j);
    }
    tau_.assign(m_, 0.0);
    diag_.assign(m_, 0.0);
    factor();
  }

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return m_; }

  /// Upper-triangular M x M factor.
  DenseTensor R() const {
    DenseTensor r({m_, m_});
    for (std::size_t i = 0; i < m_; ++i) {
      r(i, i) = diag_[i];
      for (std::size_t j = i + 1; j < m_; ++j) r(i, j) = a_[j * n_ + i];
    }
    return r;
  }

  /// In place y <- Q^T y for a length-n vector.
  void apply_qt(std::vector<double>& y) const {
    if (y.size() != n_) throw DimensionError("apply_qt: vector length differs from row count");
    for (std::size_t k = 0; k < m_; ++k) reflect(k, y.data());
  }

  /// In place y <- Q y (full n x n orthogonal factor).
  void apply_q(std::vector<double>& y) const {
    if (y.size() != n_) throw DimensionError("apply_q: vector length differs from row count");
    for (std::size_t k = m_; k-- > 0;) reflect(k, y.data());
  }

  /// Economy n x M orthonormal factor.
  DenseTensor thin_Q() const {
    DenseTensor q({n_, m_});
    std::vector<double> e(n_);
    for (std::size_t j = 0; j < m_; ++j) {
      std::fill(e.begin(), e.end(), 0.0);
      e[j] = 1.0;
      apply_q(e);
      for (std::size_t i = 0; i < n_; ++i) q(i, j) = e[i];
    }
    return q;
  }

 private:
  void factor() {
    for (std::size_t k = 0; k < m_; ++k) {
      double* col = a_.data() + k * n_;
      double scale = 0.0;
      for (std::size_t i = k; i < n_; ++i) scale = std::max(scale, std::abs(col[i]));
      if (scale == 0.0) {
        tau_[k] = 0.0;
        diag_[k] = 0.0;
        continue;
      }
      double norm2 = 0.0;
      for (std::size_t i = k; i < n_; ++i) {
        const double v = col[i] / scale;
        norm2 += v * v;
      }
      const double norm = scale * std::sqrt(norm2);
      const double alpha = col[k] >= 0.0 ? -norm : norm;  // avoids cancellation in v_k
      const double v0 = col[k] - alpha;
      for (std::size_t i = k + 1; i < n_; ++i) col[i] /= v0;
      // H = I - tau v v^T with v[k] = 1
      tau_[k] = -v0 / alpha;
      diag_[k] = alpha;
      col[k] = 1.0;
      for (std::size_t j = k + 1; j < m_; ++j) reflect_column(k, a_.data() + j * n_);
      col[k] = alpha;
    }
  }

  void reflect_column(std::size_t k, double* y) const {
    const double* v = a_.data() + k * n_;
    double s = y[k];
    for (std::size_t i = k + 1; i < n_; ++i) s += v[i] * y[i];
    s *= tau_[k];
    y[k] -= s;
    for (std::size_t i = k + 1; i < n_; ++i) y[i] -= s * v[i];
  }

  void reflect(std::size_t k, double* y) const {
    if (tau_[k] == 0.0) return;
    reflect_column(k, y);
  }

  std::size_t n_ = 0, m_ = 0;
  std::vector<double> a_;
  std::vector<double> tau_;
  std::vector<double> diag_;
};

struct QrFactors {
  DenseTensor Q;  // n x M, orthonormal columns
  DenseTensor R;  // M x M, upper triangular with nonnegative diagonal
};

/// Economy QR with the sign convention R(k, k) >= 0.
inline QrFactors qr_factor(const DenseTensor& A) {
  const HouseholderQR qr(A);
  QrFactors f{qr.thin_Q(), qr.R()};
  const std::size_t n = qr.rows(), m = qr.cols();
  for (std::size_t k = 0; k < m; ++k) {
    if (f.R(k, k) >= 0.0) continue;
    for (std::size_t j = k; j < m; ++j) f.R(k, j) = -f.R(k, j);
    for (std::size_t i = 0; i < n; ++i) f.Q(i, k) = -f.Q(i, k);
  }
  return f;
}

/// Threshold below which a diagonal entry of R counts as singular.
inline double singular_threshold(const DenseTensor& R) {
  double mx = 0.0;
  for (double v : R.data()) mx = std::max(mx, std::abs(v));
  return std::numeric_limits<double>::epsilon() * static_cast<double>(R.extent(0)) * mx;
}

/// Solves R x = z for upper-triangular R.
inline DenseTensor back_substitute(const DenseTensor& R, const DenseTensor& z) {
  if (R.rank() != 2 || R.extent(0) != R.extent(1)) throw DimensionError("R must be square");
  const std::size_t m = R.extent(0);
  if (z.size() != m) throw DimensionError("right-hand side length differs from R");
  const double thresh = singular_threshold(R);
  for (std::size_t k = 0; k < m; ++k) {
    if (!(std::abs(R(k, k)) > thresh)) {
      throw SingularTriangularError("R(" + std::to_string(k) + "," + std::to_string(k) +
                                    ") is below the singularity threshold");
    }
  }
  DenseTensor x({m});
  for (std::size_t k = m; k-- > 0;) {
    double s = z.raw()[k];
    for (std::size_t j = k + 1; j < m; ++j) s -= R(k, j) * x(j);
    x(k) = s / R(k, k);
  }
  return x;
}

namespace detail {

inline double residual_norm(const DenseTensor& H, const DenseTensor& beta, const DenseTensor& Y) {
  const std::size_t n = H.extent(0), m = H.extent(1);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = -Y(i);
    for (std::size_t j = 0; j < m; ++j) r += H(i, j) * beta(j);
    s += r * r;
  }
  return std::sqrt(s);
}

inline DenseTensor qr_solve(const DenseTensor& A, const std::vector<double>& rhs) {
  const HouseholderQR qr(A);
  std::vector<double> z = rhs;
  qr.apply_qt(z);
  const std::size_t m = qr.cols();
  return back_substitute(qr.R(), DenseTensor({m}, std::vector<double>(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(m))));
}

}  // namespace detail

/// min_beta ||H beta - Y||_2 by Householder QR and back substitution. A rank
/// deficient R falls back to ridge regression solved as the QR of
/// [H; sqrt(lambda) I] with lambda = 1e-8 trace(H^T H) / M.
inline LsqSolution solve_lsq(const DenseTensor& H, const DenseTensor& Y) {
  if (H.rank() != 2) throw DimensionError("design matrix must be 2-D");
  const std::size_t n = H.extent(0), m = H.extent(1);
  if (Y.size() != n) throw DimensionError("target length differs from design rows");
  if (!H.all_finite() || !Y.all_finite()) throw NumericError("least-squares input contains non-finite values");
  if (n < m) {
    throw UnderdeterminedError("need at least M=" + std::to_string(m) + " rows, got " + std::to_string(n));
  }
  const std::vector<double> y(Y.raw(), Y.raw() + n);

  LsqSolution sol;
  try {
    sol.beta = detail::qr_solve(H, y);
  } catch (const SingularTriangularError&) {
    double trace = 0.0;
    for (double v : H.data()) trace += v * v;
    sol.rank_flag = RankFlag::regularized;
    if (trace == 0.0) {
      sol.beta = DenseTensor({m});
    } else {
      const double lambda = 1e-8 * trace / static_cast<double>(m);
      DenseTensor aug({n + m, m});
      std::copy_n(H.raw(), n * m, aug.raw());
      const double root = std::sqrt(lambda);
      for (std::size_t j = 0; j < m; ++j) aug(n + j, j) = root;
      std::vector<double> rhs = y;
      rhs.resize(n + m, 0.0);
      sol.beta = detail::qr_solve(aug, rhs);
      sol.ridge_lambda = lambda;
    }
  }
  if (!sol.beta.all_finite()) throw NumericError("least-squares solution is not finite");
  sol.residual_norm = detail::residual_norm(H, sol.beta, Y);
  return sol;
}

}  // namespace relm
