#pragma once

// Dense real and complex linear algebra: matrix container, one-sided Jacobi
// SVD, eigendecomposition of small general matrices and the Moore-Penrose
// pseudoinverse. Everything is double precision.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "depthflow/error.hpp"

namespace depthflow::la {

using Complex = std::complex<double>;
using Vector = std::vector<double>;
using ComplexVector = std::vector<Complex>;

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};

inline double conj_of(double x) { return x; }
inline Complex conj_of(const Complex& x) { return std::conj(x); }
inline double abs2(double x) { return x * x; }
inline double abs2(const Complex& x) { return std::norm(x); }
inline bool is_finite(double x) { return std::isfinite(x); }
inline bool is_finite(const Complex& x) {
  return std::isfinite(x.real()) && std::isfinite(x.imag());
}

/// Row-major dense matrix.
template <class T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw UsageError("matrix data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }
  BasicMatrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw UsageError("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  static BasicMatrix diagonal(std::span<const double> d) {
    BasicMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = T{d[i]};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  std::vector<T> column(std::size_t j) const {
    std::vector<T> c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }
  void set_column(std::size_t j, std::span<const T> c) {
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = c[i];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  BasicMatrix transpose() const {
    BasicMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  /// Conjugate transpose (plain transpose for real matrices).
  BasicMatrix adjoint() const {
    BasicMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = conj_of((*this)(i, j));
    return t;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](const T& x) { return is_finite(x); });
  }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using ComplexMatrix = BasicMatrix<Complex>;

template <class T>
BasicMatrix<T> operator*(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw UsageError("matrix product shape mismatch: " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " * " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
  BasicMatrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T{}) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

template <class T>
std::vector<T> operator*(const BasicMatrix<T>& a, std::span<const T> x) {
  if (a.cols() != x.size()) throw UsageError("matrix-vector shape mismatch");
  std::vector<T> y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T acc{};
    auto r = a.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) acc += r[j] * x[j];
    y[i] = acc;
  }
  return y;
}

template <class T>
std::vector<T> operator*(const BasicMatrix<T>& a, const std::vector<T>& x) {
  return a * std::span<const T>(x);
}

template <class T>
BasicMatrix<T> operator+(BasicMatrix<T> a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw UsageError("matrix sum shape mismatch");
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
  return a;
}

template <class T>
BasicMatrix<T> operator-(BasicMatrix<T> a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw UsageError("matrix difference shape mismatch");
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] -= bd[i];
  return a;
}

template <class T>
BasicMatrix<T> operator*(T s, BasicMatrix<T> a) {
  for (auto& x : a.data()) x *= s;
  return a;
}

inline ComplexMatrix to_complex(const Matrix& m) {
  ComplexMatrix c(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) c.data()[i] = m.data()[i];
  return c;
}

template <class T>
double frobenius_norm(const BasicMatrix<T>& m) {
  double s = 0.0;
  for (const auto& x : m.data()) s += abs2(x);
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

template <class T>
double norm2(std::span<const T> a) {
  double s = 0.0;
  for (const auto& x : a) s += abs2(x);
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Singular value decomposition

template <class T>
struct Svd {
  BasicMatrix<T> u;  ///< rows x p, orthonormal columns
  Vector sigma;      ///< p values, nonincreasing
  BasicMatrix<T> v;  ///< cols x p, orthonormal columns; m = U diag(sigma) V^H
};

namespace detail {

template <class T>
T unit_phase(const T& g) {
  const double a = std::abs(g);
  if constexpr (is_complex<T>::value) {
    return g / a;
  } else {
    return g < 0 ? -1.0 : 1.0;
  }
}

// Extends a set of orthonormal columns to `count` columns by Gram-Schmidt
// over the standard basis. Columns flagged in `fill` are replaced.
template <class T>
void complete_basis(std::vector<std::vector<T>>& cols,
                    const std::vector<bool>& fill) {
  if (cols.empty()) return;
  const std::size_t m = cols.front().size();
  std::size_t next_basis = 0;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (!fill[j]) continue;
    bool placed = false;
    while (!placed && next_basis < m) {
      std::vector<T> cand(m, T{});
      cand[next_basis++] = T{1};
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < cols.size(); ++k) {
          if (k == j || (fill[k] && k > j)) continue;
          T proj{};
          for (std::size_t i = 0; i < m; ++i) proj += conj_of(cols[k][i]) * cand[i];
          for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * cols[k][i];
        }
      }
      const double n = norm2(std::span<const T>(cand));
      if (n > 1e-6) {
        for (auto& x : cand) x /= n;
        cols[j] = std::move(cand);
        placed = true;
      }
    }
    if (!placed) throw NumericalError("svd: failed to complete orthonormal basis");
  }
}

// One-sided Jacobi on a tall (rows >= cols) matrix.
template <class T>
Svd<T> jacobi_svd_tall(const BasicMatrix<T>& a, int max_sweeps) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<std::vector<T>> b(n, std::vector<T>(m));
  std::vector<std::vector<T>> v(n, std::vector<T>(n, T{}));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) b[j][i] = a(i, j);
    v[j][j] = T{1};
  }

  constexpr double tol = 1e-15;
  double total = 0.0;
  for (const auto& col : b)
    for (const T& x : col) total += abs2(x);
  // Columns at rounding level relative to the whole matrix carry no direction.
  const double negligible = tol * tol * total;
  bool converged = n < 2;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0;
        T gamma{};
        for (std::size_t i = 0; i < m; ++i) {
          alpha += abs2(b[p][i]);
          beta += abs2(b[q][i]);
          gamma += conj_of(b[p][i]) * b[q][i];
        }
        const double g = std::abs(gamma);
        if (g == 0.0 || g <= tol * std::sqrt(alpha * beta) || std::min(alpha, beta) <= negligible) continue;
        converged = false;
        const T phase = conj_of(unit_phase(gamma));
        const double zeta = (beta - alpha) / (2.0 * g);
        const double t = (zeta >= 0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const T bp = b[p][i];
          const T bq = phase * b[q][i];
          b[p][i] = c * bp - s * bq;
          b[q][i] = s * bp + c * bq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const T vp = v[p][i];
          const T vq = phase * v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) {
    throw NumericalError("svd: one-sided Jacobi did not converge within " +
                         std::to_string(max_sweeps) + " sweeps");
  }

  Vector sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(std::span<const T>(b[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double smax = n == 0 ? 0.0 : sigma[order.front()];
  std::vector<std::vector<T>> ucols(n);
  std::vector<bool> fill(n, false);
  Svd<T> out;
  out.sigma.resize(n);
  out.v = BasicMatrix<T>(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = sigma[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v[j][i];
    if (sigma[j] > 1e-14 * smax && sigma[j] > 0.0) {
      ucols[k] = b[j];
      for (auto& x : ucols[k]) x /= sigma[j];
    } else {
      ucols[k].assign(m, T{});
      fill[k] = true;
    }
  }
  complete_basis(ucols, fill);
  out.u = BasicMatrix<T>(m, n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = ucols[k][i];
  return out;
}

}  // namespace detail

/// Thin SVD: for an m x n input returns U (m x p), sigma (p), V (n x p) with
/// p = min(m, n) and m = U diag(sigma) V^H.
template <class T>
Svd<T> svd(const BasicMatrix<T>& m, int max_sweeps = 100) {
  if (!m.all_finite()) throw DataError("svd: non-finite input");
  if (m.rows() >= m.cols()) return detail::jacobi_svd_tall(m, max_sweeps);
  auto t = detail::jacobi_svd_tall(m.adjoint(), max_sweeps);
  return Svd<T>{std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

/// Moore-Penrose pseudoinverse. Singular values at or below tol * sigma_max
/// are treated as zero.
template <class T>
BasicMatrix<T> pinv(const BasicMatrix<T>& m, double tol = 1e-12) {
  if (tol < 0) throw UsageError("pinv: tolerance must be nonnegative");
  const auto s = svd(m);
  BasicMatrix<T> out(m.cols(), m.rows());
  const double smax = s.sigma.empty() ? 0.0 : s.sigma.front();
  if (smax == 0.0) return out;
  for (std::size_t k = 0; k < s.sigma.size(); ++k) {
    if (s.sigma[k] <= tol * smax) continue;
    const double inv = 1.0 / s.sigma[k];
    for (std::size_t i = 0; i < m.cols(); ++i) {
      const T vik = s.v(i, k) * inv;
      for (std::size_t j = 0; j < m.rows(); ++j) out(i, j) += vik * conj_of(s.u(j, k));
    }
  }
  return out;
}

/// Number of singular values above rel_tol * sigma_max.
inline std::size_t numerical_rank(std::span<const double> sigma, double rel_tol) {
  if (sigma.empty() || sigma.front() == 0.0) return 0;
  return static_cast<std::size_t>(std::count_if(
      sigma.begin(), sigma.end(),
      [&](double s) { return s > rel_tol * sigma.front(); }));
}

// ---------------------------------------------------------------------------
// General eigendecomposition

struct Eigen {
  ComplexVector values;   ///< sorted by descending modulus, conjugate pairs adjacent
  ComplexMatrix vectors;  ///< unit-norm eigenvectors as columns
};

namespace detail {

inline void givens(const Complex& f, const Complex& g, double& c, Complex& s) {
  // Rotation with [c s; -conj(s) c] * [f; g] = [r; 0].
  const double af = std::abs(f);
  const double ag = std::abs(g);
  if (ag == 0.0) {
    c = 1.0;
    s = 0.0;
    return;
  }
  if (af == 0.0) {
    c = 0.0;
    s = std::conj(g) / ag;
    return;
  }
  const double r = std::hypot(af, ag);
  c = af / r;
  s = (f / af) * std::conj(g) / r;
}

// Reduces h to upper Hessenberg form in place, accumulating z so that the
// original matrix equals z h z^H.
inline void hessenberg(ComplexMatrix& h, ComplexMatrix& z) {
  const std::size_t n = h.rows();
  z = ComplexMatrix::identity(n);
  for (std::size_t k = 0; k + 2 <= n; ++k) {
    double alpha = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) alpha += std::norm(h(i, k));
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    std::vector<Complex> v(n, 0.0);
    const Complex x0 = h(k + 1, k);
    const Complex phase = std::abs(x0) == 0.0 ? Complex(1.0) : x0 / std::abs(x0);
    for (std::size_t i = k + 1; i < n; ++i) v[i] = h(i, k);
    v[k + 1] += phase * alpha;
    double vn = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) vn += std::norm(v[i]);
    if (vn == 0.0) continue;
    // H <- (I - 2 v v^H / vn) H (I - 2 v v^H / vn)
    for (std::size_t j = 0; j < n; ++j) {
      Complex s = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) s += std::conj(v[i]) * h(i, j);
      s *= 2.0 / vn;
      for (std::size_t i = k + 1; i < n; ++i) h(i, j) -= v[i] * s;
    }
    for (std::size_t i = 0; i < n; ++i) {
      Complex s = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) s += h(i, j) * v[j];
      s *= 2.0 / vn;
      for (std::size_t j = k + 1; j < n; ++j) h(i, j) -= s * std::conj(v[j]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      Complex s = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) s += z(i, j) * v[j];
      s *= 2.0 / vn;
      for (std::size_t j = k + 1; j < n; ++j) z(i, j) -= s * std::conj(v[j]);
    }
    for (std::size_t i = k + 2; i < n; ++i) h(i, k) = 0.0;
  }
}

// Shifted QR iteration on a Hessenberg matrix, producing the Schur form
// t = z^H a z (upper triangular) with z accumulated.
inline void schur(ComplexMatrix& h, ComplexMatrix& z) {
  const std::size_t n = h.rows();
  if (n == 0) return;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const int max_iter = 60 * static_cast<int>(n);
  std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(n) - 1;
  int iter = 0;
  int total = 0;
  while (hi > 0) {
    std::ptrdiff_t l = hi;
    for (; l > 0; --l) {
      const double scale = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
      if (std::abs(h(l, l - 1)) <= eps * (scale == 0.0 ? 1.0 : scale)) {
        h(l, l - 1) = 0.0;
        break;
      }
    }
    if (l == hi) {
      --hi;
      iter = 0;
      continue;
    }
    if (++total > max_iter) {
      throw NumericalError("eig_general: QR iteration did not converge");
    }
    ++iter;

    Complex mu;
    if (iter % 11 == 0) {
      // Exceptional shift.
      mu = h(hi, hi) + 0.75 * std::abs(h(hi, hi - 1));
    } else {
      const Complex a = h(hi - 1, hi - 1), b = h(hi - 1, hi);
      const Complex c = h(hi, hi - 1), d = h(hi, hi);
      const Complex tr = a + d;
      const Complex det = a * d - b * c;
      const Complex disc = std::sqrt(tr * tr / 4.0 - det);
      const Complex e1 = tr / 2.0 + disc;
      const Complex e2 = tr / 2.0 - disc;
      mu = std::abs(e1 - d) < std::abs(e2 - d) ? e1 : e2;
    }

    const auto lo = static_cast<std::size_t>(l);
    const auto uh = static_cast<std::size_t>(hi);
    for (std::size_t i = lo; i <= uh; ++i) h(i, i) -= mu;
    std::vector<double> cs(uh - lo);
    std::vector<Complex> ss(uh - lo);
    for (std::size_t k = lo; k < uh; ++k) {
      double c;
      Complex s;
      givens(h(k, k), h(k + 1, k), c, s);
      cs[k - lo] = c;
      ss[k - lo] = s;
      for (std::size_t j = k; j < n; ++j) {
        const Complex x = h(k, j), y = h(k + 1, j);
        h(k, j) = c * x + s * y;
        h(k + 1, j) = -std::conj(s) * x + c * y;
      }
    }
    for (std::size_t k = lo; k < uh; ++k) {
      const double c = cs[k - lo];
      const Complex s = ss[k - lo];
      const std::size_t top = std::min(uh, k + 2);
      for (std::size_t i = 0; i <= top; ++i) {
        const Complex x = h(i, k), y = h(i, k + 1);
        h(i, k) = c * x + std::conj(s) * y;
        h(i, k + 1) = -s * x + c * y;
      }
      for (std::size_t i = 0; i < n; ++i) {
        const Complex x = z(i, k), y = z(i, k + 1);
        z(i, k) = c * x + std::conj(s) * y;
        z(i, k + 1) = -s * x + c * y;
      }
    }
    for (std::size_t i = lo; i <= uh; ++i) h(i, i) += mu;
  }
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) h(i, j) = 0.0;
}

// Solves a x = b with partial pivoting; near-zero pivots are replaced by
// `tiny` so inverse iteration on an exact eigenvalue stays finite.
inline ComplexVector lu_solve(ComplexMatrix a, ComplexVector b, double tiny) {
  const std::size_t n = a.rows();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(p, k))) p = i;
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
      std::swap(b[k], b[p]);
    }
    if (std::abs(a(k, k)) < tiny) a(k, k) = tiny;
    for (std::size_t i = k + 1; i < n; ++i) {
      const Complex f = a(i, k) / a(k, k);
      if (f == Complex(0.0)) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  ComplexVector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    Complex s = b[ii];
    for (std::size_t j = ii + 1; j < n; ++j) s -= a(ii, j) * x[j];
    x[ii] = s / a(ii, ii);
  }
  return x;
}

inline double eig_residual(const ComplexMatrix& a, const Complex& lambda,
                           std::span<const Complex> w) {
  const auto aw = a * w;
  double r = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) r += std::norm(aw[i] - lambda * w[i]);
  return std::sqrt(r);
}

inline void normalize(std::vector<Complex>& w) {
  const double n = norm2(std::span<const Complex>(w));
  if (n > 0) for (auto& x : w) x /= n;
}

}  // namespace detail

/// Eigenvalues and eigenvectors of a small real square matrix. Each pair
/// satisfies |m w - lambda w| <= 1e-8 |w| (scaled by max(1, |m|_F));
/// failure to reach that raises NumericalError.
inline Eigen eig_general(const Matrix& m) {
  if (m.rows() != m.cols()) throw UsageError("eig_general: matrix must be square");
  if (m.rows() > 64) throw UsageError("eig_general: matrix larger than 64x64");
  if (!m.all_finite()) throw DataError("eig_general: non-finite input");
  const std::size_t n = m.rows();
  const ComplexMatrix a = to_complex(m);
  const double anorm = frobenius_norm(m);
  Eigen out;
  if (n == 0) return out;

  ComplexMatrix t = a;
  ComplexMatrix z;
  detail::hessenberg(t, z);
  detail::schur(t, z);

  // Eigenvectors of the triangular factor by back substitution.
  const double small = std::max(anorm, 1.0) * std::numeric_limits<double>::epsilon();
  std::vector<ComplexVector> vecs(n);
  ComplexVector vals(n);
  for (std::size_t k = 0; k < n; ++k) {
    vals[k] = t(k, k);
    ComplexVector y(n, 0.0);
    y[k] = 1.0;
    for (std::size_t jj = k; jj-- > 0;) {
      Complex s = 0.0;
      for (std::size_t q = jj + 1; q <= k; ++q) s += t(jj, q) * y[q];
      Complex den = t(jj, jj) - t(k, k);
      if (std::abs(den) < small) den = small;
      y[jj] = -s / den;
    }
    vecs[k] = z * y;
    detail::normalize(vecs[k]);
  }

  // Conjugate pairing: a real input has a spectrum closed under conjugation,
  // so each partner is set to the exact conjugate of its representative.
  const double imag_tol = 64.0 * small;
  std::vector<bool> used(n, false);
  struct Group {
    Complex value;
    std::vector<std::size_t> members;
  };
  std::vector<std::size_t> by_mod(n);
  std::iota(by_mod.begin(), by_mod.end(), 0);
  std::stable_sort(by_mod.begin(), by_mod.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(vals[x]) > std::abs(vals[y]);
  });
  std::vector<Group> groups;
  for (std::size_t idx : by_mod) {
    if (used[idx]) continue;
    used[idx] = true;
    if (std::abs(vals[idx].imag()) <= imag_tol) {
      vals[idx] = Complex(vals[idx].real(), 0.0);
      // Rotate to a real eigenvector.
      auto& w = vecs[idx];
      std::size_t big = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (std::abs(w[i]) > std::abs(w[big])) big = i;
      const Complex ph = std::conj(w[big]) / std::abs(w[big]);
      for (auto& x : w) x = Complex((x * ph).real(), 0.0);
      detail::normalize(w);
      groups.push_back({vals[idx], {idx}});
      continue;
    }
    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (used[j] || vals[j].imag() * vals[idx].imag() >= 0) continue;
      const double d = std::abs(vals[j] - std::conj(vals[idx]));
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best == n) {
      groups.push_back({vals[idx], {idx}});
      continue;
    }
    used[best] = true;
    std::size_t pos = vals[idx].imag() > 0 ? idx : best;
    std::size_t neg = pos == idx ? best : idx;
    vals[neg] = std::conj(vals[pos]);
    vecs[neg] = vecs[pos];
    for (auto& x : vecs[neg]) x = std::conj(x);
    groups.push_back({vals[pos], {pos, neg}});
  }
  std::stable_sort(groups.begin(), groups.end(), [](const Group& x, const Group& y) {
    const double mx = std::abs(x.value), my = std::abs(y.value);
    if (mx != my) return mx > my;
    if (x.value.real() != y.value.real()) return x.value.real() > y.value.real();
    return x.value.imag() > y.value.imag();
  });

  out.values.reserve(n);
  out.vectors = ComplexMatrix(n, n);
  std::size_t col = 0;
  for (const auto& g : groups) {
    for (std::size_t idx : g.members) {
      auto& w = vecs[idx];
      const double tol = 1e-8 * std::max(1.0, anorm);
      if (detail::eig_residual(a, vals[idx], w) > tol) {
        // One step of inverse iteration against the shifted matrix.
        ComplexMatrix shifted = a;
        for (std::size_t i = 0; i < n; ++i) shifted(i, i) -= vals[idx];
        w = detail::lu_solve(shifted, w, small);
        detail::normalize(w);
        if (detail::eig_residual(a, vals[idx], w) > tol) {
          throw NumericalError("eig_general: eigenvector residual above tolerance");
        }
      }
      out.values.push_back(vals[idx]);
      out.vectors.set_column(col++, std::span<const Complex>(w));
    }
  }
  return out;
}

}  // namespace depthflow::la
