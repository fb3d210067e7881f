#pragma once

// Dense real linear algebra: a row-major matrix, the non-symmetric real
// eigenvalue solver (balance, Householder-Hessenberg, Francis double-shift QR),
// central-difference Jacobians and quadratic-form definiteness.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nashkit {

using Vector = std::vector<double>;
using Complex = std::complex<double>;

class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
      : rows_(rows), cols_(cols), data_(std::move(row_major)) {
    if (data_.size() != rows_ * cols_)
      throw std::invalid_argument("Matrix: entry count does not match shape");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_)
        throw std::invalid_argument("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  Matrix& operator+=(const Matrix& o) {
    check_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    check_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols_ != b.rows_) throw std::invalid_argument("Matrix product: inner dimensions differ");
    Matrix c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  friend Vector operator*(const Matrix& a, std::span<const double> x) {
    if (a.cols_ != x.size()) throw std::invalid_argument("Matrix-vector product: size mismatch");
    Vector y(a.rows_, 0.0);
    for (std::size_t i = 0; i < a.rows_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols_; ++j) s += a(i, j) * x[j];
      y[i] = s;
    }
    return y;
  }
  friend Vector operator*(const Matrix& a, const Vector& x) { return a * std::span<const double>(x); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  void check_same_shape(const Matrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw std::invalid_argument("Matrix: shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Matrix symmetric_part(const Matrix& m) {
  Matrix s = m + m.transpose();
  return s *= 0.5;
}

/// Imaginary-to-real quotient max |Im λ / Re λ|. An eigenvalue on the
/// imaginary axis (other than 0) makes it infinite.
class Quotient {
public:
  constexpr Quotient() = default;
  constexpr explicit Quotient(double v) : value_(v) {}
  static constexpr Quotient infinite() {
    Quotient q;
    q.infinite_ = true;
    return q;
  }

  constexpr bool is_infinite() const { return infinite_; }
  double value() const {
    if (infinite_) throw std::domain_error("Quotient: value requested for infinite quotient");
    return value_;
  }
  /// Finite value, or +inf for callers doing plain arithmetic.
  double as_double() const { return infinite_ ? std::numeric_limits<double>::infinity() : value_; }

  friend constexpr bool operator<=(const Quotient& a, double b) { return !a.infinite_ && a.value_ <= b; }
  friend constexpr bool operator==(const Quotient&, const Quotient&) = default;

private:
  double value_ = 0.0;
  bool infinite_ = false;
};

inline std::string to_string(const Quotient& q) {
  return q.is_infinite() ? std::string("inf") : std::to_string(q.value());
}

struct Spectrum {
  std::vector<Complex> eigenvalues;
  double max_real = -std::numeric_limits<double>::infinity();
  double spectral_radius = 0.0;
  Quotient quotient_q;

  static Spectrum from_eigenvalues(std::vector<Complex> values) {
    Spectrum s;
    s.eigenvalues = std::move(values);
    double q = 0.0;
    bool q_inf = false;
    for (const Complex& l : s.eigenvalues) {
      s.max_real = std::max(s.max_real, l.real());
      s.spectral_radius = std::max(s.spectral_radius, std::abs(l));
      if (l.real() == 0.0) {
        if (l.imag() != 0.0) q_inf = true;
      } else {
        q = std::max(q, std::abs(l.imag() / l.real()));
      }
    }
    s.quotient_q = q_inf ? Quotient::infinite() : Quotient(q);
    return s;
  }
};

class EigenError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Similarity scaling by powers of the radix so row and column norms are
// comparable; eigenvalues are unchanged.
inline void balance(Matrix& a) {
  constexpr double radix = std::numeric_limits<double>::radix;
  constexpr double sqrdx = radix * radix;
  const std::size_t n = a.rows();
  bool done = false;
  while (!done) {
    done = true;
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(a(j, i));
        r += std::abs(a(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix;
      double f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= sqrdx;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sqrdx;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        const double ginv = 1.0 / f;
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= ginv;
        for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
      }
    }
  }
}

// Householder reduction to upper Hessenberg form, in place.
inline void hessenberg(Matrix& a) {
  const std::size_t n = a.rows();
  if (n < 3) return;
  std::vector<double> v(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double alpha = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) alpha += a(i, k) * a(i, k);
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    if (a(k + 1, k) > 0.0) alpha = -alpha;
    // v = x - alpha e1, H = I - 2 v v^T / (v^T v)
    for (std::size_t i = 0; i < n; ++i) v[i] = 0.0;
    v[k + 1] = a(k + 1, k) - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i] = a(i, k);
    double vtv = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) vtv += v[i] * v[i];
    if (vtv == 0.0) continue;
    const double beta = 2.0 / vtv;
    for (std::size_t j = k; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) s += v[i] * a(i, j);
      s *= beta;
      for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= s * v[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) s += a(i, j) * v[j];
      s *= beta;
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= s * v[j];
    }
    a(k + 1, k) = alpha;
    for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
  }
}

inline double sign_of(double magnitude, double s) { return s >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude); }

// Francis double-shift QR on an upper Hessenberg matrix. Eigenvalues are
// written bottom-up; complex pairs come out as (x + iz, x - iz).
inline std::vector<Complex> hessenberg_qr(Matrix& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<Complex> w(static_cast<std::size_t>(n));
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));
  const double abs_tol = 1e-12 * anorm;
  const int max_sweeps = 30 * n;

  auto at = [&a](int i, int j) -> double& { return a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)); };

  int nn = n - 1;
  int total_sweeps = 0;
  double t = 0.0;
  int its = 0;
  while (nn >= 0) {
    int l = nn;
    for (; l > 0; --l) {
      double s = std::abs(at(l - 1, l - 1)) + std::abs(at(l, l));
      if (s == 0.0) s = anorm;
      if (std::abs(at(l, l - 1)) <= std::max(eps * s, abs_tol)) {
        at(l, l - 1) = 0.0;
        break;
      }
    }
    double x = at(nn, nn);
    if (l == nn) {
      w[static_cast<std::size_t>(nn)] = Complex(x + t, 0.0);
      --nn;
      its = 0;
      continue;
    }
    double y = at(nn - 1, nn - 1);
    double ww = at(nn, nn - 1) * at(nn - 1, nn);
    if (l == nn - 1) {
      const double p = 0.5 * (y - x);
      const double q = p * p + ww;
      double z = std::sqrt(std::abs(q));
      x += t;
      if (q >= 0.0) {
        z = p + sign_of(z, p);
        w[static_cast<std::size_t>(nn - 1)] = w[static_cast<std::size_t>(nn)] = Complex(x + z, 0.0);
        if (z != 0.0) w[static_cast<std::size_t>(nn)] = Complex(x - ww / z, 0.0);
      } else {
        w[static_cast<std::size_t>(nn - 1)] = Complex(x + p, z);
        w[static_cast<std::size_t>(nn)] = Complex(x + p, -z);
      }
      nn -= 2;
      its = 0;
      continue;
    }

    if (++total_sweeps > max_sweeps)
      throw EigenError("eigenvalues: QR iteration did not converge");
    if (its > 0 && its % 10 == 0) {
      // exceptional shift
      t += x;
      for (int i = 0; i <= nn; ++i) at(i, i) -= x;
      const double s = std::abs(at(nn, nn - 1)) + std::abs(at(nn - 1, nn - 2));
      y = x = 0.75 * s;
      ww = -0.4375 * s * s;
    }
    ++its;

    int m = nn - 2;
    double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
    for (; m >= l; --m) {
      z = at(m, m);
      r = x - z;
      const double s1 = y - z;
      p = (r * s1 - ww) / at(m + 1, m) + at(m, m + 1);
      q = at(m + 1, m + 1) - z - r - s1;
      r = at(m + 2, m + 1);
      const double s = std::abs(p) + std::abs(q) + std::abs(r);
      p /= s;
      q /= s;
      r /= s;
      if (m == l) break;
      const double u = std::abs(at(m, m - 1)) * (std::abs(q) + std::abs(r));
      const double v = std::abs(p) * (std::abs(at(m - 1, m - 1)) + std::abs(z) + std::abs(at(m + 1, m + 1)));
      if (u <= eps * v) break;
    }
    for (int i = m; i < nn - 1; ++i) {
      at(i + 2, i) = 0.0;
      if (i != m) at(i + 2, i - 1) = 0.0;
    }
    for (int k = m; k < nn; ++k) {
      if (k != m) {
        p = at(k, k - 1);
        q = at(k + 1, k - 1);
        r = 0.0;
        if (k + 1 != nn) r = at(k + 2, k - 1);
        x = std::abs(p) + std::abs(q) + std::abs(r);
        if (x != 0.0) {
          p /= x;
          q /= x;
          r /= x;
        }
      }
      const double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
      if (s == 0.0) continue;
      if (k == m) {
        if (l != m) at(k, k - 1) = -at(k, k - 1);
      } else {
        at(k, k - 1) = -s * x;
      }
      p += s;
      x = p / s;
      y = q / s;
      z = r / s;
      q /= p;
      r /= p;
      for (int j = k; j <= nn; ++j) {
        double pp = at(k, j) + q * at(k + 1, j);
        if (k + 1 != nn) {
          pp += r * at(k + 2, j);
          at(k + 2, j) -= pp * z;
        }
        at(k + 1, j) -= pp * y;
        at(k, j) -= pp * x;
      }
      const int mmin = std::min(nn, k + 3);
      for (int i = l; i <= mmin; ++i) {
        double pp = x * at(i, k) + y * at(i, k + 1);
        if (k + 1 != nn) {
          pp += z * at(i, k + 2);
          at(i, k + 2) -= pp * r;
        }
        at(i, k + 1) -= pp * q;
        at(i, k) -= pp;
      }
    }
  }
  return w;
}

}  // namespace detail

/// All n eigenvalues of a real square matrix, with multiplicity.
/// Throws std::invalid_argument for non-square or non-finite input and
/// EigenError when the QR iteration exhausts its 30·n sweep budget.
inline Spectrum eigenvalues(const Matrix& m) {
  if (!m.square() || m.rows() == 0) throw std::invalid_argument("eigenvalues: matrix must be square and non-empty");
  if (!m.all_finite()) throw std::invalid_argument("eigenvalues: non-finite entry");
  Matrix a = m;
  detail::balance(a);
  detail::hessenberg(a);
  return Spectrum::from_eigenvalues(detail::hessenberg_qr(a));
}

/// Real eigenvalues of a symmetric matrix, ascending.
inline std::vector<double> symmetric_eigenvalues(const Matrix& s) {
  const Spectrum spec = eigenvalues(s);
  std::vector<double> out;
  out.reserve(spec.eigenvalues.size());
  for (const Complex& l : spec.eigenvalues) out.push_back(l.real());
  std::sort(out.begin(), out.end());
  return out;
}

using VectorField = std::function<Vector(std::span<const double>)>;

inline double default_fd_scale() { return std::cbrt(std::numeric_limits<double>::epsilon()); }

/// Central-difference Jacobian; column j uses δ = scale·max(1, |x_j|).
inline Matrix fd_jacobian(const VectorField& field, std::span<const double> x, double scale = default_fd_scale()) {
  if (!(scale > 0.0)) throw std::invalid_argument("fd_jacobian: scale must be positive");
  Vector xp(x.begin(), x.end());
  const Vector f0 = field(xp);
  const std::size_t n = x.size();
  const std::size_t m = f0.size();
  Matrix jac(m, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double delta = scale * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + delta;
    const Vector fp = field(xp);
    xp[j] = x[j] - delta;
    const Vector fm = field(xp);
    xp[j] = x[j];
    if (fp.size() != m || fm.size() != m) throw std::invalid_argument("fd_jacobian: field changed output size");
    const double inv = 1.0 / (xp[j] + delta - (xp[j] - delta));
    for (std::size_t i = 0; i < m; ++i) {
      const double d = (fp[i] - fm[i]) * inv;
      if (!std::isfinite(d)) throw std::domain_error("fd_jacobian: non-finite field evaluation");
      jac(i, j) = d;
    }
  }
  return jac;
}

enum class Definiteness { definite, semidefinite, indefinite };

inline const char* to_string(Definiteness d) {
  switch (d) {
    case Definiteness::definite: return "definite";
    case Definiteness::semidefinite: return "semidefinite";
    case Definiteness::indefinite: return "indefinite";
  }
  return "?";
}

inline double default_definiteness_tol(const Matrix& m) { return 1e-9 * m.frobenius_norm(); }

/// Negative (semi-)definiteness in the quadratic-form sense, wᵀMw < 0,
/// decided on the symmetric part. "definite" needs every eigenvalue of
/// (M+Mᵀ)/2 below -tol.
inline Definiteness is_negative_definite(const Matrix& m, double tol) {
  if (!m.square()) throw std::invalid_argument("is_negative_definite: matrix must be square");
  if (m.rows() == 0) return Definiteness::definite;
  const std::vector<double> ev = symmetric_eigenvalues(symmetric_part(m));
  const double top = ev.back();
  if (top < -tol) return Definiteness::definite;
  if (top <= tol) return Definiteness::semidefinite;
  return Definiteness::indefinite;
}
inline Definiteness is_negative_definite(const Matrix& m) { return is_negative_definite(m, default_definiteness_tol(m)); }

/// Singular values, ascending, as square roots of the eigenvalues of MᵀM.
inline std::vector<double> singular_values(const Matrix& m) {
  std::vector<double> ev = symmetric_eigenvalues(m.transpose() * m);
  for (double& e : ev) e = std::sqrt(std::max(0.0, e));
  return ev;
}

inline double min_singular_value(const Matrix& m) {
  if (!m.square()) throw std::invalid_argument("min_singular_value: matrix must be square");
  return singular_values(m).front();
}

/// Determinant by LU with partial pivoting.
inline double determinant(Matrix a) {
  if (!a.square()) throw std::invalid_argument("determinant: matrix must be square");
  const std::size_t n = a.rows();
  double det = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (a(piv, k) == 0.0) return 0.0;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      det = -det;
    }
    det *= a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  return det;
}

inline double trace(const Matrix& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(m.rows(), m.cols()); ++i) t += m(i, i);
  return t;
}

}  // namespace nashkit
