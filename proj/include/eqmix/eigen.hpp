#pragma once

// Symmetric eigensolver: Householder reduction to tridiagonal form followed
// by implicit-shift QL. Templated on the scalar so the same code runs in
// double and in fixed-precision MPFR arithmetic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "eqmix/error.hpp"
#include "eqmix/kernel.hpp"
#include "eqmix/parallel.hpp"

namespace eqmix {

template <class T>
struct Tridiagonal {
  std::vector<T> diag;
  std::vector<T> off;  // off[i] = T(i, i+1); off.back() is unused (0)
};

namespace detail {

// Below this trailing size the parallel loops are not worth their overhead.
inline constexpr std::size_t kParallelCutoff = 96;

template <class T>
T hypot2(const T& a, const T& b) {
  using std::abs;
  using std::sqrt;
  const T x = abs(a);
  const T y = abs(b);
  if (x > y) {
    const T r = y / x;
    return x * sqrt(T(1) + r * r);
  }
  if (y == T(0)) return T(0);
  const T r = x / y;
  return y * sqrt(T(1) + r * r);
}

}  // namespace detail

// Reduces the symmetric matrix a (overwritten) to tridiagonal form. When q is
// non-null it receives the orthogonal Q with a = Q T Q^T.
template <class T>
Tridiagonal<T> householder_tridiagonalize(DenseMatrix<T>& a, std::type_identity_t<DenseMatrix<T>>* q = nullptr,
                                          Exec exec = Exec::Parallel) {
  using std::abs;
  using std::sqrt;
  const std::size_t n = a.rows();
  Tridiagonal<T> t;
  t.diag.assign(n, T(0));
  t.off.assign(n, T(0));
  std::vector<std::vector<T>> reflectors;
  std::vector<T> betas;
  std::vector<T> v, p;
  for (std::size_t k = 0; k + 2 < n; ++k) {
    const std::size_t m = n - k - 1;
    const std::size_t base = k + 1;
    T scale(0);
    for (std::size_t i = 0; i < m; ++i) scale = std::max<T>(scale, abs(a(base + i, k)));
    if (scale == T(0)) {
      t.off[k] = T(0);
      if (q) {
        reflectors.emplace_back();
        betas.push_back(T(0));
      }
      continue;
    }
    v.assign(m, T(0));
    T norm2(0);
    for (std::size_t i = 0; i < m; ++i) {
      v[i] = a(base + i, k) / scale;
      norm2 += v[i] * v[i];
    }
    T norm = sqrt(norm2);
    const T alpha = v[0] > T(0) ? T(-norm) : norm;
    v[0] -= alpha;
    const T vv = norm2 - T(2) * alpha * (v[0] + alpha) + alpha * alpha;  // |v|^2 after the shift
    if (vv == T(0)) {
      t.off[k] = a(base, k);
      if (q) {
        reflectors.emplace_back();
        betas.push_back(T(0));
      }
      continue;
    }
    const T beta = T(2) / vv;
    // p = beta * A_sub v
    p.assign(m, T(0));
    const Exec e = m >= detail::kParallelCutoff ? exec : Exec::Serial;
    for_each_index(e, m, [&](std::size_t i) {
      const T* row = a.row(base + i) + base;
      T s(0);
      for (std::size_t j = 0; j < m; ++j) s += row[j] * v[j];
      p[i] = beta * s;
    });
    T vp(0);
    for (std::size_t i = 0; i < m; ++i) vp += v[i] * p[i];
    const T kk = beta * vp / T(2);
    for (std::size_t i = 0; i < m; ++i) p[i] -= kk * v[i];  // p becomes w
    for_each_index(e, m, [&](std::size_t i) {
      T* row = a.row(base + i) + base;
      const T vi = v[i];
      const T wi = p[i];
      for (std::size_t j = 0; j < m; ++j) row[j] -= vi * p[j] + wi * v[j];
    });
    t.off[k] = alpha * scale;
    a(base, k) = t.off[k];
    a(k, base) = t.off[k];
    for (std::size_t i = 1; i < m; ++i) {
      a(base + i, k) = T(0);
      a(k, base + i) = T(0);
    }
    if (q) {
      reflectors.push_back(v);
      betas.push_back(beta);
    }
  }
  for (std::size_t i = 0; i < n; ++i) t.diag[i] = a(i, i);
  if (n >= 2) t.off[n - 2] = a(n - 1, n - 2);
  if (n >= 1) t.off[n - 1] = T(0);

  if (q) {
    *q = DenseMatrix<T>(n, n, T(0));
    for (std::size_t i = 0; i < n; ++i) (*q)(i, i) = T(1);
    for (std::size_t kk = reflectors.size(); kk-- > 0;) {
      const auto& w = reflectors[kk];
      if (w.empty()) continue;
      const std::size_t base = kk + 1;
      const std::size_t m = w.size();
      // Q[base.., :] -= beta w (w^T Q[base.., :]), column by column.
      const Exec e = n >= detail::kParallelCutoff ? exec : Exec::Serial;
      for_each_index(e, n, [&](std::size_t col) {
        T s(0);
        for (std::size_t i = 0; i < m; ++i) s += w[i] * (*q)(base + i, col);
        s *= betas[kk];
        for (std::size_t i = 0; i < m; ++i) (*q)(base + i, col) -= s * w[i];
      });
    }
  }
  return t;
}

// Implicit QL on a symmetric tridiagonal matrix. Eigenvalues are returned in
// t.diag (unsorted). When z is non-null its columns are rotated along, so
// passing Q from the reduction yields eigenvectors of the original matrix.
// The iteration budget is max_iter per eigenvalue on average, shared by all
// of them: clustered spectra can need many sweeps for a single eigenvalue.
template <class T>
void tridiagonal_ql(Tridiagonal<T>& t, std::type_identity_t<DenseMatrix<T>>* z = nullptr, int max_iter = 60) {
  using std::abs;
  const std::size_t n = t.diag.size();
  if (n == 0) return;
  auto& d = t.diag;
  auto& e = t.off;
  e.resize(n);
  e[n - 1] = T(0);
  const T eps = std::numeric_limits<T>::epsilon();
  const T eps2 = eps * eps;
  const T safmin = std::numeric_limits<T>::min();
  const std::size_t budget = static_cast<std::size_t>(max_iter) * n;
  std::size_t iter = 0;
  for (std::size_t l = 0; l < n; ++l) {
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        // Relative deflation test: keeps small eigenvalues of graded
        // matrices accurate.
        if (e[m] * e[m] <= eps2 * abs(d[m]) * abs(d[m + 1]) + safmin) {
          e[m] = T(0);
          break;
        }
      }
      if (m == l) break;
      if (iter++ == budget) {
        throw ConvergenceError("tridiagonal QL did not converge within " + std::to_string(budget) +
                               " iterations");
      }
      T g = (d[l + 1] - d[l]) / (T(2) * e[l]);
      T r = detail::hypot2(g, T(1));
      g = d[m] - d[l] + e[l] / (g + (g >= T(0) ? abs(r) : T(-abs(r))));
      T s(1), c(1), p(0);
      bool underflow = false;
      for (std::size_t ii = m; ii-- > l;) {
        const std::size_t i = ii;
        T f = s * e[i];
        const T b = c * e[i];
        r = detail::hypot2(f, g);
        e[i + 1] = r;
        if (r == T(0)) {
          d[i + 1] -= p;
          e[m] = T(0);
          underflow = true;
          break;
        }
        s = f / r;
        c = g / r;
        g = d[i + 1] - p;
        r = (d[i] - g) * s + T(2) * c * b;
        p = s * r;
        d[i + 1] = g + p;
        g = c * r - b;
        if (z) {
          for (std::size_t k = 0; k < n; ++k) {
            T* row = z->row(k);
            f = row[i + 1];
            row[i + 1] = s * row[i] + c * f;
            row[i] = c * row[i] - s * f;
          }
        }
      }
      if (underflow) continue;
      d[l] -= p;
      e[l] = g;
      e[m] = T(0);
    } while (m != l);
  }
}

}  // namespace eqmix
