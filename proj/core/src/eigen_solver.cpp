#include "eegnn/eigen_solver.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "eegnn/errors.hpp"

namespace eegnn {

namespace detail {

namespace {

void swap_rows_cols(Matrix& a, std::size_t i, std::size_t j) {
  if (i == j) return;
  const std::size_t n = a.rows();
  for (std::size_t r = 0; r < n; ++r) std::swap(a(r, i), a(r, j));
  for (std::size_t c = 0; c < n; ++c) std::swap(a(i, c), a(j, c));
}

}  // namespace

void balance(Matrix& a, std::size_t& low, std::size_t& high) {
  const std::size_t n = a.rows();
  low = 0;
  high = n - 1;
  if (n == 1) return;

  // A row whose off-diagonal entries in columns low..high vanish holds an
  // eigenvalue on its diagonal: move it below the active block.
  for (bool moved = true; moved && high > low;) {
    moved = false;
    for (std::size_t j = high + 1; j-- > low;) {
      bool isolated = true;
      for (std::size_t i = low; i <= high && isolated; ++i)
        if (i != j && a(j, i) != 0.0) isolated = false;
      if (isolated) {
        swap_rows_cols(a, j, high);
        if (high == low) return;
        --high;
        moved = true;
        break;
      }
    }
  }
  // Same for columns, moved above the active block.
  for (bool moved = true; moved && high > low;) {
    moved = false;
    for (std::size_t j = low; j <= high; ++j) {
      bool isolated = true;
      for (std::size_t i = low; i <= high && isolated; ++i)
        if (i != j && a(i, j) != 0.0) isolated = false;
      if (isolated) {
        swap_rows_cols(a, j, low);
        ++low;
        moved = true;
        break;
      }
    }
  }

  constexpr double radix = 2.0;
  constexpr double radix2 = radix * radix;
  for (bool unconverged = true; unconverged;) {
    unconverged = false;
    for (std::size_t i = low; i <= high; ++i) {
      double c = 0.0;
      double r = 0.0;
      for (std::size_t j = low; j <= high; ++j) {
        if (j == i) continue;
        c += std::abs(a(j, i));
        r += std::abs(a(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      const double s = c + r;
      double f = 1.0;
      double g = r / radix;
      while (c < g) {
        f *= radix;
        c *= radix2;
      }
      g = r * radix;
      while (c >= g) {
        f /= radix;
        c /= radix2;
      }
      if ((c + r) / f < 0.95 * s) {
        unconverged = true;
        const double inv = 1.0 / f;
        for (std::size_t j = low; j < n; ++j) a(i, j) *= inv;
        for (std::size_t j = 0; j <= high; ++j) a(j, i) *= f;
      }
    }
  }
}

void hessenberg(Matrix& a, std::size_t low, std::size_t high) {
  const std::size_t n = a.rows();
  std::vector<double> u(n);
  for (std::size_t m = low + 1; m < high; ++m) {
    double scale = 0.0;
    for (std::size_t i = m; i <= high; ++i) scale += std::abs(a(i, m - 1));
    if (scale == 0.0) continue;
    double h = 0.0;
    for (std::size_t i = high + 1; i-- > m;) {
      u[i] = a(i, m - 1) / scale;
      h += u[i] * u[i];
    }
    const double g = -std::copysign(std::sqrt(h), u[m]);
    h -= u[m] * g;
    u[m] -= g;
    for (std::size_t j = m; j < n; ++j) {
      double f = 0.0;
      for (std::size_t i = high + 1; i-- > m;) f += u[i] * a(i, j);
      f /= h;
      for (std::size_t i = m; i <= high; ++i) a(i, j) -= f * u[i];
    }
    for (std::size_t i = 0; i <= high; ++i) {
      double f = 0.0;
      for (std::size_t j = high + 1; j-- > m;) f += u[j] * a(i, j);
      f /= h;
      for (std::size_t j = m; j <= high; ++j) a(i, j) -= f * u[j];
    }
    a(m, m - 1) = scale * g;
    for (std::size_t i = m + 1; i <= high; ++i) a(i, m - 1) = 0.0;
  }
}

}  // namespace detail

namespace {

// Francis double-shift QR on an upper Hessenberg matrix.
std::vector<std::complex<double>> hessenberg_qr(Matrix& a, std::size_t max_iterations) {
  const int n = static_cast<int>(a.rows());
  std::vector<std::complex<double>> w(a.rows());
  const double eps = std::numeric_limits<double>::epsilon();
  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));

  std::size_t total = 0;
  int nn = n - 1;
  double t = 0.0;
  double p = 0, q = 0, r = 0, s = 0, x = 0, y = 0, z = 0, wv = 0;
  while (nn >= 0) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l > 0; --l) {
        s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) <= eps * s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      x = a(nn, nn);
      if (l == nn) {
        w[nn--] = x + t;
      } else {
        y = a(nn - 1, nn - 1);
        wv = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + wv;
          z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + std::copysign(z, p);
            w[nn - 1] = w[nn] = x + z;
            if (z != 0.0) w[nn] = x - wv / z;
          } else {
            w[nn] = {x + p, -z};
            w[nn - 1] = std::conj(w[nn]);
          }
          nn -= 2;
        } else {
          if (++total > max_iterations)
            throw ConvergenceError("eigenvalues: no convergence after " +
                                   std::to_string(max_iterations) + " QR iterations");
          if (its > 0 && its % 10 == 0) {
            t += x;
            for (int i = 0; i <= nn; ++i) a(i, i) -= x;
            s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            wv = -0.4375 * s * s;
          }
          ++its;
          int m = nn - 2;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            s = y - z;
            p = (r * s - wv) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
            if (u <= eps * v) break;
          }
          for (int i = m; i < nn - 1; ++i) {
            a(i + 2, i) = 0.0;
            if (i != m) a(i + 2, i - 1) = 0.0;
          }
          for (int k = m; k < nn; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = a(k + 2, k - 1);
              if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            if ((s = std::copysign(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k + 1 != nn) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k + 1 != nn) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l + 1 < nn);
  }
  return w;
}

}  // namespace

std::vector<std::complex<double>> eigenvalues(const Matrix& a, std::size_t max_iterations) {
  if (a.rows() != a.cols()) throw ShapeError("eigenvalues: non-square " + shape_string(a));
  if (a.rows() == 0) return {};
  if (!all_finite(a)) throw InputError("matrix has non-finite entries", "matrix");
  if (max_iterations == 0) max_iterations = 1000 * a.rows();
  Matrix work = a;
  std::size_t low = 0;
  std::size_t high = 0;
  detail::balance(work, low, high);
  detail::hessenberg(work, low, high);
  return hessenberg_qr(work, max_iterations);
}

}  // namespace eegnn
