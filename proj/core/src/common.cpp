#include "cflow/common.hpp"

#include <algorithm>

namespace cflow {

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_finite(std::span<const double> v, const std::string& what) {
  if (!all_finite(v)) throw InputError(what + ": non-finite value");
}

Vec zeros(std::size_t n) { return Vec(n, 0.0); }

Vec add(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ConfigError("add: length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vec sub(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ConfigError("sub: length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vec scaled(const Vec& a, double s) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

void axpy(Vec& y, double s, const Vec& x) {
  if (y.size() != x.size()) throw ConfigError("axpy: length mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ConfigError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(const Vec& a) {
  double acc = 0.0;
  for (double x : a) acc += x * x;
  return acc;
}

double norm(const Vec& a) { return std::sqrt(squared_norm(a)); }

double squared_dist(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ConfigError("squared_dist: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double max_abs(const Vec& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::fabs(x));
  return m;
}

double max_abs_diff(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ConfigError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

Mat::Mat(std::size_t r, std::size_t c, Vec values) : rows(r), cols(c), a(std::move(values)) {
  if (a.size() != rows * cols) throw ConfigError("Mat: element count does not match shape");
}

Mat Mat::identity(std::size_t n) { return scaled_identity(n, 1.0); }

Mat Mat::scaled_identity(std::size_t n, double s) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = s;
  return m;
}

Vec mat_vec(const Mat& m, const Vec& x) {
  if (m.cols != x.size()) throw ConfigError("mat_vec: shape mismatch");
  Vec out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += m(r, c) * x[c];
    out[r] = acc;
  }
  return out;
}

Mat mat_mul(const Mat& x, const Mat& y) {
  if (x.cols != y.rows) throw ConfigError("mat_mul: shape mismatch");
  Mat out(x.rows, y.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t k = 0; k < x.cols; ++k) {
      const double v = x(r, k);
      if (v == 0.0) continue;
      for (std::size_t c = 0; c < y.cols; ++c) out(r, c) += v * y(k, c);
    }
  }
  return out;
}

Mat mat_add(const Mat& x, const Mat& y) {
  if (x.rows != y.rows || x.cols != y.cols) throw ConfigError("mat_add: shape mismatch");
  Mat out = x;
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += y.a[i];
  return out;
}

Mat mat_scaled(const Mat& x, double s) {
  Mat out = x;
  for (double& v : out.a) v *= s;
  return out;
}

Mat transpose(const Mat& m) {
  Mat out(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out(c, r) = m(r, c);
  return out;
}

double trace(const Mat& m) {
  if (m.rows != m.cols) throw ConfigError("trace: not square");
  double acc = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) acc += m(i, i);
  return acc;
}

namespace {

// In-place lower Cholesky; returns false when the matrix is not SPD.
bool cholesky(Mat& m) {
  if (m.rows != m.cols) return false;
  const std::size_t n = m.rows;
  for (std::size_t j = 0; j < n; ++j) {
    double d = m(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= m(j, k) * m(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double root = std::sqrt(d);
    m(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = m(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= m(i, k) * m(j, k);
      m(i, j) = acc / root;
    }
  }
  return true;
}

Vec chol_solve(const Mat& l, Vec b) {
  const std::size_t n = l.rows;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = b[i];
    for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * b[k];
    b[i] = acc / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double acc = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) acc -= l(k, ii) * b[k];
    b[ii] = acc / l(ii, ii);
  }
  return b;
}

}  // namespace

Vec solve_spd(Mat m, Vec b) {
  if (m.rows != b.size()) throw ConfigError("solve_spd: shape mismatch");
  if (!cholesky(m)) throw NumericalError("solve_spd: matrix is not positive definite");
  return chol_solve(m, std::move(b));
}

Mat inverse_spd(Mat m) {
  const std::size_t n = m.rows;
  Mat chol = m;
  if (!cholesky(chol)) throw NumericalError("inverse_spd: matrix is not positive definite");
  Mat out(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    Vec e(n, 0.0);
    e[c] = 1.0;
    Vec col = chol_solve(chol, std::move(e));
    for (std::size_t r = 0; r < n; ++r) out(r, c) = col[r];
  }
  return out;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& text) {
  return fnv1a64(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

}  // namespace cflow
