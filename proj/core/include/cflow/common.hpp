#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cflow {

// Dense latent / parameter vector. All arithmetic is 64-bit.
using Vec = std::vector<double>;

// Error taxonomy. Configuration errors are programming/setup mistakes
// (dimension mismatches, invalid hyperparameters); input errors are bad
// runtime values; the rest are stage-specific failures.
struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };
struct InputError : std::runtime_error { using std::runtime_error::runtime_error; };
struct NumericalError : std::runtime_error { using std::runtime_error::runtime_error; };
struct IntegrationError : std::runtime_error { using std::runtime_error::runtime_error; };
struct TrainingError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ParseError : std::runtime_error { using std::runtime_error::runtime_error; };
struct IoError : std::runtime_error { using std::runtime_error::runtime_error; };

bool all_finite(std::span<const double> v);
void check_finite(std::span<const double> v, const std::string& what);

Vec zeros(std::size_t n);
Vec add(const Vec& a, const Vec& b);
Vec sub(const Vec& a, const Vec& b);
Vec scaled(const Vec& a, double s);
// y += s * x
void axpy(Vec& y, double s, const Vec& x);
double dot(const Vec& a, const Vec& b);
double squared_norm(const Vec& a);
double norm(const Vec& a);
double squared_dist(const Vec& a, const Vec& b);
double max_abs(const Vec& a);
double max_abs_diff(const Vec& a, const Vec& b);

// Small dense row-major matrix; only what the linear-Gaussian machinery needs.
struct Mat {
  std::size_t rows = 0, cols = 0;
  Vec a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  Mat(std::size_t r, std::size_t c, Vec values);

  double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

  static Mat identity(std::size_t n);
  static Mat scaled_identity(std::size_t n, double s);
};

Vec mat_vec(const Mat& m, const Vec& x);
Mat mat_mul(const Mat& x, const Mat& y);
Mat mat_add(const Mat& x, const Mat& y);
Mat mat_scaled(const Mat& x, double s);
Mat transpose(const Mat& m);
double trace(const Mat& m);

// Solves m x = b for symmetric positive-definite m via Cholesky.
// Throws NumericalError if the factorization breaks down.
Vec solve_spd(Mat m, Vec b);
// Inverse through the same factorization; same failure mode.
Mat inverse_spd(Mat m);

// FNV-1a, used for config hashes and artifact checksums.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(const std::string& text);

}  // namespace cflow
