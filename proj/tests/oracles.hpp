// Test-only reference implementations, kept independent of the library code
// paths they are used to check.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace oracles {

// Rotation about z by brute-force trig, no shared code with so3_exp.
inline Eigen::Matrix3d rot_z(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

// Rodrigues formula written out elementwise.
inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle) {
  double theta = axis_angle.norm();
  if (theta < 1e-14) return Eigen::Matrix3d::Identity();
  Eigen::Vector3d n = axis_angle / theta;
  double c = std::cos(theta), s = std::sin(theta), v = 1.0 - c;
  Eigen::Matrix3d r;
  r(0, 0) = c + n(0) * n(0) * v;
  r(0, 1) = n(0) * n(1) * v - n(2) * s;
  r(0, 2) = n(0) * n(2) * v + n(1) * s;
  r(1, 0) = n(1) * n(0) * v + n(2) * s;
  r(1, 1) = c + n(1) * n(1) * v;
  r(1, 2) = n(1) * n(2) * v - n(0) * s;
  r(2, 0) = n(2) * n(0) * v - n(1) * s;
  r(2, 1) = n(2) * n(1) * v + n(0) * s;
  r(2, 2) = c + n(2) * n(2) * v;
  return r;
}

// Truncated power series for the matrix exponential (near-identity use only).
inline Eigen::Matrix3d series_exp(const Eigen::Matrix3d& m, int terms = 40) {
  Eigen::Matrix3d sum = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d p = Eigen::Matrix3d::Identity();
  for (int k = 1; k <= terms; ++k) {
    p = p * m / static_cast<double>(k);
    sum += p;
  }
  return sum;
}

// Mercator series for log(I + X), ||X|| < 1.
inline Eigen::Matrix3d series_log(const Eigen::Matrix3d& m, int terms = 60) {
  Eigen::Matrix3d x = m - Eigen::Matrix3d::Identity();
  Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d p = Eigen::Matrix3d::Identity();
  for (int k = 1; k <= terms; ++k) {
    p = p * x;
    sum += (k % 2 == 1 ? 1.0 : -1.0) / k * p;
  }
  return sum;
}

// Matrix inverse by Gaussian elimination with partial pivoting.
inline Eigen::Matrix3d gauss_inverse(Eigen::Matrix3d a) {
  Eigen::Matrix3d inv = Eigen::Matrix3d::Identity();
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    a.row(col).swap(a.row(piv));
    inv.row(col).swap(inv.row(piv));
    double d = a(col, col);
    a.row(col) /= d;
    inv.row(col) /= d;
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      double f = a(r, col);
      a.row(r) -= f * a.row(col);
      inv.row(r) -= f * inv.row(col);
    }
  }
  return inv;
}

// Legendre polynomial P_l by the three-term recurrence.
inline double legendre_p(int l, double x) {
  double p0 = 1.0, p1 = x;
  if (l == 0) return p0;
  if (l == 1) return p1;
  for (int k = 2; k <= l; ++k) {
    double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Standard Laguerre polynomial L_n by recurrence.
inline double laguerre_l(int n, double x) {
  double p0 = 1.0, p1 = 1.0 - x;
  if (n == 0) return p0;
  if (n == 1) return p1;
  for (int k = 2; k <= n; ++k) {
    double p2 = ((2.0 * k - 1.0 - x) * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Direct valid-region cross-correlation with nested loops.
inline std::vector<double> naive_conv3d(const std::vector<double>& in, int cin, int nx,
                                        int ny, int nz, const std::vector<double>& kernel,
                                        int cout, int kx, int ky, int kz,
                                        const std::vector<double>& bias) {
  int ox = nx - kx + 1, oy = ny - ky + 1, oz = nz - kz + 1;
  std::vector<double> out(static_cast<std::size_t>(cout) * ox * oy * oz, 0.0);
  auto in_at = [&](int c, int x, int y, int z) {
    return in[((static_cast<std::size_t>(c) * nx + x) * ny + y) * nz + z];
  };
  auto k_at = [&](int co, int ci, int x, int y, int z) {
    return kernel[(((static_cast<std::size_t>(co) * cin + ci) * kx + x) * ky + y) * kz + z];
  };
  for (int co = 0; co < cout; ++co)
    for (int x = 0; x < ox; ++x)
      for (int y = 0; y < oy; ++y)
        for (int z = 0; z < oz; ++z) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int a = 0; a < kx; ++a)
              for (int b = 0; b < ky; ++b)
                for (int c = 0; c < kz; ++c)
                  acc += in_at(ci, x + a, y + b, z + c) * k_at(co, ci, a, b, c);
          out[((static_cast<std::size_t>(co) * ox + x) * oy + y) * oz + z] = acc;
        }
  return out;
}

}  // namespace oracles
