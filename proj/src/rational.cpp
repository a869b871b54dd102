#include "subsweep/rational.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace subsweep {

namespace {

double max_abs(const Poly& p) {
  double m = 0.0;
  for (double c : p) m = std::max(m, std::abs(c));
  return m;
}

void check_degree(const Poly& p, const char* what) {
  if (poly_degree(p) > kMaxPolyDegree)
    throw std::length_error(std::string(what) + ": polynomial degree exceeds cap");
}

}  // namespace

int poly_degree(const Poly& p) {
  for (int k = static_cast<int>(p.size()) - 1; k >= 0; --k)
    if (p[static_cast<size_t>(k)] != 0.0) return k;
  return -1;
}

Poly poly_trim(Poly p, double rel_tol) {
  const double floor = max_abs(p) * rel_tol;
  size_t n = p.size();
  while (n > 1 && std::abs(p[n - 1]) <= floor) --n;
  p.resize(n);
  if (n == 1 && std::abs(p[0]) <= floor) p[0] = 0.0;
  return p;
}

Poly poly_trim_scaled(Poly p, double w, double rel_tol) {
  if (w <= 0.0) w = 1.0;
  std::vector<double> mag(p.size());
  double m = 0.0, pw = 1.0;
  for (size_t k = 0; k < p.size(); ++k) {
    mag[k] = std::abs(p[k]) * pw;
    m = std::max(m, mag[k]);
    pw *= w;
  }
  const double floor = m * rel_tol;
  size_t n = p.size();
  while (n > 1 && mag[n - 1] <= floor) --n;
  p.resize(n);
  if (n == 1 && mag[0] <= floor) p[0] = 0.0;
  return p;
}

bool poly_is_zero(const Poly& p) { return poly_degree(p) < 0; }

Poly poly_add(const Poly& a, const Poly& b) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (size_t i = 0; i < b.size(); ++i) r[i] += b[i];
  return r;
}

Poly poly_sub(const Poly& a, const Poly& b) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (size_t i = 0; i < b.size(); ++i) r[i] -= b[i];
  return r;
}

Poly poly_mul(const Poly& a, const Poly& b) {
  if (poly_is_zero(a) || poly_is_zero(b)) return Poly{0.0};
  Poly r(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  check_degree(r, "poly_mul");
  return r;
}

Poly poly_scale(const Poly& a, double k) {
  Poly r = a;
  for (double& c : r) c *= k;
  return r;
}

bool poly_equal(const Poly& a, const Poly& b) {
  const int da = poly_degree(a), db = poly_degree(b);
  if (da != db) return false;
  for (int k = 0; k <= da; ++k)
    if (a[static_cast<size_t>(k)] != b[static_cast<size_t>(k)]) return false;
  return true;
}

cplx poly_eval(const Poly& p, cplx s, double omega_scale) {
  if (p.empty()) return 0.0;
  const double w = omega_scale > 0.0 ? omega_scale : 1.0;
  const cplx x = s / w;
  // Horner on coefficients rescaled so x is O(1) near |s| ~ omega_scale.
  std::vector<double> sc(p.size());
  double pw = 1.0;
  for (size_t k = 0; k < p.size(); ++k) {
    sc[k] = p[k] * pw;
    pw *= w;
  }
  cplx acc = sc.back();
  for (int k = static_cast<int>(sc.size()) - 2; k >= 0; --k)
    acc = acc * x + sc[static_cast<size_t>(k)];
  return acc;
}

std::vector<cplx> poly_roots(const Poly& p, double omega_scale) {
  const int n = poly_degree(p);
  if (n <= 0) return {};
  const double w = omega_scale > 0.0 ? omega_scale : 1.0;
  // Scaled coefficients: q(x) = p(w*x), roots of q times w are roots of p.
  std::vector<double> sc(static_cast<size_t>(n) + 1);
  double pw = 1.0;
  for (int k = 0; k <= n; ++k) {
    sc[static_cast<size_t>(k)] = p[static_cast<size_t>(k)] * pw;
    pw *= w;
  }
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
  const double lead = sc[static_cast<size_t>(n)];
  for (int k = 0; k < n; ++k) comp(k, n - 1) = -sc[static_cast<size_t>(k)] / lead;
  for (int k = 1; k < n; ++k) comp(k, k - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, /*computeEigenvectors=*/false);
  std::vector<cplx> out(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) out[static_cast<size_t>(k)] = es.eigenvalues()(k) * w;
  std::sort(out.begin(), out.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return out;
}

Poly poly_from_roots(const std::vector<cplx>& roots, double lead) {
  // Conjugate pairing keeps coefficients exactly real.
  Poly acc{lead};
  std::vector<cplx> complexes;
  for (const cplx& r : roots) {
    if (std::abs(r.imag()) <= 1e-9 * (1.0 + std::abs(r)))
      acc = poly_mul(acc, Poly{-r.real(), 1.0});
    else
      complexes.push_back(r);
  }
  std::vector<bool> used(complexes.size(), false);
  for (size_t i = 0; i < complexes.size(); ++i) {
    if (used[i]) continue;
    const cplx r = complexes[i];
    size_t best = complexes.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t j = i + 1; j < complexes.size(); ++j) {
      if (used[j]) continue;
      const double d = std::abs(complexes[j] - std::conj(r));
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best == complexes.size())
      throw std::invalid_argument("poly_from_roots: unpaired complex root");
    used[i] = used[best] = true;
    const cplx rc = complexes[best];
    // (s - r)(s - rc): constant r*rc, linear -(r + rc); both real after pairing.
    acc = poly_mul(acc, Poly{(r * rc).real(), -(r + rc).real(), 1.0});
  }
  return acc;
}

CPoly cpoly_mul(const CPoly& a, const CPoly& b) {
  CPoly r(a.size() + b.size() - 1, cplx(0.0, 0.0));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

CPoly cpoly_conj(const CPoly& a) {
  CPoly r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = std::conj(a[i]);
  return r;
}

CPoly cpoly_shift(const CPoly& p, cplx c) {
  // Repeated synthetic division (Shaw-Traub): after pass j, b[j] holds the
  // j-th coefficient of p(s + c). Well conditioned when |c| is O(1) in the
  // working variable.
  CPoly b = p;
  const int n = static_cast<int>(p.size()) - 1;
  for (int j = 0; j < n; ++j)
    for (int k = n - 1; k >= j; --k)
      b[static_cast<size_t>(k)] += c * b[static_cast<size_t>(k + 1)];
  return b;
}

RationalFn RationalFn::constant(double k, double omega_scale) {
  return RationalFn{Poly{k}, Poly{1.0}, omega_scale};
}

RationalFn RationalFn::zero(double omega_scale) {
  return RationalFn{Poly{0.0}, Poly{1.0}, omega_scale};
}

RationalFn RationalFn::monomial(double k, int n, double omega_scale) {
  Poly num(static_cast<size_t>(n) + 1, 0.0);
  num.back() = k;
  return RationalFn{std::move(num), Poly{1.0}, omega_scale};
}

int RationalFn::order() const { return std::max(poly_degree(num), poly_degree(den)); }

cplx RationalFn::eval(cplx s) const {
  return poly_eval(num, s, omega_scale) / poly_eval(den, s, omega_scale);
}

void RationalFn::normalize() {
  num = poly_trim_scaled(std::move(num), omega_scale);
  den = poly_trim_scaled(std::move(den), omega_scale);
  if (poly_is_zero(den)) throw std::invalid_argument("RationalFn: zero denominator");
  const double lead = den[static_cast<size_t>(poly_degree(den))];
  num = poly_scale(num, 1.0 / lead);
  den = poly_scale(den, 1.0 / lead);
  den[static_cast<size_t>(poly_degree(den))] = 1.0;  // exact
}

RationalFn RationalFn::inv() const {
  if (is_zero()) throw std::invalid_argument("RationalFn::inv of zero");
  RationalFn r{den, num, omega_scale};
  r.normalize();
  return r;
}

namespace {
double merged_scale(const RationalFn& a, const RationalFn& b) {
  return std::max(a.omega_scale, b.omega_scale);
}
}  // namespace

RationalFn operator+(const RationalFn& a, const RationalFn& b) {
  RationalFn r;
  r.omega_scale = merged_scale(a, b);
  if (poly_equal(a.den, b.den)) {
    r.num = poly_add(a.num, b.num);
    r.den = a.den;
  } else {
    r.num = poly_add(poly_mul(a.num, b.den), poly_mul(b.num, a.den));
    r.den = poly_mul(a.den, b.den);
  }
  r.normalize();
  return r;
}

RationalFn operator-(const RationalFn& a, const RationalFn& b) { return a + (-b); }

RationalFn operator-(const RationalFn& a) {
  RationalFn r = a;
  r.num = poly_scale(r.num, -1.0);
  return r;
}

RationalFn operator*(const RationalFn& a, const RationalFn& b) {
  RationalFn r;
  r.omega_scale = merged_scale(a, b);
  r.num = poly_mul(a.num, b.num);
  r.den = poly_mul(a.den, b.den);
  r.normalize();
  return r;
}

RationalFn operator/(const RationalFn& a, const RationalFn& b) { return a * b.inv(); }

RationalFn operator*(double k, const RationalFn& a) {
  RationalFn r = a;
  r.num = poly_scale(r.num, k);
  return r;
}

RationalFn operator*(const RationalFn& a, double k) { return k * a; }

std::vector<cplx> poles(const RationalFn& f) { return poly_roots(f.den, f.omega_scale); }
std::vector<cplx> zeros(const RationalFn& f) { return poly_roots(f.num, f.omega_scale); }

RationalFn simplify(const RationalFn& f, double root_match_tol) {
  if (f.is_zero() || poly_degree(f.num) == 0 || poly_degree(f.den) == 0) return f;
  std::vector<cplx> zn = poly_roots(f.num, f.omega_scale);
  std::vector<cplx> zd = poly_roots(f.den, f.omega_scale);
  std::vector<bool> kill_n(zn.size(), false), kill_d(zd.size(), false);
  bool any = false;
  for (size_t i = 0; i < zn.size(); ++i) {
    for (size_t j = 0; j < zd.size(); ++j) {
      if (kill_d[j]) continue;
      const double tol = root_match_tol * std::max(1.0, std::max(std::abs(zn[i]), std::abs(zd[j])));
      if (std::abs(zn[i] - zd[j]) <= tol) {
        kill_n[i] = kill_d[j] = true;
        any = true;
        break;
      }
    }
  }
  if (!any) return f;
  std::vector<cplx> rn, rd;
  for (size_t i = 0; i < zn.size(); ++i)
    if (!kill_n[i]) rn.push_back(zn[i]);
  for (size_t j = 0; j < zd.size(); ++j)
    if (!kill_d[j]) rd.push_back(zd[j]);
  RationalFn r;
  r.omega_scale = f.omega_scale;
  const double lead_n = f.num[static_cast<size_t>(poly_degree(f.num))];
  const double lead_d = f.den[static_cast<size_t>(poly_degree(f.den))];
  r.num = poly_from_roots(rn, lead_n);
  r.den = poly_from_roots(rd, lead_d);
  r.normalize();
  return r;
}

RationalMatrix2 RationalMatrix2::identity(double omega_scale) {
  RationalMatrix2 m;
  m.a11 = RationalFn::constant(1.0);
  m.a22 = RationalFn::constant(1.0);
  m.a12 = RationalFn::zero();
  m.a21 = RationalFn::zero();
  m.a11.omega_scale = m.a12.omega_scale = m.a21.omega_scale = m.a22.omega_scale = omega_scale;
  return m;
}

RationalFn RationalMatrix2::det() const { return simplify(a11 * a22 - a12 * a21); }

RationalMatrix2 RationalMatrix2::inv() const {
  const RationalFn d = det();
  if (d.is_zero()) throw std::invalid_argument("RationalMatrix2::inv: singular matrix");
  RationalMatrix2 r;
  r.a11 = simplify(a22 / d);
  r.a12 = simplify(-a12 / d);
  r.a21 = simplify(-a21 / d);
  r.a22 = simplify(a11 / d);
  return r;
}

RationalMatrix2 operator+(const RationalMatrix2& a, const RationalMatrix2& b) {
  RationalMatrix2 r;
  r.a11 = a.a11 + b.a11;
  r.a12 = a.a12 + b.a12;
  r.a21 = a.a21 + b.a21;
  r.a22 = a.a22 + b.a22;
  return r;
}

RationalMatrix2 operator*(const RationalMatrix2& a, const RationalMatrix2& b) {
  RationalMatrix2 r;
  r.a11 = simplify(a.a11 * b.a11 + a.a12 * b.a21);
  r.a12 = simplify(a.a11 * b.a12 + a.a12 * b.a22);
  r.a21 = simplify(a.a21 * b.a11 + a.a22 * b.a21);
  r.a22 = simplify(a.a21 * b.a12 + a.a22 * b.a22);
  return r;
}

void eval_matrix(const RationalMatrix2& m, cplx s, cplx out[4]) {
  out[0] = m.a11.eval(s);
  out[1] = m.a12.eval(s);
  out[2] = m.a21.eval(s);
  out[3] = m.a22.eval(s);
}

}  // namespace subsweep
