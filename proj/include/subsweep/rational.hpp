#pragma once

#include <complex>
#include <vector>

// Real-coefficient polynomial and rational-function algebra in the Laplace
// variable. Everything here is exact coefficient arithmetic; frequency
// responses are produced by evaluation at s = j*2*pi*f.

namespace subsweep {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Coefficients ascending in powers of s: p[k] multiplies s^k.
using Poly = std::vector<double>;
using CPoly = std::vector<cplx>;

// Hard cap on polynomial degree; operations exceeding it throw. Keeps the
// adjugate/determinant algebra honest about growth.
inline constexpr int kMaxPolyDegree = 24;

int poly_degree(const Poly& p);                 // -1 for the zero polynomial
Poly poly_trim(Poly p, double rel_tol = 1e-13); // drop negligible high-order coeffs
// Like poly_trim, but judges each coefficient by its contribution at |s| ~ w,
// where term k weighs |c_k| * w^k. Use for polynomials in a physical frequency
// variable, whose raw coefficients shrink with order without being negligible.
Poly poly_trim_scaled(Poly p, double w, double rel_tol = 1e-13);
bool poly_is_zero(const Poly& p);
Poly poly_add(const Poly& a, const Poly& b);
Poly poly_sub(const Poly& a, const Poly& b);
Poly poly_mul(const Poly& a, const Poly& b);
Poly poly_scale(const Poly& a, double k);
bool poly_equal(const Poly& a, const Poly& b);  // exact, after trivial trim

// Balanced evaluation: Horner in x = s/omega_scale on rescaled coefficients.
// omega_scale near the frequencies of interest keeps intermediates O(1).
cplx poly_eval(const Poly& p, cplx s, double omega_scale = 1.0);

// Roots via the companion matrix of the omega-scaled monic polynomial.
std::vector<cplx> poly_roots(const Poly& p, double omega_scale = 1.0);

// Real-coefficient reconstruction; conjugate pairs are detected and combined.
Poly poly_from_roots(const std::vector<cplx>& roots, double lead);

CPoly cpoly_mul(const CPoly& a, const CPoly& b);
CPoly cpoly_conj(const CPoly& a);               // conjugate each coefficient
// Taylor shift: coefficients of p(s + c).
CPoly cpoly_shift(const CPoly& p, cplx c);

struct RationalFn {
  Poly num{0.0};
  Poly den{1.0};
  double omega_scale = 1.0;  // evaluation balance, carried through arithmetic

  static RationalFn constant(double k, double omega_scale = 1.0);
  static RationalFn zero(double omega_scale = 1.0);
  // k * s^n
  static RationalFn monomial(double k, int n, double omega_scale = 1.0);

  bool is_zero() const { return poly_is_zero(num); }
  int order() const;  // max(deg num, deg den)

  cplx eval(cplx s) const;
  cplx eval_hz(double f_hz) const { return eval(cplx(0.0, 2.0 * kPi * f_hz)); }

  // Leading denominator coefficient scaled to 1.
  void normalize();

  RationalFn inv() const;
};

RationalFn operator+(const RationalFn& a, const RationalFn& b);
RationalFn operator-(const RationalFn& a, const RationalFn& b);
RationalFn operator*(const RationalFn& a, const RationalFn& b);
RationalFn operator/(const RationalFn& a, const RationalFn& b);
RationalFn operator*(double k, const RationalFn& a);
RationalFn operator*(const RationalFn& a, double k);
RationalFn operator-(const RationalFn& a);

std::vector<cplx> poles(const RationalFn& f);
std::vector<cplx> zeros(const RationalFn& f);

// Cancel num/den root pairs closer than root_match_tol (relative for large
// roots, absolute near zero). Untouched input is returned bit-identical when
// nothing matches.
RationalFn simplify(const RationalFn& f, double root_match_tol = 1e-8);

struct RationalMatrix2 {
  RationalFn a11, a12, a21, a22;

  static RationalMatrix2 identity(double omega_scale = 1.0);
  RationalFn det() const;
  RationalMatrix2 inv() const;  // adjugate / det, entries simplified
};

RationalMatrix2 operator+(const RationalMatrix2& a, const RationalMatrix2& b);
RationalMatrix2 operator*(const RationalMatrix2& a, const RationalMatrix2& b);

// Evaluate the matrix at one complex frequency.
void eval_matrix(const RationalMatrix2& m, cplx s, cplx out[4]);

}  // namespace subsweep
