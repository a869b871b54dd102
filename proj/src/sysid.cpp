#include "subsweep/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "subsweep/analytic.hpp"  // frame_rotate

namespace subsweep {

namespace {

constexpr double kTau = 2.0 * kPi;

double db20(double x) { return 20.0 * std::log10(std::max(x, 1e-300)); }

}  // namespace

const char* tf_channel_name(TfChannel channel) {
  switch (channel) {
    case TfChannel::MagOverP: return "mag_over_p";
    case TfChannel::AngOverP: return "ang_over_p";
    case TfChannel::VdOverId: return "vd_over_id";
    case TfChannel::VqOverId: return "vq_over_id";
    case TfChannel::VdOverIq: return "vd_over_iq";
    case TfChannel::VqOverIq: return "vq_over_iq";
  }
  return "unknown";
}

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Measured: return "measured";
    case Provenance::Analytic: return "analytic";
    case Provenance::CurrentInjection: return "current_injection";
  }
  return "unknown";
}

Provenance provenance_from_name(const std::string& name) {
  if (name == "measured") return Provenance::Measured;
  if (name == "analytic") return Provenance::Analytic;
  if (name == "current_injection") return Provenance::CurrentInjection;
  throw std::invalid_argument("unknown provenance '" + name + "'");
}

std::vector<double> log_frequency_grid(double f_lo, double f_hi, int n) {
  if (!(f_lo > 0.0) || !(f_hi > f_lo))
    throw std::invalid_argument("log_frequency_grid: need 0 < f_lo < f_hi");
  if (n < 2) throw std::invalid_argument("log_frequency_grid: need at least 2 points");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double l0 = std::log(f_lo), l1 = std::log(f_hi);
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = std::exp(l0 + (l1 - l0) * i / (n - 1));
  out.front() = f_lo;
  out.back() = f_hi;
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// Empirical frequency response
// ---------------------------------------------------------------------------

struct Etfe {
  std::vector<double> amp_u;  // sqrt of the input auto-spectrum sum
  std::vector<cplx> h;        // cross / auto ratio
};

// Discrete-time transforms of u and y evaluated at the grid frequencies,
// Welch-averaged over `segments` Hann-windowed half-overlapping segments
// (one rectangular segment when segments <= 1).
Etfe estimate_frequency_response(const std::vector<double>& u,
                                 const std::vector<double>& y, double rate,
                                 const std::vector<double>& grid_hz, int segments) {
  const std::size_t n = u.size();
  const int k_seg = std::max(1, segments);
  const std::size_t seg_len =
      (k_seg == 1) ? n : (2 * n) / (static_cast<std::size_t>(k_seg) + 1);
  if (seg_len < 8)
    throw std::invalid_argument("estimate_tf: record too short for the segmentation");
  const std::size_t step = (k_seg == 1) ? n : seg_len / 2;

  std::vector<double> window(seg_len, 1.0);
  if (k_seg > 1)
    for (std::size_t m = 0; m < seg_len; ++m)
      window[m] = 0.5 * (1.0 - std::cos(kTau * static_cast<double>(m) /
                                        static_cast<double>(seg_len - 1)));

  const std::size_t nf = grid_hz.size();
  std::vector<double> suu(nf, 0.0);
  std::vector<cplx> suy(nf, cplx(0.0, 0.0));

  for (std::size_t start = 0; start + seg_len <= n; start += step) {
    for (std::size_t kf = 0; kf < nf; ++kf) {
      const cplx rot = std::polar(1.0, -kTau * grid_hz[kf] / rate);
      // Phase referenced to the record origin so segments stay aligned.
      cplx c = std::polar(1.0, -kTau * grid_hz[kf] * static_cast<double>(start) / rate);
      cplx uf(0.0, 0.0), yf(0.0, 0.0);
      for (std::size_t m = 0; m < seg_len; ++m) {
        const double w = window[m];
        uf += w * u[start + m] * c;
        yf += w * y[start + m] * c;
        c *= rot;
      }
      suu[kf] += std::norm(uf);
      suy[kf] += std::conj(uf) * yf;
    }
    if (k_seg == 1) break;
  }

  Etfe out;
  out.amp_u.resize(nf);
  out.h.resize(nf);
  for (std::size_t kf = 0; kf < nf; ++kf) {
    out.amp_u[kf] = std::sqrt(suu[kf]);
    out.h[kf] = (suu[kf] > 0.0) ? suy[kf] / suu[kf] : cplx(0.0, 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Iterated weighted linear least squares on the frequency response
// ---------------------------------------------------------------------------

// Fit N(x)/D(x), deg N = order, D monic of degree order, x = s / omega_sc,
// to the response samples; weights iterate as 1/|D_prev|^2.
// Returns x-domain coefficients: num size order+1, den size order+1 (monic).
void sk_fit(const std::vector<double>& freqs_hz, const std::vector<cplx>& h,
            int order, double omega_sc, std::vector<double>& num_x,
            std::vector<double>& den_x) {
  const std::size_t kpts = freqs_hz.size();
  const int nb = order + 1, na = order;
  const int ncol = nb + na;

  std::vector<cplx> x(kpts);
  for (std::size_t k = 0; k < kpts; ++k)
    x[k] = cplx(0.0, kTau * freqs_hz[k] / omega_sc);

  std::vector<double> w(kpts, 1.0);
  Eigen::VectorXd theta(ncol);
  for (int iter = 0; iter < 20; ++iter) {
    Eigen::MatrixXd a(2 * kpts, ncol);
    Eigen::VectorXd rhs(2 * kpts);
    for (std::size_t k = 0; k < kpts; ++k) {
      const double sw = std::sqrt(w[k]);
      cplx xp(1.0, 0.0);
      std::vector<cplx> pows(static_cast<std::size_t>(order) + 1);
      for (int p = 0; p <= order; ++p) {
        pows[static_cast<std::size_t>(p)] = xp;
        xp *= x[k];
      }
      for (int p = 0; p < nb; ++p) {
        const cplx v = sw * pows[static_cast<std::size_t>(p)];
        a(2 * k, p) = v.real();
        a(2 * k + 1, p) = v.imag();
      }
      for (int p = 0; p < na; ++p) {
        const cplx v = -sw * h[k] * pows[static_cast<std::size_t>(p)];
        a(2 * k, nb + p) = v.real();
        a(2 * k + 1, nb + p) = v.imag();
      }
      const cplx r = sw * h[k] * pows[static_cast<std::size_t>(order)];
      rhs(2 * k) = r.real();
      rhs(2 * k + 1) = r.imag();
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    theta = qr.solve(rhs);
    if (!theta.allFinite()) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
      const double cond = svd.singularValues()(0) /
                          std::max(svd.singularValues()(svd.singularValues().size() - 1),
                                   1e-300);
      throw std::runtime_error(
          "estimate_tf: rank-deficient regression (condition number ~ " +
          std::to_string(cond) + ")");
    }

    std::vector<double> w_new(kpts);
    double max_change = 0.0, w_scale = 0.0;
    for (std::size_t k = 0; k < kpts; ++k) {
      cplx d(0.0, 0.0), xp(1.0, 0.0);
      for (int p = 0; p < na; ++p) {
        d += theta(nb + p) * xp;
        xp *= x[k];
      }
      d += xp;  // monic leading term
      w_new[k] = 1.0 / std::max(std::norm(d), 1e-30);
      w_scale = std::max(w_scale, w_new[k]);
    }
    for (std::size_t k = 0; k < kpts; ++k)
      max_change = std::max(max_change, std::abs(w_new[k] - w[k]));
    w = std::move(w_new);
    if (iter > 0 && max_change < 1e-6 * std::max(w_scale, 1e-300)) break;
  }

  num_x.assign(static_cast<std::size_t>(nb), 0.0);
  den_x.assign(static_cast<std::size_t>(order) + 1, 0.0);
  for (int p = 0; p < nb; ++p) num_x[static_cast<std::size_t>(p)] = theta(p);
  for (int p = 0; p < na; ++p) den_x[static_cast<std::size_t>(p)] = theta(nb + p);
  den_x[static_cast<std::size_t>(order)] = 1.0;
}

// ---------------------------------------------------------------------------
// Zero-state time-domain simulation (controllable canonical form, first-order
// hold, exact matrix-exponential discretization in scaled time)
// ---------------------------------------------------------------------------

struct FohStepper {
  Eigen::MatrixXd phi;   // state transition
  Eigen::VectorXd gam0;  // weight of u_k
  Eigen::VectorXd gam1;  // weight of u_{k+1}
};

// den_x: monic, degree n >= 1, x-domain; h_tau: step in scaled time.
FohStepper make_foh(const std::vector<double>& den_x, double h_tau) {
  const int n = static_cast<int>(den_x.size()) - 1;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 2, n + 2);
  for (int i = 0; i + 1 < n; ++i) m(i, i + 1) = 1.0;
  for (int j = 0; j < n; ++j) m(n - 1, j) = -den_x[static_cast<std::size_t>(j)];
  m(n - 1, n) = 1.0;  // input column (B = e_n)
  m(n, n + 1) = 1.0;  // ramp generator
  const Eigen::MatrixXd e = (m * h_tau).exp();

  FohStepper s;
  s.phi = e.topLeftCorner(n, n);
  const Eigen::VectorXd gamma = e.block(0, n, n, 1);        // zero-order hold term
  const Eigen::VectorXd ramp = e.block(0, n + 1, n, 1) / h_tau;  // ramp term
  s.gam0 = gamma - ramp;
  s.gam1 = ramp;
  return s;
}

// State trajectories of x' = A x + B u (controllable canonical of 1/D).
// Returns an n-column matrix whose row k is the state at sample k; finite is
// cleared when the simulation overflows.
bool simulate_chain(const std::vector<double>& den_x, const std::vector<double>& u,
                    double h_tau, Eigen::MatrixXd& states) {
  const int n = static_cast<int>(den_x.size()) - 1;
  const std::size_t len = u.size();
  states.resize(static_cast<Eigen::Index>(len), n);
  if (len == 0) return true;
  const FohStepper st = make_foh(den_x, h_tau);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  states.row(0) = z.transpose();
  for (std::size_t k = 1; k < len; ++k) {
    z = st.phi * z + st.gam0 * u[k - 1] + st.gam1 * u[k];
    states.row(static_cast<Eigen::Index>(k)) = z.transpose();
  }
  return states.allFinite();
}

// Output of (num_x/den_x) u given the state trajectories of the 1/D chain.
Eigen::VectorXd chain_output(const std::vector<double>& num_x,
                             const std::vector<double>& den_x,
                             const Eigen::MatrixXd& states,
                             const std::vector<double>& u) {
  const int n = static_cast<int>(den_x.size()) - 1;
  const double d_feed =
      (static_cast<int>(num_x.size()) > n) ? num_x[static_cast<std::size_t>(n)] : 0.0;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < n; ++k) {
    const double bk =
        (k < static_cast<int>(num_x.size())) ? num_x[static_cast<std::size_t>(k)] : 0.0;
    c(k) = bk - d_feed * den_x[static_cast<std::size_t>(k)];
  }
  Eigen::VectorXd y = states * c;
  for (Eigen::Index k = 0; k < y.size(); ++k)
    y(k) += d_feed * u[static_cast<std::size_t>(k)];
  return y;
}

// Zero-phase windowed-sinc lowpass, same-size output. Applying the identical
// kernel to input and output leaves their transfer ratio untouched; it exists
// to strip content far above the modelled band (demodulated records carry
// double-frequency images of the modulation that a baseband input record does
// not) so the time-domain cost only weighs in-band behavior.
std::vector<double> lowpass_same(const std::vector<double>& x, double rate, double fc) {
  if (!(fc > 0.0) || fc >= 0.5 * rate) return x;
  const int half = std::max(8, static_cast<int>(std::ceil(2.0 * rate / fc)));
  const int len = 2 * half + 1;
  std::vector<double> h(static_cast<std::size_t>(len));
  double sum = 0.0;
  for (int k = 0; k < len; ++k) {
    const double t = k - half;
    const double arg = kTau * fc / rate * t;
    const double sinc = (t == 0.0) ? 1.0 : std::sin(arg) / arg;
    const double win = 0.54 + 0.46 * std::cos(kPi * t / half);  // Hamming
    h[static_cast<std::size_t>(k)] = sinc * win;
    sum += h[static_cast<std::size_t>(k)];
  }
  for (double& c : h) c /= sum;

  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < len; ++k) {
      const long long j = static_cast<long long>(i) + k - half;
      if (j >= 0 && j < static_cast<long long>(n))
        acc += h[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(j)];
    }
    out[i] = acc;
  }
  return out;
}

double fit_percent_from(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (!yhat.allFinite()) return -std::numeric_limits<double>::infinity();
  const double mean = y.mean();
  const double denom = (y.array() - mean).matrix().norm();
  const double err = (y - yhat).norm();
  if (denom <= 0.0)
    return err <= 0.0 ? 100.0 : -std::numeric_limits<double>::infinity();
  return 100.0 * (1.0 - err / denom);
}

// ---------------------------------------------------------------------------
// Output-error refinement (Levenberg-Marquardt on the x-domain coefficients)
// ---------------------------------------------------------------------------

struct OeData {
  const std::vector<double>& u;
  Eigen::VectorXd y;
  double h_tau;
};

bool is_hurwitz(const std::vector<double>& den_x) {
  for (const cplx& r : poly_roots(den_x, 1.0))
    if (r.real() > 1e-9 * (1.0 + std::abs(r))) return false;
  return true;
}

double oe_cost(const OeData& d, const std::vector<double>& num_x,
               const std::vector<double>& den_x, Eigen::VectorXd* yhat_out) {
  // Candidates must stay causal and convergent: the identified model's whole
  // point is extrapolation beyond the excited band.
  if (!is_hurwitz(den_x)) return std::numeric_limits<double>::infinity();
  Eigen::MatrixXd states;
  if (!simulate_chain(den_x, d.u, d.h_tau, states))
    return std::numeric_limits<double>::infinity();
  Eigen::VectorXd yhat = chain_output(num_x, den_x, states, d.u);
  if (!yhat.allFinite()) return std::numeric_limits<double>::infinity();
  const double cost = (d.y - yhat).squaredNorm();
  if (yhat_out) *yhat_out = std::move(yhat);
  return std::isfinite(cost) ? cost : std::numeric_limits<double>::infinity();
}

void oe_refine(const OeData& d, std::vector<double>& num_x,
               std::vector<double>& den_x) {
  const int n = static_cast<int>(den_x.size()) - 1;
  const int nb = static_cast<int>(num_x.size());  // order + 1
  const int npar = nb + n;
  const std::size_t len = d.u.size();

  std::vector<double> best_num = num_x, best_den = den_x;
  double best_cost = oe_cost(d, num_x, den_x, nullptr);
  if (!std::isfinite(best_cost)) return;

  double lambda = 1e-3;
  std::vector<double> cur_num = num_x, cur_den = den_x;
  double cur_cost = best_cost;

  for (int iter = 0; iter < 40; ++iter) {
    Eigen::MatrixXd zstates;
    if (!simulate_chain(cur_den, d.u, d.h_tau, zstates)) break;
    Eigen::VectorXd yhat = chain_output(cur_num, cur_den, zstates, d.u);
    if (!yhat.allFinite()) break;

    // Sensitivity chain driven by the model output.
    std::vector<double> yhat_v(len);
    for (std::size_t k = 0; k < len; ++k)
      yhat_v[k] = yhat(static_cast<Eigen::Index>(k));
    Eigen::MatrixXd wstates;
    if (!simulate_chain(cur_den, yhat_v, d.h_tau, wstates)) break;

    Eigen::MatrixXd jac(static_cast<Eigen::Index>(len), npar);
    for (int p = 0; p < nb && p < n; ++p) jac.col(p) = zstates.col(p);
    if (nb > n) {
      // d yhat / d b_n = u - sum_k a_k z_k  (the x^n/D chain output)
      Eigen::VectorXd top(static_cast<Eigen::Index>(len));
      for (std::size_t k = 0; k < len; ++k) top(static_cast<Eigen::Index>(k)) = d.u[k];
      for (int p = 0; p < n; ++p)
        top -= cur_den[static_cast<std::size_t>(p)] * zstates.col(p);
      jac.col(nb - 1) = top;
    }
    for (int p = 0; p < n; ++p) jac.col(nb + p) = -wstates.col(p);

    const Eigen::VectorXd resid = d.y - yhat;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * resid;

    bool stepped = false;
    for (int tries = 0; tries < 12 && !stepped; ++tries) {
      Eigen::MatrixXd damped = jtj;
      for (int p = 0; p < npar; ++p)
        damped(p, p) += lambda * std::max(jtj(p, p), 1e-12);
      const Eigen::VectorXd delta = damped.ldlt().solve(jtr);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> try_num = cur_num, try_den = cur_den;
      for (int p = 0; p < nb; ++p) try_num[static_cast<std::size_t>(p)] += delta(p);
      for (int p = 0; p < n; ++p) try_den[static_cast<std::size_t>(p)] += delta(nb + p);
      const double try_cost = oe_cost(d, try_num, try_den, nullptr);
      if (try_cost < cur_cost) {
        cur_num = std::move(try_num);
        cur_den = std::move(try_den);
        const double improvement = cur_cost - try_cost;
        cur_cost = try_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        stepped = true;
        if (cur_cost < best_cost) {
          best_cost = cur_cost;
          best_num = cur_num;
          best_den = cur_den;
        }
        if (improvement < 1e-12 * std::max(best_cost, 1e-300)) iter = 1000;
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) {
          iter = 1000;
          break;
        }
      }
    }
    if (!stepped) break;
  }

  num_x = best_num;
  den_x = best_den;
}

// Reflect right-half-plane roots of the monic x-domain denominator into the
// left half plane, then re-fit the numerator (linear weighted LS against the
// response samples with the denominator held fixed). |D(jw)| is invariant
// under the reflection, so the equation-error magnitude fit is preserved; the
// numerator refit restores the phase. Without this, an unstable equation-error
// solution cannot seed the time-domain refinement at all (its simulation
// diverges), which matters for smooth responses whose pole positions are only
// weakly pinned by in-band data.
void stabilize_fit(const std::vector<double>& freqs_hz, const std::vector<cplx>& h,
                   double omega_sc, std::vector<double>& num_x,
                   std::vector<double>& den_x) {
  std::vector<cplx> roots = poly_roots(den_x, 1.0);
  bool flipped = false;
  for (cplx& r : roots) {
    if (r.real() > 0.0) {
      r = cplx(-r.real(), r.imag());
      flipped = true;
    }
  }
  if (!flipped) return;
  const std::vector<double> d2 = poly_from_roots(roots, 1.0);

  const std::size_t kpts = freqs_hz.size();
  const int nb = static_cast<int>(num_x.size());
  Eigen::MatrixXd a(2 * kpts, nb);
  Eigen::VectorXd rhs(2 * kpts);
  for (std::size_t k = 0; k < kpts; ++k) {
    const cplx x(0.0, kTau * freqs_hz[k] / omega_sc);
    cplx d(0.0, 0.0), xp(1.0, 0.0);
    for (const double c : d2) {
      d += c * xp;
      xp *= x;
    }
    const double sw = 1.0 / std::max(std::abs(d), 1e-30);
    xp = cplx(1.0, 0.0);
    for (int p = 0; p < nb; ++p) {
      const cplx v = sw * xp;
      a(2 * k, p) = v.real();
      a(2 * k + 1, p) = v.imag();
      xp *= x;
    }
    const cplx r = sw * h[k] * d;
    rhs(2 * k) = r.real();
    rhs(2 * k + 1) = r.imag();
  }
  const Eigen::VectorXd theta = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(a).solve(rhs);
  if (!theta.allFinite()) return;
  for (int p = 0; p < nb; ++p) num_x[static_cast<std::size_t>(p)] = theta(p);
  den_x = d2;
}

// x-domain coefficients -> s-domain RationalFn with evaluation scale.
RationalFn rational_from_scaled(const std::vector<double>& num_x,
                                const std::vector<double>& den_x, double omega_sc) {
  RationalFn tf;
  tf.num.resize(num_x.size());
  tf.den.resize(den_x.size());
  double pw = 1.0;
  const std::size_t nmax = std::max(num_x.size(), den_x.size());
  for (std::size_t k = 0; k < nmax; ++k) {
    if (k < num_x.size()) tf.num[k] = num_x[k] / pw;
    if (k < den_x.size()) tf.den[k] = den_x[k] / pw;
    pw *= omega_sc;
  }
  tf.omega_scale = omega_sc;
  tf.normalize();
  return tf;
}

}  // namespace

std::vector<double> lsim(const RationalFn& tf, const std::vector<double>& u,
                         double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("lsim: rate must be positive");
  const Poly num = poly_trim_scaled(tf.num, tf.omega_scale);
  const Poly den = poly_trim_scaled(tf.den, tf.omega_scale);
  const int dn = poly_degree(num), dd = poly_degree(den);
  if (dd < 0) throw std::invalid_argument("lsim: zero denominator");
  if (dn > dd) throw std::invalid_argument("lsim: improper transfer function");
  std::vector<double> out(u.size(), 0.0);
  if (u.empty()) return out;
  if (dd == 0) {
    const double g = (dn < 0) ? 0.0 : num[0] / den[0];
    for (std::size_t k = 0; k < u.size(); ++k) out[k] = g * u[k];
    return out;
  }

  // Scale time so the companion matrix stays O(1).
  double sc = tf.omega_scale;
  if (!(sc > 0.0)) sc = 1.0;
  if (sc == 1.0 && std::abs(den[static_cast<std::size_t>(dd)]) > 0.0) {
    const double ratio = std::abs(den[0] / den[static_cast<std::size_t>(dd)]);
    if (ratio > 0.0) sc = std::max(1e-9, std::pow(ratio, 1.0 / dd));
  }

  std::vector<double> num_x(static_cast<std::size_t>(dd) + 1, 0.0);
  std::vector<double> den_x(static_cast<std::size_t>(dd) + 1, 0.0);
  double pw = 1.0;
  for (int k = 0; k <= dd; ++k) {
    if (k <= dn) num_x[static_cast<std::size_t>(k)] = num[static_cast<std::size_t>(k)] * pw;
    den_x[static_cast<std::size_t>(k)] = den[static_cast<std::size_t>(k)] * pw;
    pw *= sc;
  }
  const double lead = den_x.back();
  for (std::size_t k = 0; k <= static_cast<std::size_t>(dd); ++k) {
    num_x[k] /= lead;
    den_x[k] /= lead;
  }

  Eigen::MatrixXd states;
  simulate_chain(den_x, u, sc / rate, states);
  const Eigen::VectorXd y = chain_output(num_x, den_x, states, u);
  for (std::size_t k = 0; k < u.size(); ++k)
    out[k] = y(static_cast<Eigen::Index>(k));
  return out;
}

double model_fit_percent(const RationalFn& tf, const std::vector<double>& u,
                         const std::vector<double>& y, double rate) {
  if (u.size() != y.size())
    throw std::invalid_argument("model_fit_percent: length mismatch");
  // Degenerate candidates (a fit that lost denominator degree) cannot be
  // simulated; score them as unusable instead of aborting the order sweep.
  const int dn = poly_degree(poly_trim_scaled(tf.num, tf.omega_scale));
  const int dd = poly_degree(poly_trim_scaled(tf.den, tf.omega_scale));
  if (dd < 0 || dn > dd) return -std::numeric_limits<double>::infinity();
  const std::vector<double> yh = lsim(tf, u, rate);
  Eigen::VectorXd yv(static_cast<Eigen::Index>(y.size()));
  Eigen::VectorXd hv(static_cast<Eigen::Index>(y.size()));
  for (std::size_t k = 0; k < y.size(); ++k) {
    yv(static_cast<Eigen::Index>(k)) = y[k];
    hv(static_cast<Eigen::Index>(k)) = yh[k];
  }
  return fit_percent_from(yv, hv);
}

IdentifiedModel estimate_tf(const std::vector<double>& u, const std::vector<double>& y,
                            double rate, int order, double f_lo, double f_hi,
                            const EstimateOptions& opt) {
  if (u.size() != y.size()) throw std::invalid_argument("estimate_tf: length mismatch");
  if (!(rate > 0.0)) throw std::invalid_argument("estimate_tf: rate must be positive");
  if (order < 1 || order > 12)
    throw std::invalid_argument("estimate_tf: order must be in [1, 12]");
  if (!(f_lo > 0.0) || !(f_hi > f_lo))
    throw std::invalid_argument("estimate_tf: need 0 < f_lo < f_hi");
  const double min_len = 10.0 * order * rate / f_hi;
  if (static_cast<double>(u.size()) < min_len)
    throw std::invalid_argument("estimate_tf: record too short for the order and band");

  double u_span = 0.0, u_scale = 1.0;
  for (const double v : u) {
    u_span = std::max(u_span, std::abs(v - u.front()));
    u_scale = std::max(u_scale, std::abs(v));
  }
  if (u_span <= 1e-12 * u_scale) throw std::invalid_argument("estimate_tf: unexcited system");

  // Common band-limiting just above the modelled band (see lowpass_same).
  const double fc = std::min(1.25 * f_hi, 0.45 * rate);
  const std::vector<double> uf = lowpass_same(u, rate, fc);
  const std::vector<double> yf = lowpass_same(y, rate, fc);

  // First differences: identical discrete filtering of input and output leaves
  // the transfer ratio untouched while removing offsets and step plateaus.
  const std::size_t nd = uf.size() - 1;
  std::vector<double> ud(nd), yd(nd);
  for (std::size_t k = 0; k < nd; ++k) {
    ud[k] = uf[k + 1] - uf[k];
    yd[k] = yf[k + 1] - yf[k];
  }

  const double f_top = std::min(f_hi, 0.45 * rate);
  const std::vector<double> grid =
      log_frequency_grid(f_lo, f_top, std::max(2, opt.grid_points));
  const Etfe resp = estimate_frequency_response(ud, yd, rate, grid, opt.n_segments);

  // Keep only frequencies where the input spectrum is within 40 dB of its peak.
  double peak = 0.0;
  for (const double a : resp.amp_u) peak = std::max(peak, a);
  std::vector<double> fk;
  std::vector<cplx> hk;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (resp.amp_u[k] >= 1e-2 * peak) {
      fk.push_back(grid[k]);
      hk.push_back(resp.h[k]);
    }
  }
  if (fk.size() < std::max<std::size_t>(8, 2 * static_cast<std::size_t>(order) + 1))
    throw std::invalid_argument("estimate_tf: insufficient excitation over the band");

  const double omega_sc = kTau * std::sqrt(fk.front() * fk.back());
  std::vector<double> num_x, den_x;
  sk_fit(fk, hk, order, omega_sc, num_x, den_x);
  stabilize_fit(fk, hk, omega_sc, num_x, den_x);

  RationalFn tf = rational_from_scaled(num_x, den_x, omega_sc);
  double fit = model_fit_percent(tf, uf, yf, rate);

  if (opt.refine) {
    OeData data{uf, Eigen::VectorXd(static_cast<Eigen::Index>(yf.size())),
                omega_sc / rate};
    for (std::size_t k = 0; k < yf.size(); ++k)
      data.y(static_cast<Eigen::Index>(k)) = yf[k];
    std::vector<double> rn = num_x, rd = den_x;
    oe_refine(data, rn, rd);
    const RationalFn refined = rational_from_scaled(rn, rd, omega_sc);
    const double refined_fit = model_fit_percent(refined, uf, yf, rate);
    if (refined_fit > fit) {
      tf = refined;
      fit = refined_fit;
    }
  }

  IdentifiedModel model;
  model.tf = tf;
  model.order = tf.order();
  model.fit = fit;
  model.f_lo = fk.front();
  model.f_hi = fk.back();
  model.unstable = false;
  for (const cplx& p : poles(tf))
    if (p.real() > 1e-9 * (1.0 + std::abs(p))) model.unstable = true;
  return model;
}

IdentifiedModel select_order(const std::vector<double>& u, const std::vector<double>& y,
                             double rate, const std::vector<int>& orders,
                             double f_lo, double f_hi, const EstimateOptions& opt) {
  if (orders.empty()) throw std::invalid_argument("select_order: empty order list");
  std::vector<int> sorted = orders;
  std::sort(sorted.begin(), sorted.end());
  bool have = false;
  IdentifiedModel best;
  for (const int order : sorted) {
    IdentifiedModel m = estimate_tf(u, y, rate, order, f_lo, f_hi, opt);
    // Ties within 0.1 percentage points resolve toward the lower order, which
    // the ascending scan gives for free.
    if (!have || m.fit > best.fit + 0.1) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

ImpedanceSpectrum to_spectrum(const IdentifiedModel& mag_model,
                              const IdentifiedModel& ang_model, double r0, double v0,
                              const LpfSpec& lpf, const std::vector<double>& freqs_hz,
                              bool apply_lpf) {
  if (!(v0 > 0.0)) throw std::invalid_argument("to_spectrum: v0 must be positive");
  if (!(r0 > 0.0)) throw std::invalid_argument("to_spectrum: r0 must be positive");
  if (mag_model.channel != TfChannel::MagOverP ||
      ang_model.channel != TfChannel::AngOverP)
    throw std::invalid_argument(
        "to_spectrum: expected a MagOverP and an AngOverP model");
  if (freqs_hz.size() < 2)
    throw std::invalid_argument("to_spectrum: need at least 2 frequencies");
  for (std::size_t k = 0; k + 1 < freqs_hz.size(); ++k)
    if (!(freqs_hz[k] < freqs_hz[k + 1]))
      throw std::invalid_argument("to_spectrum: frequencies must increase strictly");

  ImpedanceSpectrum out;
  out.freqs = freqs_hz;
  out.zdd.resize(freqs_hz.size());
  out.zqd.resize(freqs_hz.size());
  out.provenance = Provenance::Measured;
  out.lpf_applied = apply_lpf;
  for (std::size_t k = 0; k < freqs_hz.size(); ++k) {
    const double f = freqs_hz[k];
    const cplx l = apply_lpf ? moving_average_response(lpf, f) : cplx(1.0, 0.0);
    out.zdd[k] = (r0 / v0) * mag_model.tf.eval_hz(f) * l;
    out.zqd[k] = r0 * ang_model.tf.eval_hz(f) * l;
  }
  return out;
}

std::vector<cplx> signal_spectrum(const std::vector<double>& x, double rate,
                                  const std::vector<double>& freqs_hz) {
  if (!(rate > 0.0)) throw std::invalid_argument("signal_spectrum: rate must be positive");
  const std::size_t n = x.size();
  if (n < 8) throw std::invalid_argument("signal_spectrum: record too short");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);

  std::vector<double> w(n);
  double wsum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(k) /
                                 static_cast<double>(n - 1)));
    wsum += w[k];
  }

  std::vector<cplx> out(freqs_hz.size());
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    const double dph = 2.0 * kPi * freqs_hz[i] / rate;
    const cplx step = std::polar(1.0, -dph);
    cplx rot(1.0, 0.0), acc(0.0, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      acc += w[k] * (x[k] - mean) * rot;
      rot *= step;
    }
    out[i] = 2.0 * acc / wsum;
  }
  return out;
}

std::vector<SpectrumPeak> find_peaks(const std::vector<double>& freqs_hz,
                                     const std::vector<cplx>& z,
                                     double prominence_floor_db) {
  if (freqs_hz.size() != z.size())
    throw std::invalid_argument("find_peaks: length mismatch");
  const std::size_t n = freqs_hz.size();
  if (n < 8) throw std::invalid_argument("find_peaks: need at least 8 frequency points");
  for (std::size_t k = 0; k + 1 < n; ++k)
    if (!(freqs_hz[k] < freqs_hz[k + 1]) || !(freqs_hz[k] > 0.0))
      throw std::invalid_argument("find_peaks: frequencies must be positive and increasing");

  std::vector<double> m(n), lf(n);
  for (std::size_t k = 0; k < n; ++k) {
    m[k] = db20(std::abs(z[k]));
    lf[k] = std::log10(freqs_hz[k]);
  }

  std::vector<SpectrumPeak> out;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(m[i] > m[i - 1])) continue;
    std::size_t j = i;
    while (j + 1 < n && m[j + 1] == m[i]) ++j;  // plateau
    if (j + 1 >= n || !(m[j + 1] < m[i])) continue;
    const std::size_t apex = (i + j) / 2;

    // Topographic prominence: lowest saddle toward the nearest higher ground.
    double left_min = m[apex];
    {
      double run = m[apex];
      for (std::size_t k = apex; k-- > 0;) {
        run = std::min(run, m[k]);
        if (m[k] > m[apex]) break;
        left_min = run;
      }
    }
    double right_min = m[apex];
    {
      double run = m[apex];
      for (std::size_t k = j + 1; k < n; ++k) {
        run = std::min(run, m[k]);
        if (m[k] > m[apex]) break;
        right_min = run;
      }
    }
    double prominence = m[apex] - std::max(left_min, right_min);

    // Quadratic refinement in (log f, dB).
    double f_peak = freqs_hz[apex];
    double m_peak = m[apex];
    if (apex > 0 && apex + 1 < n) {
      const double x0 = lf[apex - 1] - lf[apex], x1 = 0.0, x2 = lf[apex + 1] - lf[apex];
      const double y0 = m[apex - 1], y1 = m[apex], y2 = m[apex + 1];
      const double denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
      if (std::abs(denom) > 0.0) {
        const double aa =
            (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
        const double bb =
            (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
        if (aa < 0.0) {
          double dx = -bb / (2.0 * aa);
          dx = std::clamp(dx, x0, x2);
          f_peak = std::pow(10.0, lf[apex] + dx);
          m_peak = y1 + bb * dx + aa * dx * dx;
          prominence += m_peak - m[apex];
        }
      }
    }
    if (prominence < prominence_floor_db) {
      i = j;
      continue;
    }

    // Half-prominence crossing span.
    const double level = m_peak - 0.5 * prominence;
    double lf_left = lf.front();
    for (std::size_t k = apex; k-- > 0;) {
      if (m[k] <= level) {
        const double t = (level - m[k]) / (m[k + 1] - m[k]);
        lf_left = lf[k] + t * (lf[k + 1] - lf[k]);
        break;
      }
      if (m[k] > m[apex]) {
        lf_left = lf[k];
        break;
      }
    }
    double lf_right = lf.back();
    for (std::size_t k = j + 1; k < n; ++k) {
      if (m[k] <= level) {
        const double t = (level - m[k - 1]) / (m[k] - m[k - 1]);
        lf_right = lf[k - 1] + t * (lf[k] - lf[k - 1]);
        break;
      }
      if (m[k] > m[apex]) {
        lf_right = lf[k];
        break;
      }
    }

    SpectrumPeak p;
    p.freq_hz = f_peak;
    p.prominence_db = prominence;
    p.width_hz = std::pow(10.0, lf_right) - std::pow(10.0, lf_left);
    out.push_back(p);
    i = j;
  }
  return out;
}

std::vector<SpectrumPeak> find_peaks(const ImpedanceSpectrum& spectrum,
                                     double prominence_floor_db,
                                     SpectrumChannel channel) {
  const std::vector<cplx>& z =
      (channel == SpectrumChannel::Dd) ? spectrum.zdd : spectrum.zqd;
  return find_peaks(spectrum.freqs, z, prominence_floor_db);
}

ImpedanceSpectrum identify_current_injection(const AxisExperiment& d_exp,
                                             const AxisExperiment& q_exp, int order,
                                             double f_lo, double f_hi,
                                             const std::vector<double>& freqs_hz,
                                             double delta_rad,
                                             const EstimateOptions& opt) {
  if (d_exp.axis == q_exp.axis)
    throw std::invalid_argument(
        "identify_current_injection: experiments excite the same axis");
  const AxisExperiment& ed = (d_exp.axis == InjectorAxis::D) ? d_exp : q_exp;
  const AxisExperiment& eq = (d_exp.axis == InjectorAxis::D) ? q_exp : d_exp;

  IdentifiedModel h_dd = estimate_tf(ed.u, ed.vd, ed.rate, order, f_lo, f_hi, opt);
  h_dd.channel = TfChannel::VdOverId;
  IdentifiedModel h_qd = estimate_tf(ed.u, ed.vq, ed.rate, order, f_lo, f_hi, opt);
  h_qd.channel = TfChannel::VqOverId;
  IdentifiedModel h_dq = estimate_tf(eq.u, eq.vd, eq.rate, order, f_lo, f_hi, opt);
  h_dq.channel = TfChannel::VdOverIq;
  IdentifiedModel h_qq = estimate_tf(eq.u, eq.vq, eq.rate, order, f_lo, f_hi, opt);
  h_qq.channel = TfChannel::VqOverIq;

  ImpedanceSpectrum out;
  out.freqs = freqs_hz;
  out.zdd.resize(freqs_hz.size());
  out.zqd.resize(freqs_hz.size());
  out.provenance = Provenance::CurrentInjection;
  out.lpf_applied = false;
  for (std::size_t k = 0; k < freqs_hz.size(); ++k) {
    const double f = freqs_hz[k];
    Eigen::Matrix2cd m;
    m(0, 0) = h_dd.tf.eval_hz(f);
    m(0, 1) = h_dq.tf.eval_hz(f);
    m(1, 0) = h_qd.tf.eval_hz(f);
    m(1, 1) = h_qq.tf.eval_hz(f);
    // Into the frame whose d-axis sits at +delta in the injection frame.
    const Eigen::Matrix2cd z = frame_rotate(m, -delta_rad);
    out.zdd[k] = z(0, 0);
    out.zqd[k] = z(1, 0);
  }
  return out;
}

namespace {

struct ChannelTrace {
  std::vector<double> lf;     // log10 f
  std::vector<double> mag_db;
  std::vector<double> phase_deg;  // unwrapped along the spectrum's own grid
};

ChannelTrace trace_of(const std::vector<double>& freqs, const std::vector<cplx>& z) {
  ChannelTrace t;
  t.lf.resize(freqs.size());
  t.mag_db.resize(freqs.size());
  std::vector<double> phase(freqs.size());
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    t.lf[k] = std::log10(freqs[k]);
    t.mag_db[k] = db20(std::abs(z[k]));
    phase[k] = std::arg(z[k]);
  }
  unwrap_angles(phase);
  t.phase_deg.resize(phase.size());
  for (std::size_t k = 0; k < phase.size(); ++k)
    t.phase_deg[k] = phase[k] * 180.0 / kPi;
  return t;
}

double interp_at(const std::vector<double>& xs, const std::vector<double>& ys,
                 double x) {
  const auto it = std::lower_bound(xs.begin(), xs.end(), x);
  if (it == xs.begin()) return ys.front();
  if (it == xs.end()) return ys.back();
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

}  // namespace

SpectrumComparison compare_spectra(const ImpedanceSpectrum& a,
                                   const ImpedanceSpectrum& b, double f_lo,
                                   double f_hi) {
  if (a.freqs.size() < 2 || b.freqs.size() < 2)
    throw std::invalid_argument("compare_spectra: spectra need at least 2 points");
  if (a.freqs.size() != a.zdd.size() || a.freqs.size() != a.zqd.size() ||
      b.freqs.size() != b.zdd.size() || b.freqs.size() != b.zqd.size())
    throw std::invalid_argument("compare_spectra: inconsistent spectrum arrays");
  const double lo = std::max({a.freqs.front(), b.freqs.front(), f_lo});
  const double hi = std::min({a.freqs.back(), b.freqs.back(), f_hi});
  if (!(hi > lo)) throw std::invalid_argument("compare_spectra: disjoint bands");

  const std::vector<double> grid = log_frequency_grid(lo, hi, 200);
  const ChannelTrace add = trace_of(a.freqs, a.zdd);
  const ChannelTrace aqd = trace_of(a.freqs, a.zqd);
  const ChannelTrace bdd = trace_of(b.freqs, b.zdd);
  const ChannelTrace bqd = trace_of(b.freqs, b.zqd);

  SpectrumComparison out;
  out.f_lo = lo;
  out.f_hi = hi;
  for (const double f : grid) {
    const double x = std::log10(f);
    const double dmag_dd = std::abs(interp_at(add.lf, add.mag_db, x) -
                                    interp_at(bdd.lf, bdd.mag_db, x));
    const double dmag_qd = std::abs(interp_at(aqd.lf, aqd.mag_db, x) -
                                    interp_at(bqd.lf, bqd.mag_db, x));
    const double dph_dd = std::abs(std::remainder(
        interp_at(add.lf, add.phase_deg, x) - interp_at(bdd.lf, bdd.phase_deg, x),
        360.0));
    const double dph_qd = std::abs(std::remainder(
        interp_at(aqd.lf, aqd.phase_deg, x) - interp_at(bqd.lf, bqd.phase_deg, x),
        360.0));
    out.dd_mag_err_db = std::max(out.dd_mag_err_db, dmag_dd);
    out.qd_mag_err_db = std::max(out.qd_mag_err_db, dmag_qd);
    out.dd_phase_err_deg = std::max(out.dd_phase_err_deg, dph_dd);
    out.qd_phase_err_deg = std::max(out.qd_phase_err_deg, dph_qd);
  }
  out.max_mag_err_db = std::max(out.dd_mag_err_db, out.qd_mag_err_db);
  out.max_phase_err_deg = std::max(out.dd_phase_err_deg, out.qd_phase_err_deg);

  for (const SpectrumPeak& pa : a.peaks) {
    if (pa.freq_hz < lo || pa.freq_hz > hi) continue;
    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (const SpectrumPeak& pb : b.peaks) {
      const double d = pa.freq_hz - pb.freq_hz;
      if (std::abs(d) < std::abs(best)) {
        best = d;
        found = true;
      }
    }
    if (found) out.peak_freq_delta_hz.push_back(best);
  }
  return out;
}

}  // namespace subsweep
