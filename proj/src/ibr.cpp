#include "subsweep/ibr.hpp"

#include <cmath>
#include <stdexcept>

namespace subsweep {

double wrap_angle(double theta) {
  theta = std::fmod(theta + kPi, 2.0 * kPi);
  if (theta < 0.0) theta += 2.0 * kPi;
  return theta - kPi;
}

void sogi_step(SogiState& st, double v, double dt, double w0, double k_s) {
  if (!(dt > 0.0)) throw std::invalid_argument("sogi_step: dt must be positive");
  // Trapezoidal update of x' = A x + b(t):
  //   A = [[-k_s w0, -w0], [w0, 0]],  b = [k_s w0 v, 0].
  const double h = 0.5 * dt;
  const double a11 = -k_s * w0, a12 = -w0, a21 = w0;
  // (I - h A) x_new = (I + h A) x_old + h (b_old + b_new)
  const double m11 = 1.0 - h * a11, m12 = -h * a12;
  const double m21 = -h * a21, m22 = 1.0;
  const double r1 = (1.0 + h * a11) * st.x1 + h * a12 * st.x2 +
                    h * k_s * w0 * (st.v_prev + v);
  const double r2 = h * a21 * st.x1 + st.x2;
  const double det = m11 * m22 - m12 * m21;
  st.x1 = (m22 * r1 - m12 * r2) / det;
  st.x2 = (-m21 * r1 + m11 * r2) / det;
  st.v_prev = v;
}

double pll_step(IbrState& st, double v_alpha, double v_beta,
                const ControlGains& g, double w0, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("pll_step: dt must be positive");
  const double vq = -v_alpha * std::sin(st.theta) + v_beta * std::cos(st.theta);
  st.pll_integ += g.k_ipll * vq * dt;
  const double domega = g.k_ppll * vq + st.pll_integ;
  st.omega = w0 + domega;
  st.theta = wrap_angle(st.theta + st.omega * dt);
  return st.theta;
}

DqPair to_dq(double alpha, double beta, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return DqPair{alpha * c + beta * s, -alpha * s + beta * c};
}

double control_step(IbrState& st, const ControlInputs& in, const IbrUnit& unit,
                    double w0, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("control_step: dt must be positive");
  (void)w0;
  const ControlGains& g = unit.gains;
  const double vd = in.v_dq.d, vq = in.v_dq.q;
  const double id = in.i_dq.d, iq = in.i_dq.q;

  const double p = vd * id + vq * iq;
  const double q = vq * id - vd * iq;
  const double v = std::hypot(vd, vq);

  // Outer d loop: active power.
  const double ep = unit.p_ref - p;
  st.outer_d_integ += g.k_pi * ep * dt;
  const double id_ref = g.k_pp * ep + st.outer_d_integ;

  // Outer q loop: terminal voltage or reactive power. Raising q (or v, on a
  // predominantly inductive grid) requires lowering i_q, hence the sign flip.
  const double eq = unit.q_axis_mode == QAxisMode::VoltageControl
                        ? unit.v_ref.value_or(1.0) - v
                        : unit.q_ref.value_or(0.0) - q;
  st.outer_q_integ += g.k_vi * eq * dt;
  const double iq_ref = -(g.k_vp * eq + st.outer_q_integ);

  // Inner current loops with cross decoupling and voltage feedforward; the
  // choke reactance in pu equals w0 * L directly.
  const double xl = unit.choke_l;
  const double ed = id_ref - id;
  const double eqi = iq_ref - iq;
  st.inner_d_integ += g.k_ii * ed * dt;
  st.inner_q_integ += g.k_ii * eqi * dt;
  double vd_cmd = g.k_ip * ed + st.inner_d_integ - xl * iq + vd;
  double vq_cmd = g.k_ip * eqi + st.inner_q_integ + xl * id + vq;

  const double mag = std::hypot(vd_cmd, vq_cmd);
  if (mag > 1.2) {
    const double scale = 1.2 / mag;
    vd_cmd *= scale;
    vq_cmd *= scale;
    st.saturated = true;
  }

  st.cmd_network = vd_cmd * std::cos(st.theta) - vq_cmd * std::sin(st.theta);
  return st.cmd_network;
}

IbrState init_ibr_state(const IbrUnit& unit, cplx v_bus, cplx i_conv, double w0) {
  IbrState st;
  const double phi = std::arg(v_bus);
  st.theta = wrap_angle(phi);
  st.omega = w0;
  st.pll_integ = 0.0;

  st.sogi_v.x1 = v_bus.real();
  st.sogi_v.x2 = v_bus.imag();
  st.sogi_v.v_prev = v_bus.real();
  st.sogi_i.x1 = i_conv.real();
  st.sogi_i.x2 = i_conv.imag();
  st.sogi_i.v_prev = i_conv.real();

  const cplx rot = std::polar(1.0, -phi);
  const cplx vdq = v_bus * rot;  // (v_d, v_q) = (|v|, 0)
  const cplx idq = i_conv * rot;
  const double vd = vdq.real(), vq = vdq.imag();
  const double id = idq.real(), iq = idq.imag();

  st.outer_d_integ = id;
  st.outer_q_integ = -iq;

  const cplx z(unit.choke_r, unit.choke_l);
  const cplx emf_dq = vdq + z * idq;
  st.inner_d_integ = emf_dq.real() + unit.choke_l * iq - vd;
  st.inner_q_integ = emf_dq.imag() - unit.choke_l * id - vq;

  const cplx emf = v_bus + z * i_conv;
  st.cmd_network = emf.real();
  return st;
}

}  // namespace subsweep
