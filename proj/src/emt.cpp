#include "subsweep/emt.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <Eigen/Dense>

#include "subsweep/analytic.hpp"
#include "subsweep/dsp.hpp"
#include "subsweep/probe.hpp"

namespace subsweep {

const WaveformRecord& SimulationResult::channel(const std::string& name) const {
  for (const WaveformRecord& rec : records)
    if (rec.channel == name) return rec;
  throw std::out_of_range("no recorded channel '" + name + "'");
}

bool SimulationResult::has_channel(const std::string& name) const {
  for (const WaveformRecord& rec : records)
    if (rec.channel == name) return true;
  return false;
}

namespace {

// ---------------------------------------------------------------------------
// Operating point

// Newton power flow in rectangular coordinates. Bus kinds: slack (ideal
// sources), PV (voltage-controlling units), PQ (everything else).
std::vector<cplx> power_flow(const Scenario& s) {
  const std::size_t n = s.buses.size();
  std::map<BusId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[s.buses[i]] = i;

  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const Branch& br : s.branches) {
    switch (br.kind) {
      case BranchKind::SeriesRL:
      case BranchKind::SeriesRLC: {
        const cplx z(br.r, br.x_l.value_or(0.0) - br.x_c.value_or(0.0));
        if (std::abs(z) < 1e-12) throw SimulationError("zero-impedance series branch");
        const cplx adm = 1.0 / z;
        const std::size_t a = index.at(br.from), b = index.at(br.to);
        y(a, a) += adm;
        y(b, b) += adm;
        y(a, b) -= adm;
        y(b, a) -= adm;
        break;
      }
      case BranchKind::ShuntC:
        y(index.at(br.from), index.at(br.from)) += cplx(0.0, br.b.value_or(0.0));
        break;
      case BranchKind::ShuntR:
        y(index.at(br.from), index.at(br.from)) += cplx(1.0 / br.r, 0.0);
        break;
    }
  }
  y(index.at(s.probe.bus), index.at(s.probe.bus)) += cplx(1.0 / s.probe.r0, 0.0);

  enum class Kind { Slack, PV, PQ };
  std::vector<Kind> kind(n, Kind::PQ);
  std::vector<cplx> v(n, cplx(1.0, 0.0));
  std::vector<double> p_spec(n, 0.0), q_spec(n, 0.0), v_spec(n, 1.0);
  for (const Source& src : s.sources) {
    const std::size_t i = index.at(src.bus);
    kind[i] = Kind::Slack;
    v[i] = std::polar(src.magnitude, src.phase);
  }
  for (const IbrUnit& u : s.ibrs) {
    const std::size_t i = index.at(u.bus);
    if (kind[i] == Kind::Slack) throw SimulationError("inverter unit on a source bus");
    const double to_sys = u.rating_w / s.base_power_w;
    p_spec[i] += u.p_ref * to_sys;
    if (u.q_axis_mode == QAxisMode::VoltageControl) {
      kind[i] = Kind::PV;
      v_spec[i] = u.v_ref.value_or(1.0);
      v[i] = cplx(v_spec[i], 0.0);
    } else {
      q_spec[i] += u.q_ref.value_or(0.0) * to_sys;
    }
  }

  std::vector<std::size_t> vars;  // non-slack buses
  for (std::size_t i = 0; i < n; ++i)
    if (kind[i] != Kind::Slack) vars.push_back(i);
  if (vars.empty()) return v;
  const std::size_t m = vars.size();

  auto residual = [&](const std::vector<cplx>& vv, const std::vector<double>& ps,
                      const std::vector<double>& qs, const std::vector<double>& vs) {
    Eigen::VectorXd r(2 * m);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = vars[k];
      cplx inj(0.0, 0.0);
      for (std::size_t j = 0; j < n; ++j) inj += y(i, j) * vv[j];
      const cplx svals = vv[i] * std::conj(inj);  // peak-pu phasors: S = V conj(I)
      r(2 * k) = svals.real() - ps[i];
      r(2 * k + 1) = kind[i] == Kind::PV ? std::norm(vv[i]) - vs[i] * vs[i]
                                         : svals.imag() - qs[i];
    }
    return r;
  };

  // Newton with backtracking on the residual norm; returns success.
  auto newton = [&](std::vector<cplx>& vv, const std::vector<double>& ps,
                    const std::vector<double>& qs, const std::vector<double>& vs) {
    for (int iter = 0; iter < 80; ++iter) {
      Eigen::VectorXd r = residual(vv, ps, qs, vs);
      const double rn = r.lpNorm<Eigen::Infinity>();
      if (rn < 1e-12) return true;
      Eigen::MatrixXd jac(2 * m, 2 * m);
      const double eps = 1e-7;
      for (std::size_t k = 0; k < m; ++k) {
        for (int part = 0; part < 2; ++part) {
          std::vector<cplx> pert = vv;
          pert[vars[k]] += part == 0 ? cplx(eps, 0.0) : cplx(0.0, eps);
          jac.col(2 * k + part) = (residual(pert, ps, qs, vs) - r) / eps;
        }
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
      if (!lu.isInvertible()) return false;
      const Eigen::VectorXd dx = lu.solve(-r);
      double alpha = 1.0;
      bool moved = false;
      for (int half = 0; half < 9; ++half, alpha *= 0.5) {
        std::vector<cplx> trial = vv;
        for (std::size_t k = 0; k < m; ++k)
          trial[vars[k]] += alpha * cplx(dx(2 * k), dx(2 * k + 1));
        if (residual(trial, ps, qs, vs).lpNorm<Eigen::Infinity>() <
            (1.0 - 0.25 * alpha) * rn) {
          vv = std::move(trial);
          moved = true;
          break;
        }
      }
      if (!moved) return false;
    }
    return false;
  };

  // Start from the passive network solution (units open): a realistic sagging
  // voltage profile that sits on the stable side of the feasibility surface.
  std::vector<cplx> vv = v;
  {
    std::vector<std::size_t> slack;
    for (std::size_t i = 0; i < n; ++i)
      if (kind[i] == Kind::Slack) slack.push_back(i);
    Eigen::MatrixXcd yrr(m, m);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(m);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) yrr(a, b) = y(vars[a], vars[b]);
      for (std::size_t sidx : slack) rhs(a) -= y(vars[a], sidx) * v[sidx];
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(yrr);
    if (lu.isInvertible()) {
      const Eigen::VectorXcd sol = lu.solve(rhs);
      for (std::size_t a = 0; a < m; ++a) vv[vars[a]] = sol(a);
    }
  }
  const std::vector<cplx> passive = vv;

  if (newton(vv, p_spec, q_spec, v_spec)) return vv;

  // Homotopy from the passive solution (an exact zero-injection flow) toward
  // the requested setpoints; each stage reuses the previous stage's voltages.
  vv = passive;
  std::vector<double> v_passive(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) v_passive[i] = std::abs(passive[i]);
  bool ok = true;
  const int stages = 24;
  for (int st = 1; st <= stages && ok; ++st) {
    const double lam = static_cast<double>(st) / stages;
    std::vector<double> ps(n), qs(n), vs(n);
    for (std::size_t i = 0; i < n; ++i) {
      ps[i] = lam * p_spec[i];
      qs[i] = lam * q_spec[i];
      vs[i] = (1.0 - lam) * v_passive[i] + lam * v_spec[i];
    }
    ok = newton(vv, ps, qs, vs);
  }
  if (ok) return vv;
  throw SimulationError("power flow failed to converge");
}

// ---------------------------------------------------------------------------
// Companion-model network

struct SeriesState {
  int a = -1, b = -1;   // node indices (-1 = ground)
  double r = 0.0, l = 0.0, c = 0.0;
  bool has_c = false;
  double g = 0.0;       // companion conductance
  double i = 0.0;       // branch current a->b
  double vc = 0.0;      // capacitor voltage (has_c)
  double vab = 0.0;     // previous terminal voltage
  double h = 0.0;       // history current for the next solve

  void compute_g(double dt) {
    if (l > 0.0) {
      const double beta = dt / (2.0 * l);
      const double gamma = has_c ? dt / (2.0 * c) : 0.0;
      g = beta / (1.0 + beta * (r + gamma));
    } else if (has_c) {
      g = 1.0 / (r + dt / (2.0 * c));
    } else {
      g = 1.0 / r;
    }
  }
  // After computing v_ab at the new step, advance state and prepare h.
  void advance(double vab_new, double dt) {
    const double i_new = g * vab_new + h;
    if (has_c) vc += dt / (2.0 * c) * (i_new + i);
    i = i_new;
    vab = vab_new;
    refresh_history(dt);
  }
  void refresh_history(double dt) {
    if (l > 0.0) {
      const double beta = dt / (2.0 * l);
      const double gamma = has_c ? dt / (2.0 * c) : 0.0;
      const double denom = 1.0 + beta * (r + gamma);
      h = (i * (1.0 - beta * (r + gamma)) - 2.0 * beta * vc + beta * vab) / denom;
    } else if (has_c) {
      const double gamma = dt / (2.0 * c);
      h = -(vc + gamma * i) * g;
    } else {
      h = 0.0;
    }
  }
};

struct ShuntCState {
  int a = -1;
  double c = 0.0;
  double g = 0.0;  // 2c/dt
  double i = 0.0;  // current into the capacitor
  double v = 0.0;  // previous node voltage
  double h = 0.0;

  void compute_g(double dt) { g = 2.0 * c / dt; }
  void advance(double v_new) {
    i = g * (v_new - v) - i;
    v = v_new;
    h = -g * v - i;
  }
};

struct Channel {
  std::string name;
  std::vector<double> samples;  // at solver rate, index 0 = t = 0
};

struct IbrRuntime {
  const IbrUnit* unit = nullptr;
  int bus_node = -1;
  int emf_node = -1;
  std::size_t choke_index = 0;  // into series states
  double cur_scale = 1.0;       // system-pu current -> unit-pu current
  IbrState state;
};

struct Engine {
  const Scenario& sc;
  SignalSpec probe_sig;
  double dt;
  double w0;
  int n_nodes = 0;
  std::map<BusId, int> node_of;
  std::vector<int> free_nodes, fixed_nodes;
  std::vector<int> free_index;  // node -> position in free vector, -1 if fixed
  Eigen::MatrixXd g;            // full conductance matrix
  Eigen::MatrixXd g_fx;         // free x fixed block
  Eigen::FullPivLU<Eigen::MatrixXd> lu;
  bool refactor_needed = true;

  std::vector<SeriesState> series;
  std::vector<ShuntCState> shunt_c;
  std::vector<std::pair<int, double>> shunt_g;  // fixed shunt conductances
  int probe_node = -1;
  double probe_g = 0.0;
  int inj_node = -1;
  double inj_theta0 = 0.0;
  std::vector<IbrRuntime> ibrs;

  Eigen::VectorXd v_now;   // all node voltages at the current time
  std::vector<double> fixed_value;  // per node (only fixed nodes used)

  explicit Engine(const Scenario& s, const SignalSpec& sig)
      : sc(s), probe_sig(sig), dt(s.solver.step), w0(s.omega0()) {}

  void build(const std::vector<cplx>& op);
  void stamp_conductances();
  void factor();
  void step(double t_new);
  double node_voltage(int node) const { return node < 0 ? 0.0 : v_now(node); }
};

void Engine::build(const std::vector<cplx>& op) {
  const std::size_t nb = sc.buses.size();
  for (std::size_t i = 0; i < nb; ++i) node_of[sc.buses[i]] = static_cast<int>(i);
  n_nodes = static_cast<int>(nb);

  std::set<int> fixed;
  for (const Source& src : sc.sources) fixed.insert(node_of.at(src.bus));

  for (const Branch& br : sc.branches) {
    switch (br.kind) {
      case BranchKind::SeriesRL:
      case BranchKind::SeriesRLC: {
        SeriesState st;
        st.a = node_of.at(br.from);
        st.b = node_of.at(br.to);
        st.r = br.r;
        st.l = br.inductance(w0);
        if (br.kind == BranchKind::SeriesRLC) {
          st.c = br.capacitance(w0);
          st.has_c = true;
        }
        st.compute_g(dt);
        series.push_back(st);
        break;
      }
      case BranchKind::ShuntC: {
        ShuntCState st;
        st.a = node_of.at(br.from);
        st.c = br.capacitance(w0);
        st.compute_g(dt);
        shunt_c.push_back(st);
        break;
      }
      case BranchKind::ShuntR:
        shunt_g.push_back({node_of.at(br.from), 1.0 / br.r});
        break;
    }
  }

  probe_node = node_of.at(sc.probe.bus);
  probe_g = 1.0 / sc.probe.r0;

  if (sc.current_injector) {
    inj_node = node_of.at(sc.current_injector->bus);
    inj_theta0 = std::arg(op[static_cast<std::size_t>(inj_node)]);
  }

  for (const IbrUnit& u : sc.ibrs) {
    IbrRuntime rt;
    rt.unit = &u;
    rt.bus_node = node_of.at(u.bus);
    rt.emf_node = n_nodes++;
    fixed.insert(rt.emf_node);
    // base/rating converts system-pu current to unit-pu current and, equally,
    // unit-pu impedance to system-pu impedance.
    rt.cur_scale = sc.base_power_w / u.rating_w;

    SeriesState choke;
    choke.a = rt.emf_node;
    choke.b = rt.bus_node;
    choke.r = u.choke_r * rt.cur_scale;
    choke.l = u.choke_l * rt.cur_scale / w0;
    choke.compute_g(dt);
    rt.choke_index = series.size();
    series.push_back(choke);
    ibrs.push_back(rt);
  }

  free_index.assign(static_cast<std::size_t>(n_nodes), -1);
  for (int node = 0; node < n_nodes; ++node) {
    if (fixed.count(node)) fixed_nodes.push_back(node);
    else {
      free_index[static_cast<std::size_t>(node)] = static_cast<int>(free_nodes.size());
      free_nodes.push_back(node);
    }
  }

  fixed_value.assign(static_cast<std::size_t>(n_nodes), 0.0);
  v_now = Eigen::VectorXd::Zero(n_nodes);

  // Initial conditions from the operating point: v(0) = Re(V), branch
  // currents from branch phasors, capacitor voltages from their phasors.
  for (std::size_t i = 0; i < nb; ++i) v_now(static_cast<Eigen::Index>(i)) = op[i].real();

  std::size_t series_idx = 0;
  for (const Branch& br : sc.branches) {
    if (br.kind != BranchKind::SeriesRL && br.kind != BranchKind::SeriesRLC) continue;
    SeriesState& st = series[series_idx++];
    const cplx va = op[static_cast<std::size_t>(st.a)];
    const cplx vb = op[static_cast<std::size_t>(st.b)];
    const double x = br.x_l.value_or(0.0) - br.x_c.value_or(0.0);
    const cplx iph = (va - vb) / cplx(br.r, x);
    st.i = iph.real();
    st.vab = (va - vb).real();
    if (st.has_c) st.vc = (iph / (cplx(0.0, 1.0) * w0 * st.c)).real();
    st.refresh_history(dt);
  }
  for (ShuntCState& st : shunt_c) {
    const cplx va = op[static_cast<std::size_t>(st.a)];
    st.v = va.real();
    st.i = (cplx(0.0, 1.0) * w0 * st.c * va).real();
    st.h = -st.g * st.v - st.i;
  }

  // Inverter runtime: the converter current equals the net current leaving
  // the bus into the passive network at the operating point.
  for (IbrRuntime& rt : ibrs) {
    const cplx vb = op[static_cast<std::size_t>(rt.bus_node)];
    cplx i_sys(0.0, 0.0);
    std::size_t si = 0;
    for (const Branch& br : sc.branches) {
      if (br.kind == BranchKind::SeriesRL || br.kind == BranchKind::SeriesRLC) {
        const SeriesState& st = series[si++];
        const cplx va = op[static_cast<std::size_t>(st.a)];
        const cplx vbb = op[static_cast<std::size_t>(st.b)];
        const double x = br.x_l.value_or(0.0) - br.x_c.value_or(0.0);
        const cplx iph = (va - vbb) / cplx(br.r, x);
        if (st.a == rt.bus_node) i_sys += iph;
        if (st.b == rt.bus_node) i_sys -= iph;
      } else if (node_of.at(br.from) == rt.bus_node) {
        if (br.kind == BranchKind::ShuntC)
          i_sys += cplx(0.0, br.b.value_or(0.0)) * vb;
        else
          i_sys += vb / br.r;
      }
    }
    if (rt.bus_node == probe_node) i_sys += vb * probe_g;

    const cplx i_unit = i_sys * rt.cur_scale;
    rt.state = init_ibr_state(*rt.unit, vb, i_unit, w0);

    SeriesState& choke = series[rt.choke_index];
    choke.i = i_sys.real();
    v_now(rt.emf_node) = rt.state.cmd_network;
    choke.vab = rt.state.cmd_network - vb.real();
    choke.refresh_history(dt);
    fixed_value[static_cast<std::size_t>(rt.emf_node)] = rt.state.cmd_network;
  }

  stamp_conductances();
}

void Engine::stamp_conductances() {
  g = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
  auto stamp2 = [&](int a, int b, double cond) {
    if (a >= 0) g(a, a) += cond;
    if (b >= 0) g(b, b) += cond;
    if (a >= 0 && b >= 0) {
      g(a, b) -= cond;
      g(b, a) -= cond;
    }
  };
  for (const SeriesState& st : series) stamp2(st.a, st.b, st.g);
  for (const ShuntCState& st : shunt_c) stamp2(st.a, -1, st.g);
  for (const auto& [node, cond] : shunt_g) stamp2(node, -1, cond);
  stamp2(probe_node, -1, probe_g);
  refactor_needed = true;
}

void Engine::factor() {
  const std::size_t nf = free_nodes.size();
  Eigen::MatrixXd gff(nf, nf);
  for (std::size_t r = 0; r < nf; ++r)
    for (std::size_t c = 0; c < nf; ++c) gff(r, c) = g(free_nodes[r], free_nodes[c]);
  lu.compute(gff);
  if (!lu.isInvertible()) {
    // Identify a node with no conductive path to ground for the message.
    std::string isolated = "unknown";
    for (std::size_t r = 0; r < nf; ++r) {
      if (gff.row(r).cwiseAbs().sum() < 1e-15) {
        const int node = free_nodes[r];
        for (const auto& [name, idx] : node_of)
          if (idx == node) isolated = name;
        break;
      }
    }
    throw SimulationError("singular nodal matrix; bus '" + isolated +
                          "' has no path to ground");
  }
  g_fx.resize(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(fixed_nodes.size()));
  for (std::size_t r = 0; r < nf; ++r)
    for (std::size_t c = 0; c < fixed_nodes.size(); ++c)
      g_fx(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          g(free_nodes[r], fixed_nodes[c]);
  refactor_needed = false;
}

void Engine::step(double t_new) {
  // Probe conductance for this step.
  const double p = evaluate_signal(probe_sig, t_new);
  const double g_new = 1.0 / (sc.probe.r0 * (1.0 + p));
  if (g_new != probe_g) {
    g(probe_node, probe_node) += g_new - probe_g;
    probe_g = g_new;
    refactor_needed = true;
  }
  if (refactor_needed) factor();

  // Fixed node values at the new time.
  for (const Source& src : sc.sources)
    fixed_value[static_cast<std::size_t>(node_of.at(src.bus))] =
        src.magnitude * std::cos(w0 * t_new + src.phase);
  for (const IbrRuntime& rt : ibrs)
    fixed_value[static_cast<std::size_t>(rt.emf_node)] = rt.state.cmd_network;

  // History currents into the RHS: a series branch carries i = g vab + h from
  // a to b, contributing -h at a and +h at b; shunts contribute -h at a.
  const std::size_t nf = free_nodes.size();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nf));
  auto add_current = [&](int node, double cur) {
    if (node < 0) return;
    const int fi = free_index[static_cast<std::size_t>(node)];
    if (fi >= 0) rhs(fi) += cur;
  };
  for (const SeriesState& st : series) {
    add_current(st.a, -st.h);
    add_current(st.b, st.h);
  }
  for (const ShuntCState& st : shunt_c) add_current(st.a, -st.h);
  if (inj_node >= 0)
    add_current(inj_node, injected_current(*sc.current_injector,
                                           w0 * t_new + inj_theta0, t_new));

  // Move fixed-node terms across.
  Eigen::VectorXd vfix(static_cast<Eigen::Index>(fixed_nodes.size()));
  for (std::size_t c = 0; c < fixed_nodes.size(); ++c)
    vfix(static_cast<Eigen::Index>(c)) =
        fixed_value[static_cast<std::size_t>(fixed_nodes[c])];
  rhs -= g_fx * vfix;

  const Eigen::VectorXd vf = lu.solve(rhs);
  for (std::size_t r = 0; r < nf; ++r) v_now(free_nodes[r]) = vf(static_cast<Eigen::Index>(r));
  for (std::size_t c = 0; c < fixed_nodes.size(); ++c)
    v_now(fixed_nodes[c]) = vfix(static_cast<Eigen::Index>(c));

  for (std::size_t r = 0; r < nf; ++r) {
    if (std::abs(vf(static_cast<Eigen::Index>(r))) > 100.0)
      throw SimulationError("simulation diverged at t = " + std::to_string(t_new) +
                            " s (node voltage exceeds 100 pu)");
  }

  // Advance storage elements.
  for (SeriesState& st : series)
    st.advance(node_voltage(st.a) - node_voltage(st.b), dt);
  for (ShuntCState& st : shunt_c) st.advance(node_voltage(st.a));

  // Inverter controllers: measure, filter, advance, command for next step.
  for (IbrRuntime& rt : ibrs) {
    const double vt = node_voltage(rt.bus_node);
    const double it = series[rt.choke_index].i * rt.cur_scale;  // unit pu
    sogi_step(rt.state.sogi_v, vt, dt, w0, rt.unit->sogi_gain);
    sogi_step(rt.state.sogi_i, it, dt, w0, rt.unit->sogi_gain);
    pll_step(rt.state, rt.state.sogi_v.x1, rt.state.sogi_v.x2, rt.unit->gains, w0, dt);
    ControlInputs in;
    in.v_dq = to_dq(rt.state.sogi_v.x1, rt.state.sogi_v.x2, rt.state.theta);
    in.i_dq = to_dq(rt.state.sogi_i.x1, rt.state.sogi_i.x2, rt.state.theta);
    control_step(rt.state, in, *rt.unit, w0, dt);
  }
}

// Centered-average decimation from the solver rate to the record rate.
WaveformRecord decimate(const std::string& channel, const std::vector<double>& x,
                        double solver_rate, double record_rate) {
  WaveformRecord rec;
  rec.channel = channel;
  rec.sample_rate = record_rate;
  const int ratio = std::max(1, static_cast<int>(std::lround(solver_rate / record_rate)));
  const bool even = ratio % 2 == 0;
  const int half = ratio / 2;
  rec.t0 = 1.0 / record_rate;
  for (std::size_t m = 1;; ++m) {
    const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(m) * ratio;
    const std::ptrdiff_t lo = center - half;
    const std::ptrdiff_t hi = center + half;
    if (hi >= static_cast<std::ptrdiff_t>(x.size())) break;
    double acc = 0.0;
    if (even) {
      acc += 0.5 * (x[static_cast<std::size_t>(lo)] + x[static_cast<std::size_t>(hi)]);
      for (std::ptrdiff_t k = lo + 1; k < hi; ++k) acc += x[static_cast<std::size_t>(k)];
      acc /= ratio;
    } else {
      for (std::ptrdiff_t k = lo; k <= hi; ++k) acc += x[static_cast<std::size_t>(k)];
      acc /= ratio;
    }
    rec.samples.push_back(acc);
  }
  return rec;
}

}  // namespace

std::vector<cplx> operating_point(const Scenario& s) {
  if (s.ibrs.empty()) return passive_operating_point(s);
  return power_flow(s);
}

SimulationResult run_simulation(const Scenario& s, const SignalSpec& perturbation) {
  {
    const std::vector<Diagnostic> diags = validate(s);
    for (const Diagnostic& d : diags)
      if (d.severity == Diagnostic::Severity::Error)
        throw SimulationError("invalid scenario: " + d.path + ": " + d.message);
  }
  if (perturbation.kind != SignalKind::Zero && perturbation.t_on < s.solver.settle)
    throw SimulationError("perturbation begins before the settle window ends");
  if (s.current_injector && s.current_injector->t_on < s.solver.settle)
    throw SimulationError("injection begins before the settle window ends");

  const std::vector<cplx> op = operating_point(s);

  Engine eng(s, perturbation);
  eng.build(op);

  const double dt = s.solver.step;
  const std::size_t n_steps =
      static_cast<std::size_t>(std::llround(s.solver.duration / dt));

  std::vector<Channel> channels;
  for (const RecorderSpec& rec : s.recorders)
    channels.push_back({"v:" + rec.bus, {}});
  channels.push_back({"i:probe", {}});
  channels.push_back({"p:probe", {}});
  const bool with_inj = s.current_injector.has_value();
  if (with_inj) channels.push_back({"i:inj", {}});
  for (Channel& ch : channels) ch.samples.reserve(n_steps + 1);

  std::vector<int> recorder_nodes;
  for (const RecorderSpec& rec : s.recorders)
    recorder_nodes.push_back(eng.node_of.at(rec.bus));

  auto capture = [&](double t) {
    std::size_t ci = 0;
    for (int node : recorder_nodes) channels[ci++].samples.push_back(eng.node_voltage(node));
    const double vp = eng.node_voltage(eng.probe_node);
    channels[ci++].samples.push_back(vp * eng.probe_g);
    channels[ci++].samples.push_back(evaluate_signal(perturbation, t));
    if (with_inj)
      channels[ci++].samples.push_back(injected_current(
          *s.current_injector, eng.w0 * t + eng.inj_theta0, t));
  };

  capture(0.0);
  for (std::size_t n = 1; n <= n_steps; ++n) {
    const double t = static_cast<double>(n) * dt;
    eng.step(t);
    capture(t);
  }

  SimulationResult out;
  out.operating_point = op;
  out.onset = perturbation.kind == SignalKind::Zero
                  ? (with_inj ? s.current_injector->t_on : s.solver.duration)
                  : perturbation.t_on;
  const double solver_rate = 1.0 / dt;
  for (const Channel& ch : channels) {
    const RecorderSpec* spec = nullptr;
    if (ch.name.rfind("v:", 0) == 0) {
      for (const RecorderSpec& rec : s.recorders)
        if ("v:" + rec.bus == ch.name) spec = &rec;
    }
    const double rate = spec ? spec->sample_rate : s.solver.record_rate;
    out.records.push_back(decimate(ch.name, ch.samples, solver_rate, rate));
  }
  for (const IbrRuntime& rt : eng.ibrs)
    out.any_ibr_saturated |= rt.state.saturated;
  return out;
}

SimulationResult run_simulation(const Scenario& s) {
  return run_simulation(s, s.probe.signal);
}

SteadyStats steady_state_check(const WaveformRecord& record, double window_s,
                               double f0, double t_end) {
  if (!(window_s > 0.0))
    throw std::invalid_argument("steady_state_check: window must be positive");
  if (record.t0 + window_s > t_end + 1e-12)
    throw std::invalid_argument("steady_state_check: window longer than the settle span");
  const WaveformRecord seg = slice(record, t_end - window_s, t_end);
  if (seg.samples.empty())
    throw std::invalid_argument("steady_state_check: empty analysis window");

  SteadyStats out;
  double ms = 0.0;
  for (double v : seg.samples) ms += v * v;
  ms /= static_cast<double>(seg.samples.size());
  // Waveforms are stored peak-valued (1 pu sine swings +/-1), while the rms
  // field is per-unit of nominal RMS, so a 1 pu sine reports rms = 1.0.
  out.rms = std::sqrt(2.0 * ms);
  if (out.rms == 0.0) return out;  // all-zero record: thd defined as 0

  std::size_t n_use = exact_cycle_samples(seg.sample_rate, f0, seg.samples.size());
  if (n_use == 0) n_use = seg.samples.size();
  const double w0 = 2.0 * kPi * f0;
  double a = 0.0, b = 0.0, ms_cycle = 0.0;
  for (std::size_t k = 0; k < n_use; ++k) {
    const double ph = w0 * seg.time_at(k);
    a += seg.samples[k] * std::cos(ph);
    b += seg.samples[k] * -std::sin(ph);
    ms_cycle += seg.samples[k] * seg.samples[k];
  }
  a = 2.0 * a / static_cast<double>(n_use);
  b = 2.0 * b / static_cast<double>(n_use);
  ms_cycle /= static_cast<double>(n_use);
  const double ms_fund = 0.5 * (a * a + b * b);
  if (ms_fund <= 0.0) {
    out.thd = 0.0;
    return out;
  }
  out.thd = std::sqrt(std::max(0.0, ms_cycle - ms_fund) / ms_fund);
  return out;
}

}  // namespace subsweep
