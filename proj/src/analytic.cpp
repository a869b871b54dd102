#include "subsweep/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

namespace subsweep {

Eigen::Matrix2cd DqTransferMatrix::eval(cplx s) const {
  Eigen::Matrix2cd m;
  m << dd.eval(s), dq.eval(s), qd.eval(s), qq.eval(s);
  return m;
}

Eigen::Matrix2cd DqTransferMatrix::eval_hz(double f_hz) const {
  return eval(cplx(0.0, 2.0 * kPi * f_hz));
}

DqTransferMatrix series_rlc_dq(double r, double x_l, double x_c, double w0) {
  if (!(x_c > 0.0))
    throw std::invalid_argument("series_rlc_dq: x_c must be positive (use series_rl_dq)");
  if (!(w0 > 0.0)) throw std::invalid_argument("series_rlc_dq: w0 must be positive");
  const double l = x_l / w0;
  const double c = 1.0 / (x_c * w0);
  const Poly den{c * w0 * w0, 0.0, c};
  RationalFn dd{{r * c * w0 * w0, l * c * w0 * w0 + 1.0, r * c, l * c}, den, w0};
  RationalFn qd{{w0 * w0 * w0 * l * c - w0, 0.0, w0 * l * c}, den, w0};
  dd.normalize();
  qd.normalize();
  return DqTransferMatrix{dd, -qd, qd, dd};
}

DqTransferMatrix series_rl_dq(double r, double x_l, double w0) {
  if (!(w0 > 0.0)) throw std::invalid_argument("series_rl_dq: w0 must be positive");
  const double l = x_l / w0;
  RationalFn dd{{r, l}, {1.0}, w0};
  RationalFn qd = RationalFn::constant(x_l, w0);
  dd.normalize();
  return DqTransferMatrix{dd, -qd, qd, dd};
}

DqTransferMatrix scalar_to_dq(const RationalFn& zin, double w0) {
  if (!(w0 > 0.0)) throw std::invalid_argument("scalar_to_dq: w0 must be positive");
  RationalFn z = zin;
  z.normalize();
  if (poly_degree(z.num) > poly_degree(z.den) + 1)
    throw std::invalid_argument(
        "scalar_to_dq: impedance must be proper or at most first-order improper");

  // Work in x = s / w0 for conditioning; s + j*w0 becomes x + j.
  auto to_scaled = [&](const Poly& p) {
    CPoly out(p.size());
    double f = 1.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      out[k] = cplx(p[k] * f, 0.0);
      f *= w0;
    }
    return out;
  };
  const cplx j(0.0, 1.0);
  const CPoly nplus = cpoly_shift(to_scaled(z.num), j);
  const CPoly dplus = cpoly_shift(to_scaled(z.den), j);
  const CPoly p = cpoly_mul(nplus, cpoly_conj(dplus));
  const CPoly q = cpoly_mul(dplus, cpoly_conj(dplus));

  double qmax = 0.0;
  for (const cplx& c : q) qmax = std::max(qmax, std::abs(c));
  for (const cplx& c : q)
    if (std::abs(c.imag()) > 1e-9 * qmax)
      throw std::runtime_error("scalar_to_dq: denominator failed to realify");

  auto unscale = [&](const CPoly& cp, bool imag_part) {
    Poly out(cp.size());
    double f = 1.0;
    for (std::size_t k = 0; k < cp.size(); ++k) {
      out[k] = (imag_part ? cp[k].imag() : cp[k].real()) / f;
      f *= w0;
    }
    return out;
  };
  const Poly den = unscale(q, false);
  RationalFn dd{unscale(p, false), den, w0};
  RationalFn qd{unscale(p, true), den, w0};
  dd.normalize();
  qd.normalize();
  return DqTransferMatrix{dd, -qd, qd, dd};
}

double natural_frequency(double x_l, double b, double f0_hz) {
  if (!(x_l > 0.0) || !(b > 0.0) || !(f0_hz > 0.0))
    throw std::invalid_argument("natural_frequency: arguments must be positive");
  return f0_hz / std::sqrt(x_l * b);
}

namespace {

double rel_gap(const RationalFn& exact, const RationalFn& approx) {
  constexpr int kSamples = 200;
  const double lo = std::log10(0.1), hi = std::log10(40.0);
  double worst = 0.0;
  for (int i = 0; i < kSamples; ++i) {
    const double f = std::pow(10.0, lo + (hi - lo) * i / (kSamples - 1));
    const cplx e = exact.eval_hz(f);
    const cplx a = approx.eval_hz(f);
    const double mag = std::max(std::abs(e), 1e-300);
    worst = std::max(worst, std::abs(e - a) / mag);
  }
  return worst;
}

}  // namespace

// A rotation-structured dq matrix [[c, -s], [s, c]] acts on (d, q) pairs the
// way the complex scalar c + j s acts on d + j q, so algebra on such matrices
// (sums, products, inverses) can be done on complex-coefficient scalar
// rationals. That keeps polynomial degrees minimal and, crucially, needs no
// root-matching cancellation: quotients like z / (z + r0) reduce exactly by
// construction.
namespace {

struct ComplexRational {
  CPoly num, den;  // coefficients in the x = s / w domain
};

CPoly cpoly_sum(const CPoly& a, const CPoly& b) {
  CPoly out(std::max(a.size(), b.size()), cplx(0.0, 0.0));
  for (std::size_t k = 0; k < a.size(); ++k) out[k] += a[k];
  for (std::size_t k = 0; k < b.size(); ++k) out[k] += b[k];
  return out;
}

CPoly cpoly_scaled(const CPoly& a, const cplx& k) {
  CPoly out = a;
  for (cplx& c : out) c *= k;
  return out;
}

CPoly to_x_domain(const Poly& p, double w) {
  CPoly out(p.empty() ? 1 : p.size(), cplx(0.0, 0.0));
  double f = 1.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    out[k] = cplx(p[k] * f, 0.0);
    f *= w;
  }
  return out;
}

// dd + j*qd of a rotation-structured matrix as one complex scalar rational.
ComplexRational lift_to_complex(const RationalFn& dd, const RationalFn& qd, double w) {
  const CPoly nd = to_x_domain(dd.num, w), dd_den = to_x_domain(dd.den, w);
  const CPoly nq = to_x_domain(qd.num, w), qd_den = to_x_domain(qd.den, w);
  if (dd.den == qd.den) {
    return {cpoly_sum(nd, cpoly_scaled(nq, cplx(0.0, 1.0))), dd_den};
  }
  return {cpoly_sum(cpoly_mul(nd, qd_den),
                    cpoly_scaled(cpoly_mul(nq, dd_den), cplx(0.0, 1.0))),
          cpoly_mul(dd_den, qd_den)};
}

// Complex scalar rational back to the (c, s) pair of its rotation-structured
// matrix: c = Re(n * conj(d)) / |d|^2, s = Im(n * conj(d)) / |d|^2.
std::pair<RationalFn, RationalFn> complex_to_lift(const ComplexRational& g, double w) {
  const CPoly p = cpoly_mul(g.num, cpoly_conj(g.den));
  const CPoly q = cpoly_mul(g.den, cpoly_conj(g.den));
  double qmax = 0.0;
  for (const cplx& c : q) qmax = std::max(qmax, std::abs(c));
  for (const cplx& c : q)
    if (std::abs(c.imag()) > 1e-9 * std::max(qmax, 1e-300))
      throw std::runtime_error("complex_to_lift: denominator failed to realify");

  auto from_x_domain = [&](const CPoly& cp, bool imag_part) {
    Poly out(cp.size());
    double f = 1.0;
    for (std::size_t k = 0; k < cp.size(); ++k) {
      out[k] = (imag_part ? cp[k].imag() : cp[k].real()) / f;
      f *= w;
    }
    return out;
  };
  const Poly den = from_x_domain(q, false);
  RationalFn c{from_x_domain(p, false), den, w};
  RationalFn s{from_x_domain(p, true), den, w};
  c.normalize();
  s.normalize();
  return {c, s};
}

}  // namespace

ProbeResponse probe_response(const DqTransferMatrix& z, double r0, double v0) {
  if (!(r0 > 0.0)) throw std::invalid_argument("probe_response: r0 must be positive");
  const double w = z.dd.omega_scale;
  // Loop gain G = (Z + r0 I)^{-1} Z; on the complex scalar, g = z / (z + r0),
  // whose numerator and denominator share no constructed factors.
  const ComplexRational zc = lift_to_complex(z.dd, z.qd, w);
  const ComplexRational g{zc.num, cpoly_sum(zc.num, cpoly_scaled(zc.den, cplx(r0, 0.0)))};
  const auto [g_c, g_s] = complex_to_lift(g, w);

  ProbeResponse out;
  out.h_mag = g_c * v0;
  out.h_ang = g_s;
  out.approx_mag = z.dd * (v0 / r0);
  out.approx_ang = z.qd * (1.0 / r0);
  out.max_rel_gap = std::max(rel_gap(out.h_mag, out.approx_mag),
                             rel_gap(out.h_ang, out.approx_ang));
  return out;
}

DqTransferMatrix upstream_ratio(const DqTransferMatrix& z10,
                                const DqTransferMatrix& z12) {
  const double w = z10.dd.omega_scale;
  const ComplexRational a = lift_to_complex(z10.dd, z10.qd, w);
  const ComplexRational b = lift_to_complex(z12.dd, z12.qd, w);
  // ratio = a / (a + b) over the common denominator of both operands.
  const CPoly n = cpoly_mul(a.num, b.den);
  const ComplexRational r{n, cpoly_sum(n, cpoly_mul(b.num, a.den))};
  const auto [r_c, r_s] = complex_to_lift(r, w);
  return DqTransferMatrix{r_c, -r_s, r_s, r_c};
}

Eigen::Matrix2cd frame_rotate(const Eigen::Matrix2cd& z, double delta) {
  Eigen::Matrix2d t;
  t << std::cos(delta), -std::sin(delta), std::sin(delta), std::cos(delta);
  return t.cast<cplx>() * z * t.transpose().cast<cplx>();
}

std::array<cplx, 2> eigenvalues2(const Eigen::Matrix2cd& m) {
  const cplx tr = m(0, 0) + m(1, 1);
  const cplx det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const cplx disc = std::sqrt(tr * tr - 4.0 * det);
  std::array<cplx, 2> ev{(tr + disc) / 2.0, (tr - disc) / 2.0};
  if (ev[1].real() < ev[0].real() ||
      (ev[1].real() == ev[0].real() && ev[1].imag() < ev[0].imag()))
    std::swap(ev[0], ev[1]);
  return ev;
}

namespace {

Eigen::Matrix2cd inv2(const Eigen::Matrix2cd& m) {
  const cplx det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const double scale = m.norm();
  if (std::abs(det) < 1e-14 * std::max(scale * scale, 1e-300))
    throw std::domain_error("singular 2x2 matrix in network reduction");
  Eigen::Matrix2cd adj;
  adj << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return adj / det;
}

Eigen::Matrix2cd parallel2(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
  return a * inv2(a + b) * b;
}

}  // namespace

std::vector<Eigen::Matrix2cd> bus2_equivalent(const Bus2Inputs& in,
                                              const std::vector<double>& freqs_hz) {
  if (!in.z_ibr1.empty() && in.z_ibr1.size() != freqs_hz.size())
    throw std::invalid_argument("bus2_equivalent: z_ibr1 table size mismatch");
  if (!in.z_ibr2.empty() && in.z_ibr2.size() != freqs_hz.size())
    throw std::invalid_argument("bus2_equivalent: z_ibr2 table size mismatch");

  std::vector<Eigen::Matrix2cd> out;
  out.reserve(freqs_hz.size());
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    const cplx s(0.0, 2.0 * kPi * freqs_hz[i]);
    Eigen::Matrix2cd z1 = in.zs.eval(s);
    if (!in.z_ibr1.empty()) z1 = parallel2(z1, in.z_ibr1[i]);
    Eigen::Matrix2cd z2 = in.z12.eval(s) + z1;
    if (!in.z_ibr2.empty()) z2 = parallel2(z2, in.z_ibr2[i]);
    out.push_back(z2 * inv2(z2 + in.z23.eval(s)));
  }
  return out;
}

// --- Scenario-derived references -------------------------------------------

namespace {

using MaybeZ = std::optional<RationalFn>;  // nullopt = open circuit

struct TreeCtx {
  double w0 = 0.0;
  std::map<BusId, std::vector<std::pair<std::size_t, BusId>>> adj;  // series edges
  std::map<BusId, std::vector<std::size_t>> shunts;
  std::set<BusId> source_buses;
  const std::vector<Branch>* branches = nullptr;
};

TreeCtx build_tree(const Scenario& s) {
  if (!s.ibrs.empty())
    throw std::invalid_argument(
        "closed-form network reduction requires a passive scenario");
  TreeCtx c;
  c.w0 = s.omega0();
  c.branches = &s.branches;
  for (std::size_t i = 0; i < s.branches.size(); ++i) {
    const Branch& br = s.branches[i];
    if (br.kind == BranchKind::SeriesRL || br.kind == BranchKind::SeriesRLC) {
      c.adj[br.from].push_back({i, br.to});
      c.adj[br.to].push_back({i, br.from});
    } else {
      c.shunts[br.from].push_back(i);
    }
  }
  for (const Source& src : s.sources) c.source_buses.insert(src.bus);
  return c;
}

RationalFn branch_impedance(const Branch& br, double w0) {
  switch (br.kind) {
    case BranchKind::SeriesRL: {
      RationalFn z{{br.r, br.inductance(w0)}, {1.0}, w0};
      z.normalize();
      return z;
    }
    case BranchKind::SeriesRLC: {
      const double l = br.inductance(w0);
      const double c = br.capacitance(w0);
      RationalFn z{{1.0, br.r * c, l * c}, {0.0, c}, w0};
      z.normalize();
      return z;
    }
    case BranchKind::ShuntC: {
      const double c = br.capacitance(w0);
      RationalFn z{{1.0}, {0.0, c}, w0};
      z.normalize();
      return z;
    }
    case BranchKind::ShuntR:
      return RationalFn::constant(br.r, w0);
  }
  throw std::logic_error("unreachable branch kind");
}

MaybeZ parallel_z(const MaybeZ& a, const MaybeZ& b) {
  if (!a) return b;
  if (!b) return a;
  if (a->is_zero() || b->is_zero()) return RationalFn::zero(a->omega_scale);
  return simplify((*a) * (*b) / ((*a) + (*b)));
}

// Driving-point impedance of the subtree rooted at `at`, looking away from
// parent_edge. Ideal sources are shorts; the probe resistor is excluded.
MaybeZ node_impedance(const TreeCtx& c, const BusId& at, std::size_t parent_edge,
                      std::set<BusId>& visited) {
  if (!visited.insert(at).second)
    throw std::invalid_argument("network reduction requires a radial (loop-free) network");
  if (c.source_buses.count(at)) return RationalFn::zero(c.w0);

  MaybeZ acc;
  auto sh = c.shunts.find(at);
  if (sh != c.shunts.end())
    for (std::size_t idx : sh->second)
      acc = parallel_z(acc, branch_impedance((*c.branches)[idx], c.w0));
  auto ad = c.adj.find(at);
  if (ad != c.adj.end()) {
    for (const auto& [idx, other] : ad->second) {
      if (idx == parent_edge) continue;
      MaybeZ sub = node_impedance(c, other, idx, visited);
      if (!sub) continue;  // open stub contributes nothing
      acc = parallel_z(acc, simplify(branch_impedance((*c.branches)[idx], c.w0) + *sub));
    }
  }
  return acc;
}

constexpr std::size_t kNoEdge = static_cast<std::size_t>(-1);

std::vector<std::pair<std::size_t, BusId>> find_path(const TreeCtx& c,
                                                     const BusId& from,
                                                     const BusId& to) {
  // BFS over series edges; returns (edge index, next bus) hops from->to.
  std::map<BusId, std::pair<std::size_t, BusId>> parent;  // bus -> (edge, prev)
  std::vector<BusId> frontier{from};
  std::set<BusId> seen{from};
  while (!frontier.empty()) {
    std::vector<BusId> next;
    for (const BusId& at : frontier) {
      auto ad = c.adj.find(at);
      if (ad == c.adj.end()) continue;
      for (const auto& [idx, other] : ad->second) {
        if (seen.count(other)) continue;
        seen.insert(other);
        parent[other] = {idx, at};
        next.push_back(other);
      }
    }
    frontier = std::move(next);
  }
  if (!seen.count(to))
    throw std::invalid_argument("no path between probe and measurement bus");
  std::vector<std::pair<std::size_t, BusId>> hops;
  BusId at = to;
  while (at != from) {
    auto [idx, prev] = parent.at(at);
    hops.push_back({idx, at});
    at = prev;
  }
  std::reverse(hops.begin(), hops.end());
  return hops;
}

}  // namespace

RationalFn scenario_bus_impedance(const Scenario& s, const BusId& bus) {
  if (!s.has_bus(bus)) throw std::invalid_argument("unknown bus '" + bus + "'");
  TreeCtx c = build_tree(s);
  std::set<BusId> visited;
  MaybeZ z = node_impedance(c, bus, kNoEdge, visited);
  if (!z) throw std::domain_error("bus '" + bus + "' sees an open network");
  return simplify(*z);
}

DqTransferMatrix scenario_bus_impedance_dq(const Scenario& s, const BusId& bus) {
  return scalar_to_dq(scenario_bus_impedance(s, bus), s.omega0());
}

RationalFn scenario_transfer_ratio(const Scenario& s, const BusId& probe_bus,
                                   const BusId& measure_bus) {
  if (!s.has_bus(probe_bus)) throw std::invalid_argument("unknown bus '" + probe_bus + "'");
  if (!s.has_bus(measure_bus))
    throw std::invalid_argument("unknown bus '" + measure_bus + "'");
  TreeCtx c = build_tree(s);
  RationalFn ratio = RationalFn::constant(1.0, c.w0);
  if (probe_bus == measure_bus) return ratio;
  for (const auto& [edge, next_bus] : find_path(c, probe_bus, measure_bus)) {
    if (c.source_buses.count(next_bus)) return RationalFn::zero(c.w0);
    std::set<BusId> visited;
    MaybeZ rest = node_impedance(c, next_bus, edge, visited);
    if (!rest) continue;  // unloaded hop: unity transfer
    if (rest->is_zero()) return RationalFn::zero(c.w0);
    RationalFn ze = branch_impedance(s.branches[edge], c.w0);
    ratio = simplify(ratio * simplify(*rest / (ze + *rest)));
  }
  return ratio;
}

std::vector<cplx> passive_operating_point(const Scenario& s) {
  if (!s.ibrs.empty())
    throw std::invalid_argument("passive_operating_point requires a passive scenario");
  const std::size_t n = s.buses.size();
  std::map<BusId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[s.buses[i]] = i;

  std::vector<cplx> fixed(n, cplx(0.0, 0.0));
  std::vector<bool> is_fixed(n, false);
  for (const Source& src : s.sources) {
    const std::size_t i = index.at(src.bus);
    is_fixed[i] = true;
    fixed[i] = std::polar(src.magnitude, src.phase);
  }

  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  auto stamp_shunt = [&](std::size_t i, cplx adm) { y(i, i) += adm; };
  auto stamp_series = [&](std::size_t i, std::size_t j, cplx adm) {
    y(i, i) += adm;
    y(j, j) += adm;
    y(i, j) -= adm;
    y(j, i) -= adm;
  };
  for (const Branch& br : s.branches) {
    switch (br.kind) {
      case BranchKind::SeriesRL:
      case BranchKind::SeriesRLC: {
        const double x = br.x_l.value_or(0.0) - br.x_c.value_or(0.0);
        const cplx z(br.r, x);
        if (std::abs(z) < 1e-12)
          throw std::domain_error("zero-impedance series branch");
        stamp_series(index.at(br.from), index.at(br.to), 1.0 / z);
        break;
      }
      case BranchKind::ShuntC:
        stamp_shunt(index.at(br.from), cplx(0.0, br.b.value_or(0.0)));
        break;
      case BranchKind::ShuntR:
        stamp_shunt(index.at(br.from), cplx(1.0 / br.r, 0.0));
        break;
    }
  }
  stamp_shunt(index.at(s.probe.bus), cplx(1.0 / s.probe.r0, 0.0));

  std::vector<std::size_t> free_nodes;
  for (std::size_t i = 0; i < n; ++i)
    if (!is_fixed[i]) free_nodes.push_back(i);

  std::vector<cplx> v(n);
  for (std::size_t i = 0; i < n; ++i)
    if (is_fixed[i]) v[i] = fixed[i];
  if (!free_nodes.empty()) {
    const std::size_t m = free_nodes.size();
    Eigen::MatrixXcd a(m, m);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(m);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t cidx = 0; cidx < m; ++cidx)
        a(r, cidx) = y(free_nodes[r], free_nodes[cidx]);
      for (std::size_t k = 0; k < n; ++k)
        if (is_fixed[k]) rhs(r) -= y(free_nodes[r], k) * fixed[k];
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(a);
    if (!lu.isInvertible())
      throw std::domain_error("singular network at fundamental frequency");
    Eigen::VectorXcd x = lu.solve(rhs);
    for (std::size_t r = 0; r < m; ++r) v[free_nodes[r]] = x(r);
  }
  return v;
}

namespace {

struct RationalColumn {
  RationalFn d, q;
};

RationalColumn rotate_col(const RationalColumn& c, double ang) {
  const double cs = std::cos(ang), sn = std::sin(ang);
  return {simplify(c.d * cs - c.q * sn), simplify(c.d * sn + c.q * cs)};
}

RationalColumn apply_matrix(const RationalMatrix2& m, const RationalColumn& c) {
  return {simplify(m.a11 * c.d + m.a12 * c.q), simplify(m.a21 * c.d + m.a22 * c.q)};
}

}  // namespace

ProbeResponse scenario_probe_response(const Scenario& s, const BusId& measure_bus) {
  const BusId& probe_bus = s.probe.bus;
  const std::vector<cplx> op = passive_operating_point(s);
  std::map<BusId, std::size_t> index;
  for (std::size_t i = 0; i < s.buses.size(); ++i) index[s.buses[i]] = i;
  const cplx vp = op.at(index.at(probe_bus));
  const cplx vm = op.at(index.at(measure_bus));
  const double v0p = std::abs(vp), v0m = std::abs(vm);
  if (v0p < 1e-9 || v0m < 1e-9)
    throw std::domain_error("vanishing operating-point voltage");

  DqTransferMatrix z = scenario_bus_impedance_dq(s, probe_bus);
  ProbeResponse at_probe = probe_response(z, s.probe.r0, v0p);
  if (measure_bus == probe_bus) return at_probe;

  const double w0 = s.omega0();
  DqTransferMatrix ratio =
      scalar_to_dq(scenario_transfer_ratio(s, probe_bus, measure_bus), w0);

  auto propagate = [&](const RationalFn& mag, const RationalFn& ang) {
    RationalColumn col{mag, ang * v0p};           // probe-frame dq deviation per p
    col = rotate_col(col, std::arg(vp));          // to the global frame
    col = apply_matrix(ratio.as_matrix(), col);   // through the divider
    col = rotate_col(col, -std::arg(vm));         // into the measurement frame
    return std::pair<RationalFn, RationalFn>{col.d, col.q * (1.0 / v0m)};
  };

  ProbeResponse out;
  std::tie(out.h_mag, out.h_ang) = propagate(at_probe.h_mag, at_probe.h_ang);
  std::tie(out.approx_mag, out.approx_ang) =
      propagate(at_probe.approx_mag, at_probe.approx_ang);
  out.max_rel_gap = std::max(rel_gap(out.h_mag, out.approx_mag),
                             rel_gap(out.h_ang, out.approx_ang));
  return out;
}

}  // namespace subsweep
