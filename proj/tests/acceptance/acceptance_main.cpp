// Acceptance gate: eleven independent checks, one per `--criterion N`
// invocation. Each prints exactly one line,
//   criterion N: PASS|FAIL - <measurements>
// and exits 0 on pass, 1 on fail. Tolerances are pinned here in code.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "subsweep/analytic.hpp"
#include "subsweep/dsp.hpp"
#include "subsweep/pipeline.hpp"
#include "subsweep/probe.hpp"
#include "subsweep/rational.hpp"
#include "subsweep/sysid.hpp"

namespace fs = std::filesystem;
using namespace subsweep;

namespace {

std::string strf(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

// Accumulates measurements; any failed expectation flips the verdict.
struct Gate {
  bool pass = true;
  std::string detail;

  void measure(const std::string& text) {
    if (!detail.empty()) detail += ", ";
    detail += text;
  }
  void expect(bool ok, const std::string& text) {
    measure(text + (ok ? "" : " [FAIL]"));
    if (!ok) pass = false;
  }
};

fs::path scenario_dir() {
  const char* env = std::getenv("SUBSWEEP_SCENARIOS");
  return env && *env ? fs::path(env) : fs::path("scenarios");
}

fs::path fresh_out(const std::string& name) {
  const fs::path p = fs::path("acceptance_out") / name;
  std::error_code ec;
  fs::remove_all(p, ec);
  fs::create_directories(p);
  return p;
}

// Metric lookup that records a failure when the key is absent.
double metric(Gate& g, const FigureReport& r, const std::string& key) {
  const auto it = r.metrics.find(key);
  if (it == r.metrics.end()) {
    g.expect(false, "metric '" + key + "' missing");
    return std::nan("");
  }
  return it->second;
}

// --- criterion 1: chirp study matches the closed form through the filter ----

Gate criterion1() {
  Gate g;
  const FigureReport r = repro_figure("fig6", scenario_dir(), fresh_out("fig6"));
  const double om = metric(g, r, "order_mag"), oa = metric(g, r, "order_ang");
  const double fm = metric(g, r, "fit_mag_percent"), fa = metric(g, r, "fit_ang_percent");
  const double edb = metric(g, r, "max_mag_err_db");
  const double edeg = metric(g, r, "max_phase_err_deg");
  g.expect(om == 4.0 && oa == 4.0, strf("selected orders %g/%g (want 4/4)", om, oa));
  g.expect(fm >= 85.0 && fa >= 85.0, strf("fits %.2f%%/%.2f%% (want >= 85)", fm, fa));
  g.expect(edb <= 1.0, strf("worst magnitude gap %.4f dB (want <= 1)", edb));
  g.expect(edeg <= 5.0, strf("worst phase gap %.4f deg (want <= 5)", edeg));
  return g;
}

// --- criterion 2: moving-average filter law ---------------------------------

Gate criterion2() {
  Gate g;
  const LpfSpec lpf;
  const double ph40 = std::arg(moving_average_response(lpf, 40.0)) * 180.0 / kPi;
  const double m120 = std::abs(moving_average_response(lpf, 120.0));
  g.expect(std::abs(ph40 + 60.0) <= 0.5, strf("phase at 40 Hz %.4f deg (want -60 +/- 0.5)", ph40));
  g.expect(m120 < 1e-10, strf("magnitude at 120 Hz %.3e (want < 1e-10)", m120));
  return g;
}

// --- criterion 3: step study peak and resonance image ------------------------

Gate criterion3() {
  Gate g;
  const FigureReport r = repro_figure("fig10", scenario_dir(), fresh_out("fig10"));
  const double pd = metric(g, r, "meas_dd_peak_hz");
  const double pq = metric(g, r, "meas_qd_peak_hz");
  g.expect(std::abs(pd - 9.0) <= 0.5, strf("dd peak %.3f Hz (want 9 +/- 0.5)", pd));
  g.expect(std::abs(pq - 9.0) <= 0.5, strf("qd peak %.3f Hz (want 9 +/- 0.5)", pq));
  const double f_nat = natural_frequency(0.75, 1.0, 60.0);
  g.expect(std::abs(f_nat - 69.282) <= 1e-3, strf("natural frequency %.4f Hz (want 69.282)", f_nat));
  g.expect(std::abs((f_nat - 60.0) - 9.282) <= 1e-3,
           strf("rotating-frame image %.4f Hz (want 9.282)", f_nat - 60.0));
  return g;
}

// --- criterion 4: scalar lift agrees with the direct construction -----------

double coeff_gap(const RationalFn& a, const RationalFn& b) {
  RationalFn x = a, y = b;
  x.normalize();
  y.normalize();
  double scale = 0.0;
  for (double c : x.num) scale = std::max(scale, std::abs(c));
  for (double c : x.den) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) scale = 1.0;
  double worst = 0.0;
  auto cmp = [&](const Poly& p, const Poly& q) {
    const std::size_t n = std::max(p.size(), q.size());
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = i < p.size() ? p[i] : 0.0;
      const double qi = i < q.size() ? q[i] : 0.0;
      worst = std::max(worst, std::abs(pi - qi) / scale);
    }
  };
  cmp(x.num, y.num);
  cmp(x.den, y.den);
  return worst;
}

Gate criterion4() {
  Gate g;
  const double w0 = 2.0 * kPi * 60.0;
  std::mt19937 rng(20260816u);
  std::uniform_real_distribution<double> urr(0.02, 2.0), urx(0.05, 2.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double r = urr(rng), x_l = urx(rng), x_c = urx(rng);
    const DqTransferMatrix direct = series_rlc_dq(r, x_l, x_c, w0);
    const double l = x_l / w0, c = 1.0 / (x_c * w0);
    RationalFn z;
    z.num = {1.0, c * r, c * l};  // (1 + c r s + c l s^2) / (c s)
    z.den = {0.0, c};
    z.omega_scale = w0;
    const DqTransferMatrix lifted = scalar_to_dq(z, w0);
    worst = std::max(worst, coeff_gap(direct.dd, lifted.dd));
    worst = std::max(worst, coeff_gap(direct.qd, lifted.qd));
    worst = std::max(worst, coeff_gap(direct.dq, lifted.dq));
    worst = std::max(worst, coeff_gap(direct.qq, lifted.qq));
  }
  g.expect(worst < 1e-10,
           strf("worst relative coefficient gap %.3e over 100 draws (want < 1e-10)", worst));
  return g;
}

// --- criterion 5: two-location step study matches per-bus predictions -------

Gate criterion5() {
  Gate g;
  const FigureReport r = repro_figure("fig12", scenario_dir(), fresh_out("fig12"));
  for (const char* bus : {"bus1", "bus2"}) {
    const double edb = metric(g, r, std::string(bus) + "_max_mag_err_db");
    const double edeg = metric(g, r, std::string(bus) + "_max_phase_err_deg");
    g.expect(edb <= 2.0, strf("%s magnitude gap %.4f dB (want <= 2)", bus, edb));
    g.expect(edeg <= 10.0, strf("%s phase gap %.4f deg (want <= 10)", bus, edeg));
  }
  const double p1 = metric(g, r, "bus1_meas_peak_hz");
  const double p2 = metric(g, r, "bus2_meas_peak_hz");
  g.expect(std::abs(p1 - p2) <= 0.5,
           strf("peaks %.3f vs %.3f Hz (want same within 0.5)", p1, p2));
  return g;
}

// --- criterion 6: estimator oracle on random well-separated systems ---------

// Random stable system with complex pairs on distinct frequency slots,
// moderate damping, an in-band real pole for odd orders, and out-of-band real
// zeros; DC gain normalized to 1.
RationalFn random_system(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> jitter(0.85, 1.18), uz(0.06, 0.35),
      ur(1.2, 3.0), uzero(12.0, 30.0);
  const double slots[4] = {2.2, 4.1, 7.6, 14.0};
  const int pairs = n / 2;
  std::vector<int> slot_ids = {0, 1, 2, 3};
  std::shuffle(slot_ids.begin(), slot_ids.end(), rng);
  std::vector<cplx> ps;
  for (int i = 0; i < pairs; ++i) {
    const double f = slots[slot_ids[static_cast<std::size_t>(i)]] * jitter(rng);
    const double w = 2.0 * kPi * f, zeta = uz(rng);
    ps.push_back(cplx(-zeta * w, w * std::sqrt(1.0 - zeta * zeta)));
    ps.push_back(std::conj(ps.back()));
  }
  if (n % 2 == 1) ps.push_back(cplx(-2.0 * kPi * ur(rng), 0.0));
  const int nz = (n >= 2) ? static_cast<int>(rng() % static_cast<std::size_t>(n)) : 0;
  std::vector<cplx> zs;
  for (int i = 0; i < nz; ++i) zs.push_back(cplx(-2.0 * kPi * uzero(rng), 0.0));
  RationalFn g;
  g.num = poly_from_roots(zs, 1.0);
  g.den = poly_from_roots(ps, 1.0);
  g.omega_scale = 2.0 * kPi * 8.0;
  const double dc = std::abs(g.eval_hz(0.0));
  if (dc > 1e-12)
    for (double& c : g.num) c /= dc;
  return g;
}

Gate criterion6() {
  Gate g;
  std::mt19937 rng(987654321u);
  const double rate = 400.0, dur = 30.0;
  const auto n = static_cast<std::size_t>(dur * rate);
  SignalSpec sig;
  sig.kind = SignalKind::Chirp;
  sig.amplitude = 0.05;
  sig.t_on = 1.0;
  sig.t_off = 28.0;
  sig.f_start = 0.5;
  sig.f_end = 20.0;
  std::vector<double> u(n);
  for (std::size_t k = 0; k < n; ++k) u[k] = evaluate_signal(sig, static_cast<double>(k) / rate);

  const int trials = 100;
  int ok_order = 0;
  double worst_db = 0.0, worst_deg = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int order = 1 + static_cast<int>(rng() % 6);
    const RationalFn truth = random_system(rng, order);
    const std::vector<double> y = lsim(truth, u, rate);
    const IdentifiedModel m = estimate_tf(u, y, rate, order, 0.5, 40.0);
    for (double f = std::max(0.7, m.f_lo); f <= std::min(19.5, m.f_hi); f *= 1.03) {
      const cplx a = m.tf.eval_hz(f), b = truth.eval_hz(f);
      worst_db = std::max(worst_db, std::abs(20.0 * std::log10(std::abs(a) / std::abs(b))));
      worst_deg = std::max(worst_deg, std::abs(std::arg(a / b)) * 180.0 / kPi);
    }
    const IdentifiedModel sel = select_order(u, y, rate, {1, 2, 3, 4, 5, 6}, 0.5, 40.0);
    if (sel.order == order) ++ok_order;
  }
  g.expect(worst_db <= 0.2 && worst_deg <= 2.0,
           strf("worst response gap %.4f dB / %.4f deg over %d trials (want <= 0.2 / 2)",
                worst_db, worst_deg, trials));
  g.expect(ok_order >= 95,
           strf("true order picked %d/%d times (want >= 95)", ok_order, trials));
  return g;
}

// --- criterion 7: feeder, resistor modulation vs current injection ----------

Gate criterion7() {
  Gate g;
  const FigureReport r = repro_figure("fig16", scenario_dir(), fresh_out("fig16"));
  const double edb = metric(g, r, "max_mag_err_db");
  const double edeg = metric(g, r, "max_phase_err_deg");
  const double pg = metric(g, r, "gridsweep_peak_hz");
  const double pi = metric(g, r, "injection_peak_hz");
  g.expect(edb <= 3.0, strf("worst magnitude gap %.4f dB (want <= 3)", edb));
  g.expect(edeg <= 15.0, strf("worst phase gap %.4f deg (want <= 15)", edeg));
  g.expect(std::abs(pg - pi) <= 0.5,
           strf("peaks %.3f vs %.3f Hz (want same within 0.5)", pg, pi));
  return g;
}

// --- criterion 8: control-mode contrast --------------------------------------

Gate criterion8() {
  Gate g;
  const FigureReport r = repro_figure("fig17", scenario_dir(), fresh_out("fig17"));
  const double vp = metric(g, r, "voltage_control_peak_hz");
  const double qp = metric(g, r, "reactive_power_control_peak_hz");
  const double vw = metric(g, r, "voltage_control_peak_width_hz");
  const double qw = metric(g, r, "reactive_power_control_peak_width_hz");
  g.expect(vp >= 3.5 && vp <= 5.5, strf("voltage-control peak %.3f Hz (want in [3.5, 5.5])", vp));
  g.expect(qp >= 5.0 && qp <= 7.0, strf("reactive-control peak %.3f Hz (want in [5, 7])", qp));
  g.expect(qw < vw, strf("widths %.3f vs %.3f Hz (reactive must be strictly narrower)", qw, vw));
  return g;
}

// --- criterion 9: strong grid, upstream magnitude never exceeds probe bus ---

Gate criterion9() {
  Gate g;
  const FigureReport r = repro_figure("fig18", scenario_dir(), fresh_out("fig18"));
  const double gap = metric(g, r, "max_bus2_minus_bus3_db");
  const double p2 = metric(g, r, "bus2_max_prom_db");
  const double p3 = metric(g, r, "bus3_max_prom_db");
  g.expect(gap <= 0.0, strf("worst Bus2-Bus3 magnitude gap %.4f dB (want <= 0)", gap));
  g.expect(p2 <= 6.0 && p3 <= 6.0,
           strf("max prominence %.3f / %.3f dB (want both <= 6)", p2, p3));
  return g;
}

// --- criterion 10: frame rotation preserves eigenvalues ----------------------

Gate criterion10() {
  Gate g;
  std::mt19937 rng(424242u);
  std::uniform_real_distribution<double> uf(1.0, 40.0), ud(-kPi, kPi), urr(0.02, 2.0),
      urx(0.05, 2.0);
  const double w0 = 2.0 * kPi * 60.0;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const DqTransferMatrix zm = series_rlc_dq(urr(rng), urx(rng), urx(rng), w0);
    const Eigen::Matrix2cd z = zm.eval_hz(uf(rng));
    const Eigen::Matrix2cd zgw = frame_rotate(z, ud(rng));
    const auto ea = eigenvalues2(z);
    const auto eb = eigenvalues2(zgw);
    worst = std::max({worst, std::abs(ea[0] - eb[0]), std::abs(ea[1] - eb[1])});
  }
  g.expect(worst <= 1e-10,
           strf("worst eigenvalue gap %.3e over 50 random rotations (want <= 1e-10)", worst));

  const DqTransferMatrix zm = series_rlc_dq(0.2, 0.25, 0.1, w0);
  const Eigen::Matrix2cd z = zm.eval_hz(7.3);
  const double id_gap = (frame_rotate(z, 0.0) - z).cwiseAbs().maxCoeff();
  g.expect(id_gap <= 1e-15, strf("zero-angle rotation gap %.3e (want identity)", id_gap));
  return g;
}

// --- criterion 11: byte-identical reruns -------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

Gate criterion11() {
  Gate g;
  const char* cli = std::getenv("SUBSWEEP_CLI");
  if (!cli || !*cli) {
    g.expect(false, "SUBSWEEP_CLI not set (point it at the command-line binary)");
    return g;
  }
  const fs::path a = fresh_out("repro_a"), b = fresh_out("repro_b");
  for (const fs::path& out : {a, b}) {
    const std::string cmd = std::string("\"") + cli + "\" repro fig6 --scenarios \"" +
                            scenario_dir().string() + "\" -o \"" + out.string() +
                            "\" > \"" + (out / "run.log").string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) {
      g.expect(false, strf("repro run into %s exited with status %d", out.string().c_str(), rc));
      return g;
    }
  }
  std::vector<std::string> rel;
  for (const auto& e : fs::recursive_directory_iterator(a / "fig6"))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      rel.push_back(fs::relative(e.path(), a).string());
  std::sort(rel.begin(), rel.end());
  g.expect(!rel.empty(), strf("%zu CSV files produced", rel.size()));
  std::size_t mismatches = 0;
  for (const std::string& p : rel) {
    if (!fs::exists(b / p) || slurp(a / p) != slurp(b / p)) ++mismatches;
  }
  g.expect(mismatches == 0,
           strf("%zu of %zu CSVs differ between identical runs (want 0)", mismatches, rel.size()));
  return g;
}

using CriterionFn = Gate (*)();
const CriterionFn kCriteria[11] = {criterion1, criterion2, criterion3, criterion4,
                                   criterion5, criterion6, criterion7, criterion8,
                                   criterion9, criterion10, criterion11};

int run_one(int n) {
  Gate g;
  try {
    g = kCriteria[n - 1]();
  } catch (const std::exception& e) {
    g.pass = false;
    g.measure(std::string("exception: ") + e.what());
  }
  std::printf("criterion %d: %s - %s\n", n, g.pass ? "PASS" : "FAIL", g.detail.c_str());
  return g.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  int criterion = 0;
  bool all = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      criterion = std::atoi(argv[++i]);
    } else if (std::strcmp(argv[i], "--all") == 0) {
      all = true;
    } else {
      std::fprintf(stderr, "usage: acceptance --criterion N | --all\n");
      return 2;
    }
  }
  if (all) {
    int rc = 0;
    for (int n = 1; n <= 11; ++n) rc |= run_one(n);
    return rc;
  }
  if (criterion < 1 || criterion > 11) {
    std::fprintf(stderr, "usage: acceptance --criterion N   (N in 1..11)\n");
    return 2;
  }
  return run_one(criterion);
}
