#include "hinfdae/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hinfdae/controller.hpp"
#include "hinfdae/coprime.hpp"
#include "hinfdae/errors.hpp"
#include "hinfdae/hinfbt.hpp"
#include "hinfdae/margin.hpp"
#include "hinfdae/matrix_market.hpp"
#include "hinfdae/norms.hpp"
#include "hinfdae/riccati.hpp"
#include "hinfdae/simulate.hpp"

namespace hinfdae::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kToolVersion = "hinfctl 0.1.0";

// FNV-1a over the raw argument list: the provenance stamp that makes rerun
// outputs byte-identical exactly when the invocation is identical.
std::string config_hash(const std::vector<std::string>& args) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ull;
  };
  for (const std::string& a : args) {
    for (unsigned char c : a) mix(c);
    mix(0x1f);
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Minimal JSON emitter: all numerics at 17 significant digits, non-finite
// values as null, keys in insertion order for reproducible bytes.
class JsonOut {
 public:
  JsonOut& field(const std::string& key, double v) {
    return raw(key, std::isfinite(v) ? num(v) : "null");
  }
  JsonOut& field(const std::string& key, bool v) { return raw(key, v ? "true" : "false"); }
  JsonOut& field(const std::string& key, long long v) { return raw(key, std::to_string(v)); }
  JsonOut& field(const std::string& key, const std::string& v) { return raw(key, "\"" + v + "\""); }
  JsonOut& raw(const std::string& key, const std::string& v) {
    items_.push_back("\"" + key + "\": " + v);
    return *this;
  }
  std::string str(int indent = 0) const {
    const std::string pad(indent + 2, ' ');
    std::string out = "{\n";
    for (size_t i = 0; i < items_.size(); ++i)
      out += pad + items_[i] + (i + 1 < items_.size() ? ",\n" : "\n");
    out += std::string(indent, ' ') + "}";
    return out;
  }

 private:
  std::vector<std::string> items_;
};

std::string provenance_json(const std::string& hash) {
  JsonOut p;
  p.field("tool", std::string(kToolVersion)).field("config_hash", hash);
  return p.str(2);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

// A pipeline directory holds either a linear benchmark or a nonlinear plant
// bundle; margins and controllers are designed on the (linearized) system.
ConstrainedSystem load_design_system(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw IoError("missing manifest: " + dir);
  nlohmann::json manifest = nlohmann::json::parse(in, nullptr, true, true);
  if (manifest.value("kind", "") == "toy_nonlinear") return load_nonlinear_plant(dir).lin;
  return load_constrained_system(dir);
}

struct MarginArtifacts {
  double gamma = 0.0;
  LowRankFactor x, y;
};

MarginArtifacts load_margin(const std::string& dir) {
  const std::string path = dir + "/margin.json";
  std::ifstream in(path);
  if (!in) throw IoError("missing margin report (run the margin command first): " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);
  MarginArtifacts art;
  art.gamma = j.at("gamma").get<double>();
  art.x.Z = read_matrix_market_dense(dir + "/margin_x.mtx");
  art.y.Z = read_matrix_market_dense(dir + "/margin_y.mtx");
  return art;
}

std::string verdict_name(VerdictRationale r) {
  switch (r) {
    case VerdictRationale::negative_diff: return "negative_diff";
    case VerdictRationale::noise_floor: return "noise_floor";
    case VerdictRationale::diverged: return "diverged";
    default: return "growing";
  }
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
  std::string kind = "synthetic";
  std::string out;
  long long nv = 60, np = 10, m = 2, p = 2, unstable = 2;
  std::uint64_t seed = 0;
  double re = 90.0;
};

int cmd_gen(const GenArgs& a) {
  fs::create_directories(a.out);
  if (a.kind == "synthetic") {
    SyntheticParams params;
    params.n_v = a.nv;
    params.n_p = a.np;
    params.m = a.m;
    params.p = a.p;
    params.n_unstable = static_cast<int>(a.unstable);
    params.seed = a.seed;
    save_constrained_system(a.out, gen_synthetic_dae(params), "synthetic", a.seed);
  } else if (a.kind == "toy") {
    ToyParams params;
    params.n_v = a.nv;
    params.n_p = a.np;
    params.m = a.m;
    params.p = a.p;
    params.reynolds_like = a.re;
    params.seed = a.seed;
    save_nonlinear_plant(a.out, gen_toy_nonlinear(params));
  } else {
    throw InvalidInput("unknown benchmark kind: " + a.kind);
  }
  std::printf("wrote %s benchmark to %s\n", a.kind.c_str(), a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// margin
// ---------------------------------------------------------------------------

struct MarginArgs {
  std::string system;
  std::string out;  // default <system>/margin.json
  MarginOptions opts;
};

int cmd_margin(const MarginArgs& a, const std::string& hash) {
  ConstrainedSystem sys = load_design_system(a.system);
  MarginReport report = compute_margin(sys, a.opts);

  const std::string out = a.out.empty() ? a.system + "/margin.json" : a.out;
  const std::string dir = fs::path(out).parent_path().string();

  std::string probes = "[\n";
  for (size_t i = 0; i < report.probes.size(); ++i) {
    const MarginProbe& pr = report.probes[i];
    JsonOut p;
    p.field("gamma", pr.gamma).field("rho", pr.rho).field("feasible", pr.feasible);
    probes += "    " + p.str(4) + (i + 1 < report.probes.size() ? ",\n" : "\n");
  }
  probes += "  ]";

  JsonOut ranks;
  ranks.field("x", static_cast<long long>(report.x_factor.Z.cols()))
      .field("y", static_cast<long long>(report.y_factor.Z.cols()));

  JsonOut j;
  j.raw("provenance", provenance_json(hash))
      .field("gamma", report.gamma)
      .field("feasible", report.feasible)
      .field("rho", report.rho)
      .raw("ranks", ranks.str(2))
      .raw("probes", probes);
  write_text(out, j.str() + "\n");
  write_matrix_market((dir.empty() ? "." : dir) + "/margin_x.mtx", report.x_factor.Z);
  write_matrix_market((dir.empty() ? "." : dir) + "/margin_y.mtx", report.y_factor.Z);
  std::printf("accepted margin gamma = %s (%zu probes) -> %s\n", num(report.gamma).c_str(),
              report.probes.size(), out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string system;
  std::string out;  // default: the system directory
  double tol = -1.0;
  long long order = -1;
  bool aposteriori = false;
  double norm_tol = 1e-4;
};

std::string certificate_json(const Certificate& cert, const ReducedModel& rom,
                             const SynthArgs& a, const std::string& hash) {
  JsonOut j;
  j.raw("provenance", provenance_json(hash))
      .field("gamma", cert.gamma)
      .field("beta", cert.beta)
      .field("r", static_cast<long long>(rom.r));
  if (a.tol > 0.0) j.field("tol", a.tol);
  j.field("eps", cert.eps).field("apriori_ok", cert.apriori_ok).field("gamma_GK", cert.gamma_GK);
  if (cert.eps_hat) j.field("eps_hat", *cert.eps_hat);
  if (cert.gamma_hat) j.field("gamma_hat", *cert.gamma_hat);
  if (cert.aposteriori_ok) j.field("aposteriori_ok", *cert.aposteriori_ok);
  return j.str() + "\n";
}

int cmd_synth(const SynthArgs& a, const std::string& hash) {
  if ((a.tol > 0.0) == (a.order >= 1))
    throw InvalidInput("exactly one of --tol and --order must be given");
  ConstrainedSystem sys = load_design_system(a.system);
  MarginArtifacts margin = load_margin(a.system);

  ReductionCut cut;
  cut.tol = a.tol;
  cut.order = a.order;
  ReducedModel rom = reduce(sys, margin.x, margin.y, margin.gamma, cut);
  auto [y_hat, x_hat] = reduced_riccati_lift(rom, sys.E, margin.y, margin.x);
  CentralController k = central_controller_reduced(rom, y_hat, x_hat, margin.gamma);
  Certificate cert = certify(rom.sigma, rom.r, margin.gamma);
  if (a.aposteriori) {
    AposterioriCheck apost = aposteriori_stab_check(sys, rom, k.sys, margin.y, a.norm_tol);
    cert.eps_hat = apost.eps_hat;
    cert.gamma_hat = apost.gamma_hat;
    cert.aposteriori_ok = apost.ok;
  }

  const std::string base = a.out.empty() ? a.system : a.out;
  fs::create_directories(base + "/rom");
  fs::create_directories(base + "/controller");
  write_matrix_market(base + "/rom/A.mtx", rom.rom.A);
  write_matrix_market(base + "/rom/B.mtx", rom.rom.B);
  write_matrix_market(base + "/rom/C.mtx", rom.rom.C);
  write_matrix_market(base + "/rom/W.mtx", rom.W);
  write_matrix_market(base + "/rom/T.mtx", rom.T);
  write_matrix_market(base + "/rom/sigma.mtx", Eigen::MatrixXd(rom.sigma));
  {
    JsonOut meta;
    meta.raw("provenance", provenance_json(hash))
        .field("gamma", rom.gamma)
        .field("r", static_cast<long long>(rom.r));
    write_text(base + "/rom/meta.json", meta.str() + "\n");
  }
  write_matrix_market(base + "/controller/E.mtx", k.sys.E);
  write_matrix_market(base + "/controller/A.mtx", k.sys.A);
  write_matrix_market(base + "/controller/B.mtx", k.sys.B);
  write_matrix_market(base + "/controller/C.mtx", k.sys.C);
  {
    JsonOut meta;
    meta.raw("provenance", provenance_json(hash))
        .field("gamma", k.gamma)
        .field("order", static_cast<long long>(k.order()))
        .field("kind", std::string(k.kind == ControllerKind::reduced ? "reduced" : "full"));
    write_text(base + "/controller/meta.json", meta.str() + "\n");
  }
  write_text(base + "/certificate.json", certificate_json(cert, rom, a, hash));
  std::printf("reduced order r = %lld, eps = %s, apriori_ok = %d -> %s\n",
              static_cast<long long>(rom.r), num(cert.eps).c_str(), cert.apriori_ok ? 1 : 0,
              base.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimArgs {
  std::string plant;
  std::string controller;  // empty: <plant>/controller if present, else open loop
  std::string trace_path, verdict_path;
  SimulationConfig cfg;
  std::string initial_file;
  bool open_loop = false;
};

std::optional<CentralController> load_controller(const std::string& dir) {
  if (!fs::exists(dir + "/meta.json")) return std::nullopt;
  std::ifstream in(dir + "/meta.json");
  nlohmann::json meta = nlohmann::json::parse(in, nullptr, true, true);
  CentralController k;
  k.sys = make_system(read_matrix_market_dense(dir + "/E.mtx"),
                      read_matrix_market_dense(dir + "/A.mtx"),
                      read_matrix_market_dense(dir + "/B.mtx"),
                      read_matrix_market_dense(dir + "/C.mtx"));
  k.gamma = meta.at("gamma").get<double>();
  k.kind = meta.value("kind", "reduced") == "full" ? ControllerKind::full
                                                   : ControllerKind::reduced;
  return k;
}

void write_trace_csv(const std::string& path, const SimulationTrace& trace,
                     const std::string& hash) {
  std::ostringstream out;
  out << "# " << kToolVersion << " config=" << hash << "\n";
  out << "t";
  for (Eigen::Index j = 0; j < trace.y.cols(); ++j) out << ",y" << (j + 1);
  for (Eigen::Index j = 0; j < trace.u.cols(); ++j) out << ",u" << (j + 1);
  out << "\n";
  for (Eigen::Index i = 0; i < trace.times.size(); ++i) {
    out << num(trace.times(i));
    for (Eigen::Index j = 0; j < trace.y.cols(); ++j) out << "," << num(trace.y(i, j));
    for (Eigen::Index j = 0; j < trace.u.cols(); ++j) out << "," << num(trace.u(i, j));
    out << "\n";
  }
  write_text(path, out.str());
}

int cmd_simulate(const SimArgs& a, const std::string& hash) {
  NonlinearPlant plant = load_nonlinear_plant(a.plant);
  std::optional<CentralController> k;
  if (!a.open_loop) {
    const std::string kdir = a.controller.empty() ? a.plant + "/controller" : a.controller;
    k = load_controller(kdir);
    if (!k && !a.controller.empty()) throw IoError("no controller bundle at " + a.controller);
  }

  SimulationConfig cfg = a.cfg;
  if (!a.initial_file.empty()) cfg.initial = read_matrix_market_dense(a.initial_file);
  SimulationTrace trace = simulate_closed_loop(plant, k ? &*k : nullptr, cfg);
  Verdict verdict = stabilization_verdict(trace);

  if (!a.trace_path.empty()) write_trace_csv(a.trace_path, trace, hash);
  const std::string vpath =
      a.verdict_path.empty() ? a.plant + "/verdict.json" : a.verdict_path;
  JsonOut j;
  j.raw("provenance", provenance_json(hash))
      .field("stabilized", verdict.stabilized)
      .field("var_q3", verdict.var_q3)
      .field("var_q4", verdict.var_q4)
      .field("diff", verdict.diff)
      .field("rationale", verdict_name(verdict.rationale))
      .field("constraint_drift", trace.constraint_drift);
  if (trace.diverged_at) j.field("diverged_at", *trace.diverged_at);
  write_text(vpath, j.str() + "\n");

  std::printf("verdict: %s (diff = %s) -> %s\n",
              verdict.stabilized ? "stabilized" : "not stabilized", num(verdict.diff).c_str(),
              vpath.c_str());
  if (trace.diverged_at) return 5;
  return verdict.stabilized ? 0 : 4;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string plant;
  std::string out = "sweep.csv";
  std::string mode = "parameter";
  std::vector<long long> ells{1, 2, 4, 8, 16};
  std::vector<double> tols{1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
  SimulationConfig cfg;
  double norm_tol = 1e-4;
  MarginOptions margin_opts;
};

struct SweepRow {
  long long ell = 0;
  double tol = 0.0;
  long long r = 0;
  bool stabilized = false;
  double eps = std::numeric_limits<double>::quiet_NaN();
  double eps_hat = std::numeric_limits<double>::quiet_NaN();
  double delta_norm = std::numeric_limits<double>::quiet_NaN();
  bool apriori_ok = false, aposteriori_ok = false, robcov_ok = false;
};

int cmd_sweep(const SweepArgs& a, const std::string& hash) {
  NonlinearPlant plant = load_nonlinear_plant(a.plant);
  const PerturbationMode mode =
      a.mode == "picard" ? PerturbationMode::picard_like : PerturbationMode::parameter_like;

  std::vector<SweepRow> rows;
  for (long long ell : a.ells) {
    PerturbedLinearization pert = perturb_linearization(plant, mode, static_cast<int>(ell));

    bool design_ok = true;
    MarginReport margin;
    double delta_norm = std::numeric_limits<double>::quiet_NaN();
    try {
      margin = compute_margin(pert.sys, a.margin_opts);
      delta_norm =
          coprime_error(pert.sys, plant.lin, margin.y_factor, margin.gamma, a.norm_tol);
    } catch (const Error&) {
      design_ok = false;
    }

    for (double tol : a.tols) {
      SweepRow row;
      row.ell = ell;
      row.tol = tol;
      if (design_ok) {
        try {
          ReductionCut cut;
          cut.tol = tol;
          ReducedModel rom = reduce(pert.sys, margin.x_factor, margin.y_factor, margin.gamma, cut);
          auto [y_hat, x_hat] =
              reduced_riccati_lift(rom, pert.sys.E, margin.y_factor, margin.x_factor);
          CentralController k = central_controller_reduced(rom, y_hat, x_hat, margin.gamma);
          Certificate cert = certify(rom.sigma, rom.r, margin.gamma);
          AposterioriCheck apost =
              aposteriori_stab_check(pert.sys, rom, k.sys, margin.y_factor, a.norm_tol);

          row.r = rom.r;
          row.eps = cert.eps;
          row.eps_hat = apost.eps_hat;
          row.delta_norm = delta_norm;
          row.apriori_ok = cert.apriori_ok;
          row.aposteriori_ok = apost.ok;
          row.robcov_ok = std::isfinite(cert.gamma_GK) &&
                          robustness_predicate(delta_norm, cert.gamma_GK);

          SimulationTrace trace = simulate_closed_loop(plant, &k, a.cfg);
          row.stabilized = stabilization_verdict(trace).stabilized;
        } catch (const Error&) {
          // Synthesis or simulation failure: the cell stays uncertified and
          // unstabilized rather than aborting the sweep.
        }
      }
      rows.push_back(row);
      std::printf("ell=%lld tol=%s r=%lld stabilized=%d certified=%d\n", row.ell,
                  num(row.tol).c_str(), row.r, row.stabilized ? 1 : 0,
                  (row.apriori_ok && row.robcov_ok) ? 1 : 0);
    }
  }

  std::ostringstream out;
  out << "# " << kToolVersion << " config=" << hash << "\n";
  out << "ell,tol,r,stabilized,eps,eps_hat,delta_norm,apriori_ok,aposteriori_ok,robcov_ok\n";
  for (const SweepRow& row : rows) {
    out << row.ell << "," << num(row.tol) << "," << row.r << "," << (row.stabilized ? 1 : 0)
        << "," << num(row.eps) << "," << num(row.eps_hat) << "," << num(row.delta_norm) << ","
        << (row.apriori_ok ? 1 : 0) << "," << (row.aposteriori_ok ? 1 : 0) << ","
        << (row.robcov_ok ? 1 : 0) << "\n";
  }
  write_text(a.out, out.str());
  std::printf("wrote %zu sweep rows -> %s\n", rows.size(), a.out.c_str());
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"H-infinity output feedback for constrained flow-like systems"};
  app.set_config("--config", "", "key=value configuration file");
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* cgen = app.add_subcommand("gen", "generate a deterministic benchmark");
  cgen->add_option("--kind", gen.kind, "synthetic | toy");
  cgen->add_option("--out", gen.out, "output directory")->required();
  cgen->add_option("--nv", gen.nv);
  cgen->add_option("--np", gen.np);
  cgen->add_option("--m", gen.m);
  cgen->add_option("--p", gen.p);
  cgen->add_option("--unstable", gen.unstable);
  cgen->add_option("--re", gen.re);
  cgen->add_option("--seed", gen.seed);

  MarginArgs mar;
  CLI::App* cmar = app.add_subcommand("margin", "compute a feasible robustness margin");
  cmar->add_option("--system", mar.system, "pipeline directory")->required();
  cmar->add_option("--out", mar.out, "margin report path (default <system>/margin.json)");
  cmar->add_option("--gamma-max", mar.opts.gamma_max);
  cmar->add_option("--rel-gap", mar.opts.rel_gap);
  cmar->add_option("--safety", mar.opts.safety);
  cmar->add_option("--riccati-tol", mar.opts.riccati.tol);

  SynthArgs syn;
  CLI::App* csyn = app.add_subcommand("synth", "reduce and synthesize the central controller");
  csyn->add_option("--system", syn.system, "pipeline directory")->required();
  csyn->add_option("--out", syn.out, "output directory (default: the system directory)");
  csyn->add_option("--tol", syn.tol, "truncation threshold on the balancing values");
  csyn->add_option("--order", syn.order, "fixed reduced order");
  csyn->add_flag("--aposteriori", syn.aposteriori, "also measure eps_hat / gamma_hat");
  csyn->add_option("--norm-tol", syn.norm_tol);

  SimArgs sim;
  CLI::App* csim = app.add_subcommand("simulate", "closed-loop nonlinear simulation");
  csim->add_option("--plant", sim.plant, "nonlinear plant bundle")->required();
  csim->add_option("--controller", sim.controller, "controller bundle directory");
  csim->add_flag("--open-loop", sim.open_loop, "ignore any controller");
  csim->add_option("--dt", sim.cfg.h);
  csim->add_option("--t-end", sim.cfg.t_end);
  csim->add_option("--amp", sim.cfg.perturb_amp);
  csim->add_option("--window-lo", sim.cfg.perturb_window_lo);
  csim->add_option("--window-hi", sim.cfg.perturb_window_hi);
  csim->add_option("--initial-file", sim.initial_file, "matrix market vector initial state");
  csim->add_option("--trace", sim.trace_path, "trace CSV path");
  csim->add_option("--verdict", sim.verdict_path, "verdict JSON path");
  sim.cfg.t_end = 30.0;

  SweepArgs swp;
  CLI::App* cswp = app.add_subcommand("sweep", "certificate/stabilization grid");
  cswp->add_option("--plant", swp.plant, "nonlinear plant bundle")->required();
  cswp->add_option("--out", swp.out, "sweep CSV path");
  cswp->add_option("--mode", swp.mode, "parameter | picard");
  cswp->add_option("--ells", swp.ells)->delimiter(',');
  cswp->add_option("--tols", swp.tols)->delimiter(',');
  cswp->add_option("--dt", swp.cfg.h);
  cswp->add_option("--t-end", swp.cfg.t_end);
  cswp->add_option("--amp", swp.cfg.perturb_amp);
  cswp->add_option("--norm-tol", swp.norm_tol);
  cswp->add_option("--gamma-max", swp.margin_opts.gamma_max);
  swp.cfg.t_end = 30.0;

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const std::string hash = config_hash(args);
  try {
    if (cgen->parsed()) return cmd_gen(gen);
    if (cmar->parsed()) return cmd_margin(mar, hash);
    if (csyn->parsed()) return cmd_synth(syn, hash);
    if (csim->parsed()) return cmd_simulate(sim, hash);
    if (cswp->parsed()) return cmd_sweep(swp, hash);
  } catch (const InfeasibleAtGammaMax& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 2;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace hinfdae::cli
