#include "stiv/cli.hpp"

#include "stiv/errors.hpp"
#include "stiv/estimator.hpp"
#include "stiv/inference.hpp"
#include "stiv/model.hpp"
#include "stiv/nonvalid.hpp"
#include "stiv/presets.hpp"
#include "stiv/sensitivity.hpp"
#include "stiv/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#ifndef STIV_VERSION
#define STIV_VERSION "0.0.0"
#endif

namespace stiv::cli {

using Json = nlohmann::ordered_json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class LogLevel { quiet, info, debug };

LogLevel log_level() {
  const char* v = std::getenv("STIV_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::quiet;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::info;
}

// --- JSON encoding ---

Json num(double x) {
  if (std::isnan(x)) return nullptr;
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

Json vec(const VectorXd& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

Json one_based(const IndexSet& s) {
  Json a = Json::array();
  for (int k : s) a.push_back(k + 1);
  return a;
}

Json opt_num(const std::optional<double>& x) { return x ? num(*x) : Json(nullptr); }

Json solver_info(const conic::SolveResult& r) {
  return Json{{"status", conic::to_string(r.status)}, {"iterations", r.iterations},
              {"objective", num(r.objective)},     {"dual_objective", num(r.dual_objective)},
              {"gap", num(r.gap)},                 {"residual", num(r.residual)}};
}

Json sens_json(const CertifiedSensitivities& s) {
  Json j;
  j["source"] = s.source.kind == SensitivitySource::Kind::direct ? "direct" : "certificate";
  if (s.source.kind == SensitivitySource::Kind::direct)
    j["J"] = one_based(s.source.J);
  else
    j["s"] = s.source.s;
  j["cone_constant"] = num(s.cone.constant());
  j["coord"] = vec(s.coord);
  j["block_endo"] = num(s.block_endo);
  j["block_exo"] = num(s.block_exo);
  j["kappa1"] = num(s.kappa1);
  j["provenance"] = {{"block_endo", s.provenance_endo},
                     {"block_exo", s.provenance_exo},
                     {"kappa1", s.provenance_kappa1}};
  j["lp_count"] = s.lp_count;
  return j;
}

// --- argument parsing helpers ---

double parse_real(const std::string& s, const char* what) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string(what) + ": cannot read '" + s + "' as a number");
  }
}

int parse_int(const std::string& s, const char* what) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string(what) + ": cannot read '" + s + "' as an integer");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

// "none", "" or a comma list of 1-based indices; returned sorted, 0-based.
IndexSet parse_index_list(const std::string& s, Index bound, const char* what) {
  IndexSet out;
  if (s.empty() || s == "none") return out;
  for (const auto& tok : split(s, ',')) {
    const int k = parse_int(tok, what);
    if (k < 1 || k > bound)
      throw ConfigError(std::string(what) + ": index " + tok + " outside 1.." + std::to_string(bound));
    out.push_back(k - 1);
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end())
    throw ConfigError(std::string(what) + ": repeated index");
  return out;
}

std::vector<int> parse_endo(const std::optional<std::string>& s) {
  if (!s)
    throw ValidationError("--endo is required: 1-based indices of the endogenous regressors, or 'none'");
  std::vector<int> out;
  if (*s == "none") return out;
  for (const auto& tok : split(*s, ',')) out.push_back(parse_int(tok, "--endo"));
  if (out.empty()) throw ValidationError("--endo: empty list (use 'none' for no endogenous regressor)");
  return out;
}

std::map<int, int> parse_exo_map(const std::string& s) {
  std::map<int, int> m;
  for (const auto& tok : split(s, ',')) {
    const auto colon = tok.find(':');
    if (colon == std::string::npos) throw ConfigError("--exo-map: expected pairs x:z, got '" + tok + "'");
    const int x = parse_int(tok.substr(0, colon), "--exo-map");
    const int z = parse_int(tok.substr(colon + 1), "--exo-map");
    if (!m.emplace(x, z).second) throw ConfigError("--exo-map: regressor listed twice");
  }
  return m;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// --- options ---

struct Common {
  std::string data;
  std::optional<std::string> endo;
  std::string exo_map;
  double c = 0.1;
  double alpha = 0.05;
  std::string r_mode = "practical";
  double A = kNaN;
  double delta = kNaN;
  double dn = kNaN;
  std::string out;
  int threads = 1;
  int cap = 12;
  std::uint64_t seed = 0;
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iter = 120;

  RateConfig rate() const {
    RateConfig r;
    r.alpha = alpha;
    r.mode = r_mode == "full" ? RateMode::full : RateMode::practical;
    if (!std::isnan(A)) r.A = A;
    if (!std::isnan(delta)) r.delta = delta;
    if (!std::isnan(dn)) r.d_n_delta = dn;
    return r;
  }
  conic::Tolerances tol() const { return {feas_tol, gap_tol, max_iter}; }
  SensitivityOptions sens(Kappa1Method m = Kappa1Method::interpolation) const {
    SensitivityOptions o;
    o.enumeration_cap = cap;
    o.kappa1 = m;
    o.threads = threads;
    o.tol = tol();
    return o;
  }
};

struct Options {
  Common com;
  // estimate
  std::string variant = "stiv";
  double sigma_star = kNaN;
  double c_sql = 1.1;
  // sensitivity
  std::string method = "certificate";
  int k = 0;
  std::string J;
  int s = 5;
  std::string J0;
  std::string p;
  bool enlarged = false;
  std::string kappa1 = "interpolation";
  // ci / select
  std::string Jhat;
  double floor = 1e-8;
  std::string ci_variant = "standard";
  std::string estimator = "stiv";
  // nv
  double c_nv = 0.1;
  double alpha1 = kNaN;
  std::string s1 = "auto";
  std::string pilot = "stiv";
  std::string pilot_file;
  std::string bhat = "auto";
  // simulate
  std::string preset;
  long reps = 0;
  std::string format = "json";
  bool runs = false;
};

void add_common(CLI::App* sub, Common& c, bool data) {
  if (data) {
    sub->add_option("data", c.data, "CSV file with columns y, x1..xK, z1..zL[, zbar1..]")->required();
    sub->add_option("--endo", c.endo, "endogenous regressors, 1-based comma list or 'none'");
    sub->add_option("--exo-map", c.exo_map, "exogenous regressor to instrument map, e.g. 2:26,3:27");
    sub->add_option("--r-mode", c.r_mode, "rate formula")->check(CLI::IsMember({"practical", "full"}));
    sub->add_option("--A", c.A, "full mode: constant A");
    sub->add_option("--delta", c.delta, "full mode: delta");
    sub->add_option("--dn", c.dn, "full mode: d_{n,delta}");
    sub->add_option("--cap", c.cap, "sign-enumeration cap for block sensitivities");
  }
  sub->add_option("--c", c.c, "cone constant c in (0,1)");
  sub->add_option("--alpha", c.alpha, "confidence level parameter");
  sub->add_option("--out", c.out, "write the JSON document here instead of stdout");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--feas-tol", c.feas_tol, "solver feasibility tolerance");
  sub->add_option("--gap-tol", c.gap_tol, "solver duality-gap tolerance");
  sub->add_option("--max-iter", c.max_iter, "solver iteration limit");
}

// --- loaded inputs ---

struct Context {
  Json inputs = Json::array();

  std::string read_input(const std::string& path) {
    std::string bytes = read_bytes(path);
    inputs.push_back({{"path", path}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
    return bytes;
  }

  Dataset load(const Common& c) {
    const std::vector<int> endo = parse_endo(c.endo);
    InstrumentSpec spec;
    spec.exogenous_map = parse_exo_map(c.exo_map);
    std::istringstream is(read_input(c.data));
    return load_dataset(is, endo, spec);
  }
};

Json exo_map_json(const Dataset& d) {
  Json m = Json::object();
  for (Index k = 0; k < d.K(); ++k)
    if (d.instrument_of(static_cast<int>(k)) >= 0)
      m["x" + std::to_string(k + 1)] = "z" + std::to_string(d.instrument_of(static_cast<int>(k)) + 1);
  return m;
}

Json fit_json(const StivFit& f, double alpha) {
  Json j;
  j["beta"] = vec(f.beta);
  j["sigma"] = opt_num(f.sigma);
  j["qhat"] = num(f.q_hat);
  j["objective"] = num(f.objective);
  j["residuals"] = {{"iv", num(f.iv_residual)}, {"q", num(f.q_residual)}};
  j["r"] = num(f.r);
  j["alpha"] = num(alpha);
  j["solver"] = solver_info(f.solve);
  return j;
}

// --- subcommands ---

Json cmd_inspect(const Options& o, Context& ctx) {
  const Dataset d = ctx.load(o.com);
  const ScaledDesign sd = scale_design(d);
  Json j;
  j["n"] = d.n();
  j["K"] = d.K();
  j["L"] = d.L();
  j["L1"] = d.L1();
  j["endo"] = one_based(d.endo());
  j["exogenous_map"] = exo_map_json(d);
  j["x_star"] = vec(sd.x_star);
  j["z_star"] = vec(sd.z_star);
  j["zbar_star"] = opt_num(sd.zbar_star);
  j["psi_max_abs"] = num(sd.Psi.cwiseAbs().maxCoeff());
  const Rate r = rate_r(d.n(), static_cast<double>(d.L()), o.com.rate());
  j["r"] = num(r.r);
  j["alpha"] = num(r.alpha);
  j["side_condition_ok"] = r.side_condition_ok;
  return j;
}

struct Estimated {
  StivFit fit;
  ScaledDesign design;
  IndexSet endo;
  double r = 0.0;
  double alpha = 0.0;
  std::optional<TwoStageFit> two_stage;
};

Estimated estimate(const Dataset& d, const Options& o, const std::string& variant) {
  const Common& c = o.com;
  Estimated e;
  StivConfig cfg;
  cfg.c = c.c;
  cfg.tol = c.tol();
  if (variant == "two-stage") {
    SqrtLassoConfig sql;
    sql.alpha = c.alpha;
    sql.c_sql = o.c_sql;
    sql.tol = c.tol();
    TwoStageFit ts = stiv_two_stage(d, cfg, c.rate(), sql);
    e.fit = ts.fit;
    e.design = ts.design;
    e.endo = ts.projected.endo();
    e.r = ts.rate.r;
    e.alpha = ts.rate.alpha;
    e.two_stage = std::move(ts);
    return e;
  }
  e.design = scale_design(d);
  e.endo = d.endo();
  const Rate r = rate_r(d.n(), static_cast<double>(d.L()), c.rate());
  e.r = r.r;
  e.alpha = r.alpha;
  if (variant == "nonpivotal") {
    if (std::isnan(o.sigma_star)) throw ConfigError("--variant nonpivotal needs --sigma-star");
    e.fit = stiv_nonpivotal(d, e.design, o.sigma_star, e.r, c.tol());
  } else {
    cfg.r = e.r;
    e.fit = stiv_fit(d, e.design, cfg);
  }
  return e;
}

Json cmd_estimate(const Options& o, Context& ctx) {
  const Dataset d = ctx.load(o.com);
  const Estimated e = estimate(d, o, o.variant);
  Json j{{"variant", o.variant}};
  j.update(fit_json(e.fit, e.alpha));
  if (e.two_stage) {
    Json fs = Json::array();
    for (size_t i = 0; i < e.two_stage->first_stage.size(); ++i)
      fs.push_back({{"regressor", d.endo()[i] + 1}, {"zeta", vec(e.two_stage->first_stage[i])}});
    j["first_stage"] = fs;
    j["instruments"] = e.two_stage->projected.L();
  }
  return j;
}

Kappa1Method kappa1_method(const std::string& s) {
  return s == "block" ? Kappa1Method::block : Kappa1Method::interpolation;
}

Json report_json(const SensitivityReport& r, const std::string& method) {
  Json j;
  j["value"] = num(r.value);
  j["method"] = method;
  j["kind"] = to_string(r.kind);
  j["provenance"] = r.provenance;
  j["lp_count"] = r.lp_count;
  Json w = Json::array();
  for (int v : r.witnesses) w.push_back(v < 0 ? Json(nullptr) : Json(v + 1));
  j["witnesses"] = w;
  return j;
}

Json cmd_sensitivity(const Options& o, Context& ctx) {
  const Dataset d = ctx.load(o.com);
  const ScaledDesign sd = scale_design(d);
  const ConeSpec cone{o.com.c, o.enlarged};
  const SensitivityOptions opt = o.com.sens(kappa1_method(o.kappa1));
  const IndexSet J = parse_index_list(o.J, d.K(), "--J");
  const double p = o.p.empty() ? kNaN : parse_real(o.p, "--p");
  if (o.k != 0 && (o.k < 1 || o.k > d.K()))
    throw ConfigError("--k: index outside 1.." + std::to_string(d.K()));
  const int k = o.k - 1;

  if (o.method == "coherence") {
    if (o.k != 0 || !o.J0.empty()) throw ConfigError("--method coherence takes --J and --p only");
    return report_json(coherence_bound(sd.Psi, J, std::isnan(p) ? 1.0 : p, cone), o.method);
  }
  const bool direct = o.method == "direct";
  const SensitivitySource src = direct ? SensitivitySource::direct(J) : SensitivitySource::certificate(o.s);
  if (!direct && !o.J.empty()) throw ConfigError("--J applies to --method direct and coherence; use --s");
  if (k >= 0)
    return report_json(direct ? kappa_coord(sd.Psi, k, J, cone, opt) : kappa_coord_cert(sd.Psi, k, o.s, cone, opt),
                       o.method);
  if (!o.J0.empty()) {
    const IndexSet J0 = parse_index_list(o.J0, d.K(), "--J0");
    return report_json(direct ? kappa_block(sd.Psi, J0, J, cone, opt)
                              : kappa_block_cert(sd.Psi, J0, o.s, cone, opt),
                       o.method);
  }
  if (!std::isnan(p)) return report_json(kappa_lp_norm_bounds(sd.Psi, p, src, cone, opt), o.method);
  Json j = sens_json(certify(sd.Psi, d.endo(), src, cone, opt));
  j["method"] = o.method;
  return j;
}

ThresholdVariant threshold_variant(const std::string& s) {
  return s == "single-endo-remark" ? ThresholdVariant::single_endo_remark : ThresholdVariant::standard;
}

Json coordinates(const VectorXd& beta, const ConfidenceReport* ci, const VectorXd* omega,
                 const Selection* sel) {
  Json a = Json::array();
  for (Index k = 0; k < beta.size(); ++k) {
    Json c{{"name", "x" + std::to_string(k + 1)}, {"beta", num(beta(k))}};
    if (ci) {
      c["half_width"] = num(ci->half_width(k));
      c["lower"] = num(ci->lower(k));
      c["upper"] = num(ci->upper(k));
      c["finite"] = static_cast<bool>(ci->finite[static_cast<size_t>(k)]);
    }
    if (omega) c["omega"] = num((*omega)(k));
    if (sel) {
      c["selected"] = sel->signs(k) != 0;
      c["sign"] = sel->signs(k);
    }
    a.push_back(c);
  }
  return a;
}

Json cmd_ci(const Options& o, Context& ctx, bool select_only) {
  const Dataset d = ctx.load(o.com);
  const Estimated e = estimate(d, o, o.estimator == "two-stage" ? "two-stage" : "stiv");
  const ConeSpec cone{o.com.c, false};
  const SensitivityOptions opt = o.com.sens(kappa1_method(o.kappa1));
  const ThresholdVariant variant = threshold_variant(o.ci_variant);

  SensitivitySource src = SensitivitySource::certificate(o.s);
  if (!o.Jhat.empty()) {
    if (select_only) throw ConfigError("select uses sparsity certificates; --Jhat does not apply");
    src = SensitivitySource::direct(o.Jhat == "auto" ? estimated_support(e.fit.beta, o.floor)
                                                     : parse_index_list(o.Jhat, d.K(), "--Jhat"));
  }
  const CertifiedSensitivities sens = certify(e.design.Psi, e.endo, src, cone, opt, variant);
  const ConfidenceReport ci = confidence_intervals(e.fit, e.design, sens, e.r);

  Json j{{"estimator", o.estimator}, {"variant", o.ci_variant}};
  j["sigma"] = opt_num(e.fit.sigma);
  j["r"] = num(e.r);
  j["alpha"] = num(e.alpha);
  j["slack"] = num(ci.slack);
  if (src.kind == SensitivitySource::Kind::certificate) {
    const VectorXd omega = thresholds(e.fit, e.design, sens, e.r);
    const Selection sel = threshold_select(e.fit.beta, omega);
    j["coordinates"] = select_only ? coordinates(e.fit.beta, nullptr, &omega, &sel)
                                   : coordinates(e.fit.beta, &ci, &omega, &sel);
    j["selected"] = one_based(sel.support);
  } else {
    j["Jhat"] = one_based(src.J);
    if (src.J.empty())
      j["warnings"] = {"Jhat is empty: the cone C_J is {0} and the direct intervals have zero width"};
    j["coordinates"] = coordinates(e.fit.beta, &ci, nullptr, nullptr);
  }
  j["sensitivities"] = sens_json(sens);
  return j;
}

double parse_number_json(const Json& v, const char* what) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_real(v.get<std::string>(), what);
  throw ParseError(std::string("pilot file: ") + what + " must be a number");
}

StivFit read_pilot(const std::string& bytes, Index K) {
  Json doc;
  try {
    doc = Json::parse(bytes);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("pilot file is not valid JSON: ") + e.what());
  }
  const Json& src = doc.contains("result") ? doc["result"] : doc;
  if (!src.contains("beta") || !src["beta"].is_array()) throw ParseError("pilot file: missing array 'beta'");
  StivFit f;
  f.beta.resize(static_cast<Index>(src["beta"].size()));
  for (size_t i = 0; i < src["beta"].size(); ++i)
    f.beta(static_cast<Index>(i)) = parse_number_json(src["beta"][i], "beta");
  if (f.beta.size() != K)
    throw DimensionError("pilot file: beta has " + std::to_string(f.beta.size()) + " entries, data has K = " +
                         std::to_string(K));
  if (src.contains("sigma") && !src["sigma"].is_null()) f.sigma = parse_number_json(src["sigma"], "sigma");
  return f;
}

Json cmd_nv(const Options& o, Context& ctx) {
  const Dataset d = ctx.load(o.com);
  NvPipelineConfig cfg;
  cfg.c = o.com.c;
  cfg.c_nv = o.c_nv;
  cfg.rate = o.com.rate();
  if (!std::isnan(o.alpha1)) {
    RateConfig r1 = cfg.rate;
    r1.alpha = o.alpha1;
    cfg.rate1 = r1;
  }
  if (o.bhat != "auto") cfg.b_hat = parse_real(o.bhat, "--bhat");
  cfg.s = o.s;
  if (o.s1 != "auto") cfg.s1 = parse_int(o.s1, "--s1");
  cfg.sens = o.com.sens(kappa1_method(o.kappa1));
  cfg.tol = o.com.tol();

  NvPipelineResult res;
  if (o.pilot == "file") {
    if (o.pilot_file.empty()) throw ConfigError("--pilot file needs --pilot-file");
    res = nv_pipeline(d, cfg, read_pilot(ctx.read_input(o.pilot_file), d.K()));
  } else {
    res = nv_pipeline(d, cfg);
  }
  Json j;
  j["theta"] = vec(res.fit.theta);
  j["sigma1"] = num(res.fit.sigma1);
  j["bhat"] = num(res.b_hat);
  j["budget"] = num(res.fit.budget);
  j["omega"] = num(res.selection.omega);
  j["flagged_instruments"] = Json::array();
  for (int l : res.selection.selection.support) j["flagged_instruments"].push_back("zbar" + std::to_string(l + 1));
  Json signs = Json::array();
  for (Index l = 0; l < res.selection.selection.signs.size(); ++l) signs.push_back(res.selection.selection.signs(l));
  j["signs"] = signs;
  j["s1"] = res.selection.s1;
  j["rounds"] = res.selection.rounds;
  j["r"] = num(res.r);
  j["r1"] = num(res.r1);
  j["zbar_star"] = num(res.fit.moments.zbar_star);
  j["residuals"] = {{"iv", num(res.fit.iv_residual)}, {"f", num(res.fit.f_residual)}};
  j["pilot"] = {{"source", o.pilot}, {"beta", vec(res.pilot.beta)}, {"sigma", opt_num(res.pilot.sigma)}};
  j["solver"] = solver_info(res.fit.solve);
  return j;
}

struct SimOutput {
  Json result;
  std::string csv;
};

SimOutput cmd_simulate(const Options& o, std::ostream& err, LogLevel lvl) {
  PipelineSettings st;
  st.c = o.com.c;
  st.rate.alpha = o.com.alpha;
  if (!std::isnan(o.sigma_star)) st.sigma_star = o.sigma_star;
  st.s = o.s;
  st.sql.alpha = o.com.alpha;
  st.sql.c_sql = o.c_sql;
  st.sql.tol = o.com.tol();
  st.sens.enumeration_cap = o.com.cap;
  st.sens.tol = o.com.tol();
  st.tol = o.com.tol();
  const Preset p = make_preset(o.preset, st);
  if (o.reps < 0) throw ConfigError("--reps must be >= 0");
  const Index reps = o.reps == 0 ? p.default_reps : o.reps;
  if (lvl != LogLevel::quiet)
    err << "stiv: simulate " << p.name << ": " << reps << " replications, " << o.com.threads << " thread(s)\n";
  const McSummary s = monte_carlo(p.dgp, p.run, reps, o.com.seed, o.com.threads);

  Json j;
  j["preset"] = p.name;
  j["description"] = p.description;
  j["n"] = p.dgp.n;
  j["K"] = p.dgp.K;
  j["L"] = p.dgp.L;
  j["reps"] = s.reps;
  j["failures"] = s.failures;
  j["base_seed"] = o.com.seed;
  Json beta = Json::array();
  for (Index k = 0; k < s.beta_pct.rows(); ++k)
    beta.push_back({{"name", "x" + std::to_string(k + 1)},
                    {"p5", num(s.beta_pct(k, 0))},
                    {"p50", num(s.beta_pct(k, 1))},
                    {"p95", num(s.beta_pct(k, 2))}});
  j["beta_percentiles"] = beta;
  j["sigma_percentiles"] =
      s.sigma_pct ? Json{{"p5", num((*s.sigma_pct)(0))}, {"p50", num((*s.sigma_pct)(1))}, {"p95", num((*s.sigma_pct)(2))}}
                  : Json(nullptr);
  j["support_recovery"] = opt_num(s.support_recovery);
  j["ci_coverage"] = opt_num(s.ci_coverage);

  // percentiles of the pipeline-specific scalars
  Json extra = Json::object();
  std::vector<std::array<double, 3>> extra_pct;
  for (size_t e = 0; e < p.extra_names.size(); ++e) {
    std::vector<double> v;
    for (const auto& r : s.runs)
      if (e < r.extra.size()) v.push_back(r.extra[e]);
    if (v.empty()) continue;
    std::array<double, 3> q{percentile(v, 0.05), percentile(v, 0.5), percentile(v, 0.95)};
    extra_pct.push_back(q);
    extra[p.extra_names[e]] = {{"p5", num(q[0])}, {"p50", num(q[1])}, {"p95", num(q[2])}};
  }
  j["extra_percentiles"] = extra;
  j["errors"] = s.errors;
  if (o.runs) {
    Json runs = Json::array();
    for (const auto& r : s.runs) {
      Json x{{"beta", vec(r.beta)}, {"sigma", opt_num(r.sigma)}};
      if (r.support_exact) x["support_exact"] = *r.support_exact;
      if (r.covered) x["covered"] = *r.covered;
      Json ex = Json::object();
      for (size_t e = 0; e < r.extra.size() && e < p.extra_names.size(); ++e) ex[p.extra_names[e]] = num(r.extra[e]);
      x["extra"] = ex;
      runs.push_back(x);
    }
    j["runs"] = runs;
  }

  SimOutput out{j, {}};
  if (o.format == "csv") {
    auto cell = [](double x) {
      if (std::isinf(x)) return std::string(x > 0 ? "inf" : "-inf");
      std::ostringstream os;
      os << std::setprecision(17) << x;
      return os.str();
    };
    std::ostringstream os;
    os << "quantity,p5,p50,p95,value\n";
    for (Index k = 0; k < s.beta_pct.rows(); ++k)
      os << "beta" << k + 1 << ',' << cell(s.beta_pct(k, 0)) << ',' << cell(s.beta_pct(k, 1)) << ','
         << cell(s.beta_pct(k, 2)) << ",\n";
    if (s.sigma_pct)
      os << "sigma," << cell((*s.sigma_pct)(0)) << ',' << cell((*s.sigma_pct)(1)) << ',' << cell((*s.sigma_pct)(2))
         << ",\n";
    size_t i = 0;
    for (const auto& [name, _] : extra.items()) {
      const auto& q = extra_pct[i++];
      os << name << ',' << cell(q[0]) << ',' << cell(q[1]) << ',' << cell(q[2]) << ",\n";
    }
    if (s.support_recovery) os << "support_recovery,,,," << cell(*s.support_recovery) << '\n';
    if (s.ci_coverage) os << "ci_coverage,,,," << cell(*s.ci_coverage) << '\n';
    os << "reps,,,," << s.reps << '\n' << "failures,,,," << s.failures << '\n';
    out.csv = os.str();
  }
  return out;
}

// Every option of the subcommand with its parsed or default value.
Json flag_set(const CLI::App* sub) {
  Json f = Json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_name() == "--help") continue;
    const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (opt->count() > 0) {
      const auto& res = opt->results();
      f[name] = opt->get_expected_max() == 0 ? Json(true) : (res.size() == 1 ? Json(res.front()) : Json(res));
    } else {
      f[name] = opt->get_expected_max() == 0 ? Json(false) : Json(opt->get_default_str());
    }
  }
  return f;
}

void write_out(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path);
  f << text;
  if (!f) throw ValidationError("error writing " + path);
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  const LogLevel lvl = log_level();

  CLI::App app{"Self-tuned instrumental-variables estimation and inference", "stiv"};
  app.set_version_flag("--version", STIV_VERSION);
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  Options o;

  auto* inspect = app.add_subcommand("inspect", "dimensions, scalings, exogenous map and r");
  add_common(inspect, o.com, true);

  auto* est = app.add_subcommand("estimate", "STIV point estimate");
  add_common(est, o.com, true);
  est->add_option("--variant", o.variant)->check(CLI::IsMember({"stiv", "nonpivotal", "two-stage"}));
  est->add_option("--sigma-star", o.sigma_star, "noise level for the nonpivotal variant");
  est->add_option("--c-sql", o.c_sql, "square-root Lasso penalty constant (two-stage)");

  auto* sens = app.add_subcommand("sensitivity", "cone-invertibility sensitivities of Psi");
  add_common(sens, o.com, true);
  sens->add_option("--method", o.method)->check(CLI::IsMember({"direct", "certificate", "coherence"}));
  sens->add_option("--k", o.k, "coordinate (1-based) for kappa*_k");
  sens->add_option("--J", o.J, "support J, comma list (direct, coherence)");
  sens->add_option("--s", o.s, "sparsity certificate level")->check(CLI::PositiveNumber);
  sens->add_option("--J0", o.J0, "block J0, comma list");
  sens->add_option("--p", o.p, "l_p sensitivity, p >= 1 or inf");
  sens->add_flag("--enlarged", o.enlarged, "use the enlarged cone");
  sens->add_option("--kappa1", o.kappa1)->check(CLI::IsMember({"interpolation", "block"}));

  auto* ci = app.add_subcommand("ci", "simultaneous confidence intervals");
  auto* sel = app.add_subcommand("select", "thresholded estimate and selected regressors");
  for (auto* sub : {ci, sel}) {
    add_common(sub, o.com, true);
    sub->add_option("--s", o.s, "sparsity certificate level")->check(CLI::PositiveNumber);
    sub->add_option("--variant", o.ci_variant)->check(CLI::IsMember({"standard", "single-endo-remark"}));
    sub->add_option("--estimator", o.estimator)->check(CLI::IsMember({"stiv", "two-stage"}));
    sub->add_option("--kappa1", o.kappa1)->check(CLI::IsMember({"interpolation", "block"}));
    sub->add_option("--c-sql", o.c_sql, "square-root Lasso penalty constant (two-stage)");
  }
  ci->add_option("--Jhat", o.Jhat, "'auto' (support of beta) or comma list; direct sensitivities on that set");
  ci->add_option("--floor", o.floor, "support floor for --Jhat auto");

  auto* nv = app.add_subcommand("nv", "detection of non-valid instruments zbar");
  add_common(nv, o.com, true);
  nv->add_option("--c-nv", o.c_nv, "cone constant of the STIV-NV fit");
  nv->add_option("--alpha1", o.alpha1, "alpha for r1 (defaults to --alpha)");
  nv->add_option("--s", o.s, "sparsity certificate for the pilot")->check(CLI::PositiveNumber);
  nv->add_option("--s1", o.s1, "'auto' or the number of non-valid instruments");
  nv->add_option("--pilot", o.pilot)->check(CLI::IsMember({"stiv", "file"}));
  nv->add_option("--pilot-file", o.pilot_file, "JSON with beta and sigma (estimate output accepted)");
  nv->add_option("--bhat", o.bhat, "'auto' or a value for b_hat (inf allowed)");
  nv->add_option("--kappa1", o.kappa1)->check(CLI::IsMember({"interpolation", "block"}));

  auto* sim = app.add_subcommand("simulate", "Monte Carlo presets");
  add_common(sim, o.com, false);
  sim->add_option("--preset", o.preset)->required()->check(CLI::IsMember(preset_names()));
  sim->add_option("--reps", o.reps, "replications (0 = preset default)");
  sim->add_option("--format", o.format)->check(CLI::IsMember({"json", "csv"}));
  sim->add_option("--s", o.s, "sparsity certificate level")->check(CLI::PositiveNumber);
  sim->add_option("--sigma-star", o.sigma_star, "noise level for table4");
  sim->add_option("--c-sql", o.c_sql, "square-root Lasso penalty constant (table7)");
  sim->add_option("--cap", o.com.cap, "sign-enumeration cap for block sensitivities");
  sim->add_flag("--runs", o.runs, "include every replication in the output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  Context ctx;
  try {
    Json result;
    std::string csv;
    if (command == "inspect")
      result = cmd_inspect(o, ctx);
    else if (command == "estimate")
      result = cmd_estimate(o, ctx);
    else if (command == "sensitivity")
      result = cmd_sensitivity(o, ctx);
    else if (command == "ci")
      result = cmd_ci(o, ctx, false);
    else if (command == "select")
      result = cmd_ci(o, ctx, true);
    else if (command == "nv")
      result = cmd_nv(o, ctx);
    else {
      SimOutput s = cmd_simulate(o, err, lvl);
      result = std::move(s.result);
      csv = std::move(s.csv);
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Json argv_json = Json::array();
    for (int i = 0; i < argc; ++i) argv_json.push_back(argv[i]);
    Json manifest;
    manifest["command"] = command;
    manifest["argv"] = argv_json;
    manifest["flags"] = flag_set(sub);
    manifest["inputs"] = ctx.inputs;
    manifest["version"] = STIV_VERSION;
    manifest["seed"] = o.com.seed;
    manifest["timings"] = {{"started_utc", started}, {"wall_seconds", wall}};

    if (!csv.empty()) {
      write_out(o.com.out, "# manifest: " + manifest.dump() + "\n" + csv, out);
    } else {
      Json doc{{"schema", "stiv-cli/1"}, {"command", command}, {"result", result}, {"manifest", manifest}};
      write_out(o.com.out, doc.dump(2) + "\n", out);
    }
    if (lvl == LogLevel::debug) err << "stiv: " << command << " finished in " << wall << " s\n";
    if (lvl != LogLevel::quiet && !o.com.out.empty()) err << "stiv: wrote " << o.com.out << '\n';
    return exit_ok;
  } catch (const ParseError& e) {
    err << "stiv: input error: " << e.what();
    if (e.row() >= 0) err << " (row " << e.row() << (e.column() >= 0 ? ", column " + std::to_string(e.column()) : "") << ")";
    err << '\n';
    return exit_validation;
  } catch (const ValidationError& e) {
    err << "stiv: invalid input: " << e.what() << '\n';
    return exit_validation;
  } catch (const SolverError& e) {
    err << "stiv: solver failure: " << e.what() << '\n';
    return exit_solver;
  } catch (const Error& e) {
    err << "stiv: numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::exception& e) {
    err << "stiv: internal error: " << e.what() << '\n';
    return exit_internal;
  }
}

} // namespace stiv::cli
