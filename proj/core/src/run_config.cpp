#include "thermistor/run_config.hpp"

#include "thermistor/carleman.hpp"
#include "thermistor/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace thermistor {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Simulate: return "simulate";
    case Scenario::Stability: return "stability";
    case Scenario::Observability: return "observability";
    case Scenario::LinearControl: return "linear-control";
    case Scenario::NonlinearControl: return "nonlinear-control";
    case Scenario::LargeTime: return "large-time";
  }
  return "unknown";
}

Scenario scenario_from_string(const std::string& name) {
  if (name == "simulate") return Scenario::Simulate;
  if (name == "stability") return Scenario::Stability;
  if (name == "observability") return Scenario::Observability;
  if (name == "linear-control") return Scenario::LinearControl;
  if (name == "nonlinear-control") return Scenario::NonlinearControl;
  if (name == "large-time") return Scenario::LargeTime;
  throw ValidationError("unknown scenario \"" + name +
                        "\" (expected simulate | stability | observability | linear-control | "
                        "nonlinear-control | large-time)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct KeyValue {
  std::string value;
  int line = 0;
};

std::map<std::string, KeyValue> tokenize(const std::string& text) {
  std::map<std::string, KeyValue> kv;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        std::ostringstream os;
        os << "config line " << lineno << ": malformed section header \"" << t << "\"";
        throw ValidationError(os.str());
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      std::ostringstream os;
      os << "config line " << lineno << ": expected key = value, got \"" << t << "\"";
      throw ValidationError(os.str());
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      std::ostringstream os;
      os << "config line " << lineno << ": empty key";
      throw ValidationError(os.str());
    }
    kv[section.empty() ? key : section + "." + key] = {value, lineno};
  }
  return kv;
}

class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, KeyValue> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(it->first);
    return it->second.value;
  }

  double get_double(const std::string& key, double def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(it->first);
    return parse_double(it->second);
  }

  int get_int(const std::string& key, int def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(it->first);
    const double v = parse_double(it->second);
    if (v != std::floor(v)) fail(it->first, "expected an integer");
    return static_cast<int>(v);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(it->first);
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(it->second.value, &pos);
      if (pos != it->second.value.size()) fail(it->first, "trailing characters");
      return v;
    } catch (const std::exception&) {
      fail(it->first, "expected an unsigned integer");
    }
    return def;
  }

  void reject_unknown() const {
    for (const auto& [key, kvpair] : kv_) {
      if (used_.count(key) == 0) {
        std::ostringstream os;
        os << "config line " << kvpair.line << ": unknown key \"" << key << "\"";
        throw ValidationError(os.str());
      }
    }
  }

 private:
  double parse_double(const KeyValue& kv) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(kv.value, &pos);
      if (pos != kv.value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      std::ostringstream os;
      os << "config line " << kv.line << ": cannot parse number \"" << kv.value << "\"";
      throw ValidationError(os.str());
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) {
    std::ostringstream os;
    os << "config key \"" << key << "\": " << why;
    throw ValidationError(os.str());
  }

  std::map<std::string, KeyValue> kv_;
  std::set<std::string> used_;
};

void require(bool cond, const std::string& key, const std::string& admissible) {
  if (!cond)
    throw ValidationError("config key \"" + key + "\" out of range (admissible: " + admissible + ")");
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  ConfigReader r(tokenize(text));
  RunConfig c;

  const std::string scenario = r.get_string("scenario.name", "");
  if (scenario.empty()) throw ValidationError("missing scenario (set [scenario] name = ...)");
  c.scenario = scenario_from_string(scenario);

  c.x_lo = r.get_double("domain.x_lo", c.x_lo);
  c.x_hi = r.get_double("domain.x_hi", c.x_hi);
  c.T = r.get_double("domain.T", c.T);
  c.omega_a = r.get_double("domain.omega_a", c.omega_a);
  c.omega_b = r.get_double("domain.omega_b", c.omega_b);
  c.x0 = r.get_double("domain.x0", c.x0);
  c.t1_frac = r.get_double("domain.t1_frac", c.t1_frac);
  c.t2_frac = r.get_double("domain.t2_frac", c.t2_frac);

  c.kappa_law = r.get_string("coefficients.kappa_law", c.kappa_law);
  c.kappa_base = r.get_double("coefficients.kappa_base", c.kappa_base);
  c.kappa_amp = r.get_double("coefficients.kappa_amp", c.kappa_amp);
  c.kappa_lower = r.get_double("coefficients.kappa_lower", c.kappa_lower);
  c.kappa_upper = r.get_double("coefficients.kappa_upper", c.kappa_upper);
  c.kappa_deriv_bound = r.get_double("coefficients.kappa_deriv_bound", c.kappa_deriv_bound);
  c.sigma_law = r.get_string("coefficients.sigma_law", c.sigma_law);
  c.sigma_base = r.get_double("coefficients.sigma_base", c.sigma_base);
  c.sigma_amp = r.get_double("coefficients.sigma_amp", c.sigma_amp);
  c.sigma_lower = r.get_double("coefficients.sigma_lower", c.sigma_lower);
  c.sigma_upper = r.get_double("coefficients.sigma_upper", c.sigma_upper);
  c.sigma_deriv_bound = r.get_double("coefficients.sigma_deriv_bound", c.sigma_deriv_bound);

  c.zstar_eps = r.get_double("zstar.epsilon", c.zstar_eps);
  c.zstar_gamma = r.get_double("zstar.gamma", c.zstar_gamma);
  c.zstar_cutoff = r.get_string("zstar.horizon_cutoff", c.zstar_cutoff);
  c.data_scale = r.get_double("initial_data.scale", c.data_scale);
  c.data_shape = r.get_string("initial_data.shape", c.data_shape);

  c.n_cells = r.get_int("discretization.n_cells", c.n_cells);
  c.n_steps = r.get_int("discretization.n_steps", c.n_steps);

  c.lambda = r.get_double("weights.lambda", c.lambda);
  c.s_mult = r.get_double("weights.s_mult", c.s_mult);
  c.tau1 = r.get_double("weights.tau1", c.tau1);
  c.tau2 = r.get_double("weights.tau2", c.tau2);
  c.c0 = r.get_double("weights.c0", c.c0);
  c.range_cap = r.get_double("weights.range_cap", c.range_cap);

  c.cg_tol = r.get_double("solver.cg_tol", c.cg_tol);
  c.liusternik_tol = r.get_double("solver.liusternik_tol", c.liusternik_tol);
  c.max_iter = r.get_int("solver.max_iter", c.max_iter);
  c.smallness_threshold = r.get_double("solver.smallness_threshold", c.smallness_threshold);

  c.observability_samples = r.get_int("observability.n_samples", c.observability_samples);
  c.large_time_t0 = r.get_double("large_time.t0", c.large_time_t0);
  c.large_time_threshold = r.get_double("large_time.threshold", c.large_time_threshold);

  c.output_dir = r.get_string("output.directory", c.output_dir);
  c.seed = r.get_u64("run.seed", c.seed);

  r.reject_unknown();

  require(c.x_hi > c.x_lo, "domain.x_hi", "x_hi > x_lo");
  require(c.T > 0.0, "domain.T", "T > 0");
  require(c.omega_a > c.x_lo && c.omega_a < c.omega_b, "domain.omega_a",
          "x_lo < omega_a < omega_b");
  require(std::abs(c.omega_b - c.x_hi) <= 1e-12, "domain.omega_b",
          "omega must touch the boundary: omega_b = x_hi");
  require(c.t1_frac > 0.0 && c.t1_frac < c.t2_frac && c.t2_frac < 1.0, "domain.t1_frac",
          "0 < t1_frac < t2_frac < 1");
  require(c.n_cells >= 4, "discretization.n_cells", "n_cells >= 4");
  require(c.n_steps >= 2, "discretization.n_steps", "n_steps >= 2");
  for (const std::string& law : {c.kappa_law, c.sigma_law})
    require(law == "tanh" || law == "constant" || law == "linear", "coefficients.*_law",
            "tanh | constant | linear");
  require(c.zstar_gamma > 0.0, "zstar.gamma", "gamma > 0");
  require(c.zstar_cutoff == "auto" || c.zstar_cutoff == "on" || c.zstar_cutoff == "off",
          "zstar.horizon_cutoff", "auto | on | off");
  require(c.data_shape == "sine" || c.data_shape == "zero", "initial_data.shape", "sine | zero");
  require(c.lambda > 0.0, "weights.lambda", "lambda > 0");
  require(c.s_mult >= 1.0, "weights.s_mult", "s_mult >= 1");
  require(std::abs(c.tau1 - c.tau2) < 1.0, "weights.tau1", "|tau1 - tau2| < 1");
  require(c.c0 > 0.0, "weights.c0", "c0 > 0");
  require(c.range_cap > 0.0 && c.range_cap <= kExponentClamp, "weights.range_cap",
          "0 < range_cap <= 600");
  require(c.cg_tol > 0.0 && c.cg_tol < 1.0, "solver.cg_tol", "0 < cg_tol < 1");
  require(c.liusternik_tol > 0.0, "solver.liusternik_tol", "> 0");
  require(c.max_iter >= 1, "solver.max_iter", ">= 1");
  require(c.smallness_threshold > 0.0, "solver.smallness_threshold", "> 0");
  require(c.observability_samples >= 20, "observability.n_samples", ">= 20");
  require(c.large_time_t0 > 0.0, "large_time.t0", "> 0");
  require(c.large_time_threshold > 0.0, "large_time.threshold", "> 0");

  c.tau_star_echo = tau_star(c.tau1, c.tau2);
  return c;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

CoefficientLaw RunConfig::make_law(const std::string& which) const {
  const bool is_kappa = which == "kappa";
  const std::string& law = is_kappa ? kappa_law : sigma_law;
  const double base = is_kappa ? kappa_base : sigma_base;
  const double amp = is_kappa ? kappa_amp : sigma_amp;
  const double lo = is_kappa ? kappa_lower : sigma_lower;
  const double hi = is_kappa ? kappa_upper : sigma_upper;
  const double m = is_kappa ? kappa_deriv_bound : sigma_deriv_bound;
  if (law == "tanh") return CoefficientLaw::tanh_law(base, amp, lo, hi, m);
  if (law == "constant") {
    CoefficientLaw c = CoefficientLaw::constant(base);
    c.lower_bound = lo;
    c.upper_bound = hi;
    c.deriv_bound = m;
    return c;
  }
  return CoefficientLaw::linear(amp, base, lo, hi, m);
}

ProblemData RunConfig::to_problem_data() const {
  ProblemData d;
  d.x_lo = x_lo;
  d.x_hi = x_hi;
  d.T = T;
  d.omega_a = omega_a;
  d.omega_b = omega_b;
  d.kappa = make_law("kappa");
  d.sigma = make_law("sigma");
  const bool control_scenario = scenario == Scenario::LinearControl ||
                                scenario == Scenario::NonlinearControl ||
                                scenario == Scenario::LargeTime;
  const bool cutoff = zstar_cutoff == "on" || (zstar_cutoff == "auto" && control_scenario);
  d.zstar = cutoff ? BoundaryPotential::separable_quadratic_cutoff(zstar_eps, zstar_gamma, T)
                   : BoundaryPotential::separable_quadratic(zstar_eps, zstar_gamma);
  d.x0 = x0;
  d.t1 = t1_frac * T;
  d.t2 = t2_frac * T;
  const double lo = x_lo, len = x_hi - x_lo, scale = data_scale;
  if (data_shape == "zero") {
    d.y0 = [](double) { return 0.0; };
    d.p0 = [](double) { return 0.0; };
  } else {
    d.y0 = [lo, len, scale](double x) { return scale * std::sin(M_PI * (x - lo) / len); };
    d.p0 = [lo, len, scale](double x) { return scale * std::sin(2.0 * M_PI * (x - lo) / len); };
  }
  d.f = [](double, double) { return 0.0; };
  d.g = [](double, double) { return 0.0; };
  return d;
}

}  // namespace thermistor
