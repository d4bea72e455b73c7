#include "declab/scenario.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "declab/dynamics.hpp"
#include "declab/einselection.hpp"
#include "declab/envariance.hpp"
#include "declab/errors.hpp"
#include "declab/histories.hpp"
#include "declab/measurement.hpp"
#include "declab/parallel.hpp"
#include "declab/spinbath.hpp"
#include "declab/textio.hpp"

namespace declab {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kScenarios{"spinbath", "sieve", "envariance", "histories", "grw", "bohm", "measurement"};

// ---------------------------------------------------------------------------
// YAML -> JSON

Json scalar_to_json(const YAML::Node& node) {
  const std::string& text = node.Scalar();
  if (node.Tag() == "!") return text;  // quoted
  if (text == "~" || text == "null" || text == "Null" || text == "NULL") return nullptr;
  if (text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "false" || text == "False" || text == "FALSE") return false;
  if (!text.empty() && (std::isdigit(static_cast<unsigned char>(text[0])) || text[0] == '-' || text[0] == '+' || text[0] == '.')) {
    std::size_t pos = 0;
    try {
      if (text.find_first_of(".eEnN") == std::string::npos) {
        if (text[0] == '-') {
          const long long v = std::stoll(text, &pos);
          if (pos == text.size()) return v;
        } else {
          const unsigned long long v = std::stoull(text, &pos);
          if (pos == text.size()) return v;
        }
      }
      pos = 0;
      const double d = std::stod(text, &pos);
      if (pos == text.size()) return d;
    } catch (const std::exception&) {
    }
  }
  return text;
}

Json node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      Json arr = Json::array();
      for (const auto& item : node) arr.push_back(node_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      Json obj = Json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = node_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// schema checks

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

class Checker {
 public:
  Checker(const Json& table, std::string prefix, std::vector<Violation>& out)
      : table_(table), prefix_(std::move(prefix)), out_(out) {}

  bool has(const std::string& key) const { return table_.contains(key) && !table_.at(key).is_null(); }
  const Json& at(const std::string& key) const { return table_.at(key); }
  std::string path(const std::string& key) const { return join(prefix_, key); }
  void fail(const std::string& key, const std::string& msg) const { out_.push_back({path(key), msg}); }
  void fail_at(const std::string& full_path, const std::string& msg) const { out_.push_back({full_path, msg}); }

  bool present(const std::string& key, bool required) const {
    if (has(key)) return true;
    if (required) fail(key, "required");
    return false;
  }

  void integer(const std::string& key, bool required, long long lo, long long hi) const {
    if (!present(key, required)) return;
    const auto& v = at(key);
    if (!v.is_number_integer()) return fail(key, "expected an integer");
    const bool above = v.is_number_unsigned() ? v.get<unsigned long long>() > static_cast<unsigned long long>(hi) : v.get<long long>() > hi;
    const bool below = !v.is_number_unsigned() && v.get<long long>() < lo;
    if (above || below || (v.is_number_unsigned() && v.get<unsigned long long>() < static_cast<unsigned long long>(lo)))
      fail(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }

  void number(const std::string& key, bool required, double lo, double hi, bool strict_lo = false) const {
    if (!present(key, required)) return;
    const auto& v = at(key);
    if (!v.is_number()) return fail(key, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) return fail(key, "must be finite");
    if (strict_lo ? !(x > lo) : x < lo) return fail(key, strict_lo ? "must be > " + format_double(lo) : "must be >= " + format_double(lo));
    if (x > hi) fail(key, "must be <= " + format_double(hi));
  }

  void boolean(const std::string& key) const {
    if (has(key) && !at(key).is_boolean()) fail(key, "expected true or false");
  }

  void choice(const std::string& key, bool required, const std::vector<std::string>& choices) const {
    if (!present(key, required)) return;
    const auto& v = at(key);
    if (!v.is_string() || std::find(choices.begin(), choices.end(), v.get<std::string>()) == choices.end()) {
      std::string list;
      for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
      fail(key, "must be one of: " + list);
    }
  }

  void file(const std::string& key, bool required, const fs::path& base) const {
    if (!present(key, required)) return;
    check_file(at(key), path(key), base);
  }

  void check_file(const Json& v, const std::string& where, const fs::path& base) const {
    if (!v.is_string()) return out_.push_back({where, "expected a file path"});
    if (!fs::exists(base / v.get<std::string>())) out_.push_back({where, "file not found: " + v.get<std::string>()});
  }

  /// Number list; returns its size or -1 when absent or malformed.
  long number_list(const std::string& key, bool required, double lo, double hi, bool strict_lo = false) const {
    if (!present(key, required)) return -1;
    const auto& v = at(key);
    if (!v.is_array() || v.empty()) {
      fail(key, "expected a non-empty list of numbers");
      return -1;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = path(key) + "[" + std::to_string(i) + "]";
      if (!v[i].is_number()) {
        out_.push_back({p, "expected a number"});
        continue;
      }
      const double x = v[i].get<double>();
      if (!std::isfinite(x) || (strict_lo ? !(x > lo) : x < lo) || x > hi)
        out_.push_back({p, "must lie in " + std::string(strict_lo ? "(" : "[") + format_double(lo) + ", " + format_double(hi) + "]"});
    }
    return static_cast<long>(v.size());
  }

  void only(const std::vector<std::string>& allowed) const {
    if (!table_.is_object()) return;
    for (const auto& [k, v] : table_.items())
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) out_.push_back({path(k), "unknown key"});
  }

  Checker sub(const std::string& key) const { return Checker(table_.at(key), path(key), out_); }

 private:
  const Json& table_;
  std::string prefix_;
  std::vector<Violation>& out_;
};

void check_grid(const Checker& c) {
  if (!c.has("grid")) return;
  if (!c.at("grid").is_object()) return c.fail("grid", "expected a table");
  const auto g = c.sub("grid");
  g.only({"n", "dx", "x_min"});
  g.integer("n", false, 16, 1 << 16);
  g.number("dx", false, 0, 1e6, true);
  g.number("x_min", false, -1e12, 1e12);
}

void check_packets(const Checker& c) {
  if (!c.has("packets")) return;
  const auto& arr = c.at("packets");
  if (!arr.is_array() || arr.empty()) return c.fail("packets", "expected a non-empty list of tables");
  for (std::size_t i = 0; i < arr.size(); ++i)
    if (!arr[i].is_object()) c.fail("packets[" + std::to_string(i) + "]", "expected a table");
}

void check_packet_fields(const Json& arr, const std::string& prefix, std::vector<Violation>& out) {
  if (!arr.is_array()) return;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_object()) continue;
    const Checker p(arr[i], prefix + "[" + std::to_string(i) + "]", out);
    p.only({"x0", "sigma", "k0", "weight"});
    p.number("x0", true, -1e12, 1e12);
    p.number("sigma", true, 0, 1e12, true);
    p.number("k0", false, -1e12, 1e12);
    p.number("weight", false, 0, 1e12, true);
  }
}

void check_bath(const Checker& c, std::size_t max_n, bool has_seed) {
  c.integer("n", true, 1, static_cast<long long>(max_n));
  c.number("a_sq", false, 0, 1);
  const long ng = c.number_list("couplings", false, 0, 1e12, true);
  const long na = c.number_list("alpha_sq", false, 0, 1);
  if (c.has("couplings") != c.has("alpha_sq")) c.fail(c.has("couplings") ? "alpha_sq" : "couplings", "couplings and alpha_sq go together");
  if (c.has("n") && c.at("n").is_number_integer()) {
    const auto n = c.at("n").get<long long>();
    if (ng >= 0 && ng != n) c.fail("couplings", "length must equal n");
    if (na >= 0 && na != n) c.fail("alpha_sq", "length must equal n");
  }
  if (!c.has("couplings") && !has_seed) c.fail_at("seed", "required: random couplings are drawn when none are given");
}

void check_params(const std::string& scenario, const Checker& c, bool has_seed, const fs::path& base,
                  std::vector<Violation>& out) {
  if (scenario == "spinbath") {
    c.only({"n", "a_sq", "couplings", "alpha_sq", "t_max", "samples"});
    check_bath(c, 100000, has_seed);
    c.number("t_max", false, 0, 1e12, true);
    c.integer("samples", false, 2, 1000000);
  } else if (scenario == "sieve") {
    c.only({"n", "a_sq", "couplings", "alpha_sq", "times", "t_max", "samples"});
    check_bath(c, 8, has_seed);
    c.number_list("times", false, 0, 1e12);
    c.number("t_max", false, 0, 1e12, true);
    c.integer("samples", false, 1, 10000);
    if (c.has("times") && (c.has("t_max") || c.has("samples"))) c.fail("times", "give either times or t_max/samples");
  } else if (scenario == "envariance") {
    c.only({"squared"});
    if (!c.present("squared", true)) return;
    const auto& arr = c.at("squared");
    if (!arr.is_array() || arr.empty()) return c.fail("squared", "expected a non-empty list of rationals m/M");
    Rational sum(0);
    bool ok = true;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = c.path("squared") + "[" + std::to_string(i) + "]";
      try {
        const std::string text = arr[i].is_string() ? arr[i].get<std::string>()
                                 : arr[i].is_number_integer() ? std::to_string(arr[i].get<long long>())
                                                              : throw Error(ErrorCode::ParseError, "not a rational");
        const Rational r = parse_rational(text);
        if (r < Rational(0)) {
          out.push_back({p, "must be non-negative"});
          ok = false;
        }
        sum += r;
      } catch (const std::exception&) {
        out.push_back({p, "expected a rational m/M"});
        ok = false;
      }
    }
    if (ok && sum != Rational(1)) c.fail("squared", "must sum to exactly 1 (sum is " + to_string(sum) + ")");
  } else if (scenario == "histories") {
    c.only({"state", "hamiltonian", "t0", "families", "mode", "tol", "picture"});
    c.file("state", true, base);
    c.file("hamiltonian", false, base);
    c.number("t0", false, -1e12, 1e12);
    c.choice("mode", false, {"weak", "medium"});
    c.number("tol", false, 0, 1, true);
    c.choice("picture", false, {"schroedinger", "heisenberg"});
    if (!c.present("families", true)) return;
    const auto& fams = c.at("families");
    if (!fams.is_array() || fams.empty()) return c.fail("families", "expected a non-empty list of tables");
    if (fams.size() > kMaxHistoryTimes) c.fail("families", "at most " + std::to_string(kMaxHistoryTimes) + " times");
    for (std::size_t i = 0; i < fams.size(); ++i) {
      const std::string p = c.path("families") + "[" + std::to_string(i) + "]";
      if (!fams[i].is_object()) {
        out.push_back({p, "expected a table"});
        continue;
      }
      const Checker f(fams[i], p, out);
      f.only({"time", "projectors", "computational"});
      f.number("time", true, -1e12, 1e12);
      if (f.has("projectors") == f.has("computational")) {
        f.fail("projectors", "give exactly one of projectors or computational");
        continue;
      }
      if (f.has("projectors")) {
        const auto& list = f.at("projectors");
        if (!list.is_array() || list.empty()) {
          f.fail("projectors", "expected a non-empty list of files");
          continue;
        }
        if (list.size() > kMaxFamilySize) f.fail("projectors", "at most " + std::to_string(kMaxFamilySize) + " projectors");
        for (std::size_t k = 0; k < list.size(); ++k) f.check_file(list[k], f.path("projectors") + "[" + std::to_string(k) + "]", base);
      } else {
        const auto& list = f.at("computational");
        if (!list.is_array() || list.empty() || !std::all_of(list.begin(), list.end(), [](const Json& j) { return j.is_string(); }))
          f.fail("computational", "expected a non-empty list of factor labels");
      }
    }
  } else if (scenario == "grw") {
    c.only({"grid", "packets", "mass", "preset", "desk_rate", "desk_delta", "nu", "delta", "n_particles", "t_end", "runs",
            "snapshots", "master"});
    check_grid(c);
    check_packets(c);
    if (c.has("packets")) check_packet_fields(c.at("packets"), c.path("packets"), out);
    c.number("mass", false, 0, 1e12, true);
    c.number("t_end", false, 0, 1e12, true);
    c.integer("runs", false, 1, 1000000);
    c.boolean("snapshots");
    if (c.has("preset")) {
      c.choice("preset", true, grw_preset_names());
      c.number("desk_rate", false, 0, 1e9, true);
      c.number("desk_delta", false, 0, 1e12, true);
      for (const char* k : {"nu", "delta", "n_particles"})
        if (c.has(k)) c.fail(k, "conflicts with preset");
    } else {
      c.number("nu", true, 0, 1e12, true);
      c.number("delta", true, 0, 1e12, true);
      c.number("n_particles", false, 1, 1e300);
      for (const char* k : {"desk_rate", "desk_delta"})
        if (c.has(k)) c.fail(k, "only meaningful with a preset");
    }
    if (!has_seed) c.fail_at("seed", "required for stochastic scenarios");
    if (c.has("master")) {
      if (!c.at("master").is_object()) return c.fail("master", "expected a table");
      const auto m = c.sub("master");
      m.only({"lambda", "dt", "steps", "kinetic", "every", "a", "b", "halfwidth"});
      m.number("lambda", true, 0, 1e12);
      m.number("dt", false, 0, 1e6, true);
      m.integer("steps", false, 1, 10000000);
      m.integer("every", false, 1, 10000000);
      m.boolean("kinetic");
      m.number("a", false, -1e12, 1e12);
      m.number("b", false, -1e12, 1e12);
      m.number("halfwidth", false, 0, 1e12, true);
      if (c.has("grid") && c.at("grid").is_object() && c.at("grid").contains("n") && c.at("grid")["n"].is_number_integer() &&
          c.at("grid")["n"].get<long long>() > 1024)
        m.fail("lambda", "master equation runs need grid.n <= 1024");
    }
  } else if (scenario == "bohm") {
    c.only({"grid", "packets", "mass", "source", "energy", "trajectories", "dt", "t_end", "record_every", "bins"});
    check_grid(c);
    check_packets(c);
    if (c.has("packets")) check_packet_fields(c.at("packets"), c.path("packets"), out);
    c.number("mass", false, 0, 1e12, true);
    c.choice("source", false, {"free", "stationary"});
    c.number("energy", false, -1e12, 1e12);
    c.integer("trajectories", false, 1, 1000000);
    c.number("dt", false, 0, 1e6, true);
    c.number("t_end", false, 0, 1e12, true);
    c.integer("record_every", false, 1, 10000000);
    c.integer("bins", false, 1, 100000);
    if (!has_seed) c.fail_at("seed", "required for stochastic scenarios");
  } else if (scenario == "measurement") {
    c.only({"setup", "outcomes", "environment", "amplitudes"});
    c.file("setup", false, base);
    if (c.has("setup") && (c.has("outcomes") || c.has("environment"))) c.fail("setup", "conflicts with outcomes/environment");
    c.integer("outcomes", false, 2, 16);
    c.boolean("environment");
    if (c.has("amplitudes")) {
      const auto& arr = c.at("amplitudes");
      if (!arr.is_array() || arr.empty()) return c.fail("amplitudes", "expected a non-empty list");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const bool pair = arr[i].is_array() && arr[i].size() == 2 && arr[i][0].is_number() && arr[i][1].is_number();
        if (!arr[i].is_number() && !pair)
          out.push_back({c.path("amplitudes") + "[" + std::to_string(i) + "]", "expected a number or [re, im]"});
      }
    }
  }
}

// ---------------------------------------------------------------------------
// CSV output

class Csv {
 public:
  Csv(const fs::path& path, const std::vector<std::string>& header, const std::string& units) : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
    out_ << "# units: " << units << '\n';
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

std::string num(double x) { return format_double(x); }
std::string num(std::size_t x) { return std::to_string(x); }

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  Csv open(const std::string& name, const std::vector<std::string>& header, const std::string& units) {
    names_.push_back(name);
    return Csv(dir_ / name, header, units);
  }

  std::vector<EmittedFile> finish() const {
    std::vector<EmittedFile> files;
    for (const auto& n : names_) files.push_back({n, fs::file_size(dir_ / n), sha256_file(dir_ / n)});
    return files;
  }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// parameter helpers

double get_num(const Json& p, const char* key, double fallback) { return p.contains(key) && !p[key].is_null() ? p[key].get<double>() : fallback; }
std::size_t get_size(const Json& p, const char* key, std::size_t fallback) {
  return p.contains(key) && !p[key].is_null() ? p[key].get<std::size_t>() : fallback;
}
bool get_bool(const Json& p, const char* key, bool fallback) { return p.contains(key) && !p[key].is_null() ? p[key].get<bool>() : fallback; }
std::string get_str(const Json& p, const char* key, const std::string& fallback) {
  return p.contains(key) && !p[key].is_null() ? p[key].get<std::string>() : fallback;
}

SpinBathParams bath_from(const ScenarioConfig& cfg) {
  const auto& p = cfg.params;
  const std::size_t n = p["n"].get<std::size_t>();
  const double a_sq = get_num(p, "a_sq", 0.5);
  const Complex a(std::sqrt(a_sq)), b(std::sqrt(1.0 - a_sq));
  if (!p.contains("couplings")) {
    RandomStream rng(*cfg.seed, 0);
    return SpinBathParams::random(n, rng, a, b);
  }
  SpinBathParams bath;
  bath.a = a;
  bath.b = b;
  for (std::size_t k = 0; k < n; ++k) {
    const double q = p["alpha_sq"][k].get<double>();
    bath.couplings.push_back(p["couplings"][k].get<double>());
    bath.env_amps.emplace_back(std::sqrt(q), std::sqrt(1.0 - q));
  }
  return bath;
}

struct GridSetup {
  double x_min, dx;
  std::size_t n;
  double mass;
  std::vector<GridWavefunction> packets;
  std::vector<double> weights;
  std::vector<double> centers;
  std::vector<double> widths;

  GridWavefunction psi() const { return GridWavefunction::superpose(packets, weights); }
};

GridSetup grid_from(const Json& p) {
  GridSetup g;
  const Json grid = p.contains("grid") ? p["grid"] : Json::object();
  g.n = get_size(grid, "n", 512);
  g.dx = get_num(grid, "dx", 0.05);
  g.x_min = get_num(grid, "x_min", -0.5 * g.dx * static_cast<double>(g.n));
  g.mass = get_num(p, "mass", 1.0);
  Json packets = p.contains("packets") ? p["packets"] : Json::array();
  if (packets.empty()) {
    const double span = g.dx * static_cast<double>(g.n);
    packets.push_back({{"x0", -span / 6}, {"sigma", span / 40}, {"weight", 0.3}});
    packets.push_back({{"x0", span / 6}, {"sigma", span / 40}, {"weight", 0.7}});
  }
  for (const auto& pk : packets) {
    const double x0 = pk["x0"].get<double>(), sigma = pk["sigma"].get<double>();
    g.packets.push_back(GridWavefunction::gaussian(g.x_min, g.dx, g.n, x0, sigma, get_num(pk, "k0", 0.0), g.mass));
    g.weights.push_back(get_num(pk, "weight", 1.0));
    g.centers.push_back(x0);
    g.widths.push_back(sigma);
  }
  return g;
}

fs::path input_path(const ScenarioConfig& cfg, const Json& v) { return cfg.base_dir / v.get<std::string>(); }

// ---------------------------------------------------------------------------
// scenarios

void run_spinbath(const ScenarioConfig& cfg, Outputs& out, RunManifest& m) {
  const auto bath = bath_from(cfg);
  const double t_max = get_num(cfg.params, "t_max", 10.0);
  const std::size_t samples = get_size(cfg.params, "samples", 201);
  std::vector<double> ts(samples);
  for (std::size_t i = 0; i < samples; ++i) ts[i] = t_max * static_cast<double>(i) / static_cast<double>(samples - 1);
  const auto trace = z_trace(bath, ts, cfg.workers);

  auto z = out.open("z.csv", {"t", "re_z", "im_z", "abs_z_sq"}, "t in inverse coupling units (hbar = 1); z dimensionless");
  for (std::size_t i = 0; i < samples; ++i) {
    const Complex v = trace.z_values[i];
    z.row({num(ts[i]), num(v.real()), num(v.imag()), num(std::norm(v))});
  }

  const double lta = long_time_average(bath);
  std::optional<GaussianEnvelope> env;
  try {
    env = gaussian_envelope(bath);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateSpec) throw;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto s = out.open("summary.csv", {"long_time_average", "A", "B_fit", "B_moment", "max_deviation"},
                    "long_time_average dimensionless; A and B in coupling units");
  s.row({num(lta), num(env ? env->A : nan), num(env ? env->B_fit : nan), num(env ? env->B_moment : nan),
         num(env ? env->max_deviation : nan)});
  m.report.push_back("long-time average of |z|^2: " + num(lta));
  if (env) m.report.push_back("Gaussian fit: A = " + num(env->A) + ", B = " + num(env->B_fit));
}

void run_sieve(const ScenarioConfig& cfg, Outputs& out, RunManifest& m) {
  const auto bath = bath_from(cfg);
  std::vector<double> times;
  if (cfg.params.contains("times")) {
    for (const auto& t : cfg.params["times"]) times.push_back(t.get<double>());
  } else {
    const double t_max = get_num(cfg.params, "t_max", 10.0);
    const std::size_t samples = get_size(cfg.params, "samples", 21);
    for (std::size_t i = 0; i < samples; ++i)
      times.push_back(samples == 1 ? t_max : t_max * static_cast<double>(i) / static_cast<double>(samples - 1));
  }

  const SpaceLayout s{{"S", 2}};
  const double r = 1.0 / std::sqrt(2.0);
  const std::vector<std::pair<std::string, CVector>> cands{
      {"up", (CVector(2) << 1, 0).finished()},
      {"down", (CVector(2) << 0, 1).finished()},
      {"plus", (CVector(2) << r, r).finished()},
      {"minus", (CVector(2) << r, -r).finished()},
      {"plus_i", (CVector(2) << r, Complex(0, r)).finished()},
      {"minus_i", (CVector(2) << r, Complex(0, -r)).finished()},
  };
  std::vector<PureState> states;
  for (const auto& [name, v] : cands) states.emplace_back(s, v);

  const auto spec = spin_bath_spec(bath);
  const auto env_pure = spin_bath_environment(bath);
  const auto reports = predictability_sieve(spec, DensityOperator::from_pure(env_pure), states, times, 1e-12, cfg.workers);

  auto rank = out.open("ranking.csv", {"t", "rank", "candidate", "purity", "entropy"}, "t in inverse coupling units; purity and entropy (nats) dimensionless");
  for (const auto& rep : reports)
    for (std::size_t k = 0; k < rep.entries.size(); ++k) {
      const auto& e = rep.entries[k];
      rank.row({num(rep.time), num(k), cands[e.index].first, num(e.purity), num(e.entropy)});
    }

  const PureState system(s, (CVector(2) << bath.a, bath.b).finished());
  const std::vector<CVector> pointers{cands[0].second, cands[1].second};
  auto cmp = out.open("pointer_vs_schmidt.csv",
                      {"t", "angle_0", "angle_1", "max_angle", "eigenvalue_0", "eigenvalue_1", "near_degenerate", "rank_deficient"},
                      "t in inverse coupling units; angles in radians");
  for (double t : times) {
    const auto row = schmidt_vs_pointer(spec, env_pure, system, t, pointers).back();
    cmp.row({num(t), num(row.angles.at(0)), num(row.angles.at(1)), num(row.max_angle), num(row.eigenvalues.at(0)),
             num(row.eigenvalues.at(1)), row.near_degenerate ? "1" : "0", row.rank_deficient ? "1" : "0"});
  }
  const auto& last = reports.back();
  m.report.push_back("best candidate at t = " + num(last.time) + ": " + cands[last.entries[0].index].first);
}

void run_envariance(const ScenarioConfig& cfg, Outputs& out, RunManifest& m) {
  std::vector<Rational> squared;
  for (const auto& v : cfg.params["squared"])
    squared.push_back(parse_rational(v.is_string() ? v.get<std::string>() : std::to_string(v.get<long long>())));
  const auto fg = fine_grain(squared);

  auto table = out.open("probabilities.csv", {"outcome", "squared_coefficient", "multiplicity", "probability", "probability_value"},
                        "dimensionless; rationals as m/M");
  m.report.push_back("outcome  |c_k|^2  m_k  p_k");
  for (std::size_t k = 0; k < squared.size(); ++k) {
    const auto& p = fg.probabilities[k];
    table.row({num(k), to_string(squared[k]), num(fg.multiplicities[k]), to_string(p),
               num(static_cast<double>(p.numerator()) / static_cast<double>(p.denominator()))});
    m.report.push_back(std::to_string(k) + "  " + to_string(squared[k]) + "  " + std::to_string(fg.multiplicities[k]) + "/" +
                       std::to_string(fg.denominator) + "  " + to_string(p));
  }
  auto proof = out.open("proof_trace.csv", {"step", "assumptions", "residual", "checks"}, "residuals are state-vector norms (dimensionless)");
  for (const auto& e : fg.derivation.trace) {
    proof.row({to_string(e.step), e.assumptions, num(e.residual), num(e.checks)});
    m.report.push_back(to_string(e.step) + " [" + e.assumptions + "] residual " + num(e.residual));
  }
  m.notes["denominator"] = fg.denominator;
  m.notes["max_residual"] = fg.derivation.max_residual;
}

void run_histories(const ScenarioConfig& cfg, Outputs& out, RunManifest& m) {
  const auto& p = cfg.params;
  const auto text = read_text_file(input_path(cfg, p["state"]));
  const DensityOperator rho = text.is_vector() ? DensityOperator::from_pure(PureState::normalized(text.layout, text.as_vector()))
                                               : DensityOperator(text.layout, text.as_matrix());
  const SpaceLayout& layout = rho.layout();
  const Observable h = p.contains("hamiltonian") ? read_observable(input_path(cfg, p["hamiltonian"])) : Observable::zero(layout);
  if (!(h.layout() == layout)) throw Error(ErrorCode::LayoutMismatch, "hamiltonian layout differs from the state layout");

  std::vector<ProjectorFamily> families;
  for (const auto& f : p["families"]) {
    const double t = f["time"].get<double>();
    if (f.contains("computational")) {
      families.push_back(ProjectorFamily::computational(t, layout.restrict_to(f["computational"].get<LabelSet>())));
      continue;
    }
    ProjectorFamily fam{t, {}, {}};
    for (const auto& file : f["projectors"]) {
      const auto obs = read_observable(input_path(cfg, file));
      if (fam.projectors.empty()) fam.layout = obs.layout();
      if (!(obs.layout() == fam.layout)) throw Error(ErrorCode::LayoutMismatch, "projectors within a family must share a layout");
      fam.projectors.push_back(obs.matrix());
    }
    families.push_back(std::move(fam));
  }
  const auto set = fine_grained_histories(std::move(families));
  const auto prop = Propagation::from_hamiltonian(HamiltonianSpectrum(h), get_num(p, "t0", 0.0), set.times());
  const Picture picture = get_str(p, "picture", "schroedinger") == "heisenberg" ? Picture::Heisenberg : Picture::Schroedinger;
  const auto d = decoherence_functional(set, rho, prop, picture, cfg.workers);
  const ConsistencyMode mode = get_str(p, "mode", "medium") == "weak" ? ConsistencyMode::Weak : ConsistencyMode::Medium;
  const auto rep = check_consistency(d, mode, get_num(p, "tol", 1e-8));

  auto hist = out.open("histories.csv", {"index", "label", "probability"}, "dimensionless");
  for (std::size_t a = 0; a < d.histories.size(); ++a) hist.row({num(a), d.histories[a].label(), num(d.values(a, a).real())});
  auto fn = out.open("functional.csv", {"alpha", "beta", "re", "im"}, "dimensionless");
  for (Eigen::Index a = 0; a < d.values.rows(); ++a)
    for (Eigen::Index b = 0; b < d.values.cols(); ++b)
      fn.row({num(static_cast<std::size_t>(a)), num(static_cast<std::size_t>(b)), num(d.values(a, b).real()), num(d.values(a, b).imag())});
  auto cons = out.open("consistency.csv", {"mode", "tol", "max_violation", "worst_alpha", "worst_beta", "passed"}, "dimensionless");
  cons.row({to_string(rep.mode), num(rep.tol), num(rep.max_violation), num(rep.worst_a), num(rep.worst_b), rep.passed ? "1" : "0"});
  m.report.push_back(to_string(rep.mode) + " consistency: max violation " + num(rep.max_violation) + (rep.passed ? " (passed)" : " (failed)"));
}

void run_grw(const ScenarioConfig& cfg, Outputs& out, RunManifest& m) {
  const auto& p = cfg.params;
  const auto g = grid_from(p);
  const auto psi0 = g.psi();

  GRWParams params;
  if (p.contains("preset")) {
    const auto preset = grw_preset(p["preset"].get<std::string>(), get_num(p, "desk_rate", 10.0), get_num(p, "desk_delta", 1.0));
    params = preset.desk;
    m.notes["preset"] = preset.name;
    m.notes["n_particles"] = preset.n_particles.to_string();
    m.notes["nu_per_second"] = preset.nu_per_second.to_string();
    m.notes["delta_cm"] = preset.delta_cm.to_string();
    m.notes["physical_total_rate_per_second"] = preset.total_rate_per_second.to_string();
    m.notes["physical_mean_interhit_seconds"] = preset.mean_interhit_seconds.to_string();
    m.notes["rescale_factor"] = preset.rescale_factor;
    m.notes["desk_nu"] = params.nu;
    m.notes["desk_delta"] = params.delta;
    m.report.push_back("preset " + preset.name + ": N nu = " + preset.total_rate_per_second.to_string() +
                       " per second rescaled by " + num(preset.rescale_factor) + " to " + num(params.total_rate()) + " per unit time");
  } else {
    params = GRWParams{p["nu"].get<double>(), p["delta"].get<double>(), get_num(p, "n_particles", 1.0)};
  }
  params.validate();

  const double t_end = get_num(p, "t_end", 1.0);
  const std::size_t runs = get_size(p, "runs", 1);
  std::vector<GRWRun> results(runs);
  parallel_for(runs, cfg.workers, [&](std::size_t r) {
    RandomStream rng(*cfg.seed, r);
    results[r] = grw_run(psi0, params, t_end, rng);
    if (r > 0) results[r].snapshots.clear();
  });

  auto ev = out.open("events.csv", {"run", "time", "center", "particle"}, "time and center in grid units (hbar = m = 1)");
  std::size_t total = 0;
  for (std::size_t r = 0; r < runs; ++r)
    for (const auto& e : results[r].events) {
      ev.row({num(r), num(e.time), num(e.center), num(e.particle)});
      ++total;
    }
  if (get_bool(p, "snapshots", true)) {
    auto sn = out.open("snapshots.csv", {"t", "x", "density"}, "t and x in grid units; density per unit length");
    for (const auto& s : results[0].snapshots)
      for (std::size_t i = 0; i < g.n; ++i) sn.row({num(s.time), num(g.x_min + g.dx * static_cast<double>(i)), num(s.density(static_cast<Eigen::Index>(i)))});
  }
  m.notes["events"] = total;
  m.report.push_back(std::to_string(total) + " hits over " + std::to_string(runs) + " run(s)");

  if (p.contains("master")) {
    const auto& mp = p["master"];
    const MasterParams master{g.mass, mp["lambda"].get<double>()};
    const double dt = get_num(mp, "dt", 1e-3);
    const std::size_t steps = get_size(mp, "steps", 1000), every = get_size(mp, "every", 10);
    const bool kinetic = get_bool(mp, "kinetic", true);
    const double a = get_num(mp, "a", g.centers.front()), b = get_num(mp, "b", g.centers.back());
    const double hw = get_num(mp, "halfwidth", g.widths.front());
    auto rho = GridDensity::from_pure(psi0);
    auto od = out.open("offdiag.csv", {"t", "offdiag_norm", "purity", "trace"}, "t in grid units; norms dimensionless");
    od.row({num(0.0), num(offdiagonal_norm(rho, a, b, hw)), num(rho.purity()), num(rho.trace())});
    for (std::size_t s = 1; s <= steps; ++s) {
      rho = master_step(rho, master, dt, kinetic);
      if (s % every == 0 || s == steps)
        od.row({num(dt * static_cast<double>(s)), num(offdiagonal_norm(rho, a, b, hw)), num(rho.purity()), num(rho.trace())});
    }
  }
}

void run_bohm(const ScenarioConfig& cfg, Outputs& out, RunManifest& m) {
  const auto& p = cfg.params;
  const auto g = grid_from(p);
  const auto psi0 = g.psi();
  const std::size_t n = get_size(p, "trajectories", 1000);
  const double dt = get_num(p, "dt", 0.01), t_end = get_num(p, "t_end", 1.0);
  const std::size_t every = get_size(p, "record_every", 10), bins = get_size(p, "bins", 50);

  std::unique_ptr<WavefunctionSource> source;
  if (get_str(p, "source", "free") == "stationary")
    source = std::make_unique<StationaryState>(psi0, get_num(p, "energy", 0.0));
  else
    source = std::make_unique<FreeEvolution>(psi0);

  const auto ens = sample_ensemble(psi0, n, *cfg.seed, 0);
  const auto run = bohm_run(*source, ens, dt, t_end, cfg.workers);

  auto tr = out.open("trajectories.csv", {"trajectory", "t", "q"}, "t and q in grid units (hbar = m = 1); q = nan after escape");
  const std::size_t steps = run.times.size();
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t s = 0; s < steps; ++s)
      if (s % every == 0 || s + 1 == steps) tr.row({num(k), num(run.times[s]), num(run.trajectories[k][s])});

  // final positions against |psi(t_end)|^2 on coarse bins
  const auto final_psi = source->at(run.times.back());
  const auto dens = final_psi.density();
  const double lo = g.x_min - 0.5 * g.dx, width = g.dx * static_cast<double>(g.n) / static_cast<double>(bins);
  std::vector<double> expect(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < g.n; ++i)
    expect[std::min(bins - 1, static_cast<std::size_t>((g.dx * (static_cast<double>(i) + 0.5)) / width))] += dens(static_cast<Eigen::Index>(i)) * g.dx;
  for (double q : run.final_positions) ++count[std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, (q - lo) / width)))];
  auto hist = out.open("final_histogram.csv", {"bin_lo", "bin_hi", "count", "expected"}, "bin edges in grid units; counts in trajectories");
  for (std::size_t b = 0; b < bins; ++b)
    hist.row({num(lo + width * static_cast<double>(b)), num(lo + width * static_cast<double>(b + 1)), num(count[b]),
              num(expect[b] * static_cast<double>(run.final_positions.size()))});

  const auto crossings = count_crossings(run);
  m.notes["escaped"] = run.escaped_count;
  m.notes["halvings"] = run.halvings;
  m.notes["crossings"] = crossings;
  m.report.push_back(std::to_string(n) + " trajectories, " + std::to_string(run.escaped_count) + " escaped, " +
                     std::to_string(crossings) + " crossings");
}

std::string basis_label(const SpaceLayout& layout, std::size_t index) {
  std::vector<std::size_t> digits(layout.num_factors());
  for (std::size_t f = layout.num_factors(); f-- > 0;) {
    digits[f] = index % layout.factors()[f].dim;
    index /= layout.factors()[f].dim;
  }
  std::string s;
  for (std::size_t f = 0; f < digits.size(); ++f) s += (f ? " " : "") + layout.factors()[f].label + "=" + std::to_string(digits[f]);
  return s;
}

void run_measurement(const ScenarioConfig& cfg, Outputs& out, RunManifest& m) {
  const auto& p = cfg.params;
  const MeasurementSetup setup = p.contains("setup") ? load_measurement_setup(input_path(cfg, p["setup"]))
                                                     : MeasurementSetup::computational(get_size(p, "outcomes", 2), get_bool(p, "environment", true));
  setup.validate();
  const std::size_t dim = setup.system_layout.dim();
  CVector amps = CVector::Zero(static_cast<Eigen::Index>(dim));
  if (p.contains("amplitudes")) {
    if (p["amplitudes"].size() != dim) throw Error(ErrorCode::ConfigError, "params.amplitudes: expected " + std::to_string(dim) + " entries");
    for (std::size_t i = 0; i < dim; ++i) {
      const auto& v = p["amplitudes"][i];
      amps(static_cast<Eigen::Index>(i)) = v.is_array() ? Complex(v[0].get<double>(), v[1].get<double>()) : Complex(v.get<double>());
    }
  } else {
    for (std::size_t n = 0; n < setup.outcomes(); ++n) amps += setup.system_basis[n];
  }
  const auto system = PureState::normalized(setup.system_layout, amps);
  const auto psi = setup.has_environment() ? chain(system, setup) : premeasure(system, setup);

  auto st = out.open("state.csv", {"index", "basis", "re", "im"}, "amplitudes dimensionless");
  for (std::size_t i = 0; i < psi.dim(); ++i) {
    const Complex c = psi.amplitudes()(static_cast<Eigen::Index>(i));
    st.row({num(i), basis_label(psi.layout(), i), num(c.real()), num(c.imag())});
  }
  const LabelSet sys = setup.system_layout.labels();
  const auto red = reduce(psi, sys);
  auto rs = out.open("reduced_system.csv", {"row", "col", "re", "im"}, "density-matrix entries dimensionless");
  for (Eigen::Index i = 0; i < red.matrix().rows(); ++i)
    for (Eigen::Index j = 0; j < red.matrix().cols(); ++j)
      rs.row({num(static_cast<std::size_t>(i)), num(static_cast<std::size_t>(j)), num(red.matrix()(i, j).real()), num(red.matrix()(i, j).imag())});
  const auto sd = schmidt(psi, sys, psi.layout().complement(sys));
  auto sc = out.open("schmidt.csv", {"index", "coefficient"}, "dimensionless");
  for (std::size_t k = 0; k < sd.coefficients.size(); ++k) sc.row({num(k), num(sd.coefficients[k])});
  m.report.push_back("system purity after the chain: " + num(purity(red)));
}

std::string strip_code(const std::string& what) {
  const auto pos = what.find(": ");
  return pos == std::string::npos ? what : what.substr(pos + 2);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> scenario_names() { return kScenarios; }

bool is_stochastic(const std::string& scenario) { return scenario == "grw" || scenario == "bohm"; }

Json yaml_to_json(const std::string& text) {
  try {
    return node_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::ConfigError, "override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  Json value = yaml_to_json(assignment.substr(eq + 1));
  Json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error(ErrorCode::ConfigError, "empty key segment in override " + key);
    if (!node->is_object()) {
      if (!node->is_null()) throw Error(ErrorCode::ConfigError, "override " + key + " descends into a non-table");
      *node = Json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

ConfigSource load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  ConfigSource src{yaml_to_json(buf.str()), path.parent_path().empty() ? fs::path(".") : path.parent_path()};
  if (src.document.is_null()) src.document = Json::object();
  for (const auto& o : overrides) apply_override(src.document, o);
  return src;
}

std::vector<Violation> validate_config(const Json& doc, const fs::path& base_dir) {
  std::vector<Violation> out;
  if (!doc.is_object()) return {{"", "config must be a table"}};
  const Checker top(doc, "", out);
  top.only({"scenario", "seed", "output", "workers", "params"});
  top.choice("scenario", true, kScenarios);
  if (top.has("seed") && !(doc["seed"].is_number_unsigned() || (doc["seed"].is_number_integer() && doc["seed"].get<long long>() >= 0))) top.fail("seed", "expected a non-negative 64-bit integer");
  if (top.present("output", true) && !doc["output"].is_string()) top.fail("output", "expected a directory path");
  top.integer("workers", false, 1, 256);
  const bool has_seed = top.has("seed");
  const Json empty = Json::object();
  if (top.has("params") && !doc["params"].is_object()) {
    top.fail("params", "expected a table");
    return out;
  }
  const Json& params = top.has("params") ? doc["params"] : empty;
  if (!top.has("scenario") || !doc["scenario"].is_string()) return out;
  const std::string scenario = doc["scenario"].get<std::string>();
  if (std::find(kScenarios.begin(), kScenarios.end(), scenario) == kScenarios.end()) return out;
  check_params(scenario, Checker(params, "params", out), has_seed, base_dir, out);
  return out;
}

std::string format_violations(const std::vector<Violation>& violations) {
  std::string s;
  for (const auto& v : violations) s += (s.empty() ? "" : "\n") + (v.path.empty() ? std::string("<root>") : v.path) + ": " + v.message;
  return s;
}

ScenarioConfig ScenarioConfig::from_json(const Json& doc, const fs::path& base_dir) {
  const auto violations = validate_config(doc, base_dir);
  if (!violations.empty()) throw Error(ErrorCode::ConfigError, format_violations(violations));
  ScenarioConfig cfg;
  cfg.scenario = doc["scenario"].get<std::string>();
  if (doc.contains("params") && !doc["params"].is_null()) cfg.params = doc["params"];
  if (doc.contains("seed") && !doc["seed"].is_null()) cfg.seed = doc["seed"].get<std::uint64_t>();
  cfg.output_dir = doc["output"].get<std::string>();
  cfg.base_dir = base_dir;
  cfg.workers = doc.contains("workers") ? doc["workers"].get<std::size_t>() : 1;
  cfg.echo = doc;
  return cfg;
}

Json RunManifest::to_json() const {
  Json files_json = Json::array();
  for (const auto& f : files) files_json.push_back({{"name", f.name}, {"bytes", f.bytes}, {"sha256", f.sha256}});
  return Json{{"version", version}, {"config", config}, {"duration_seconds", duration_seconds}, {"files", files_json}, {"notes", notes}};
}

RunManifest run(const ScenarioConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorCode::ConfigError, "output: cannot create " + cfg.output_dir.string() + ": " + ec.message());

  RunManifest m;
  m.config = cfg.echo;
  Outputs out(cfg.output_dir);
  try {
    if (cfg.scenario == "spinbath") run_spinbath(cfg, out, m);
    else if (cfg.scenario == "sieve") run_sieve(cfg, out, m);
    else if (cfg.scenario == "envariance") run_envariance(cfg, out, m);
    else if (cfg.scenario == "histories") run_histories(cfg, out, m);
    else if (cfg.scenario == "grw") run_grw(cfg, out, m);
    else if (cfg.scenario == "bohm") run_bohm(cfg, out, m);
    else if (cfg.scenario == "measurement") run_measurement(cfg, out, m);
    else throw Error(ErrorCode::ConfigError, "scenario: unknown scenario " + cfg.scenario);
  } catch (const Error& e) {
    throw Error(e.code(), "scenario " + cfg.scenario + ": " + strip_code(e.what()));
  }
  m.files = out.finish();
  m.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream(cfg.output_dir / "manifest.json", std::ios::binary) << m.to_json().dump(2) << '\n';
  return m;
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

}  // namespace declab
