#include "mlrg/cli.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlrg/errors.hpp"
#include "mlrg/exact_oracle.hpp"
#include "mlrg/io.hpp"
#include "mlrg/potentials.hpp"
#include "mlrg/providers.hpp"
#include "mlrg/rg_flow.hpp"

namespace mlrg::cli {

namespace {

using Json = nlohmann::ordered_json;

constexpr unsigned kSample = 1u << 0;
constexpr unsigned kEstimate = 1u << 1;
constexpr unsigned kFlow = 1u << 2;
constexpr unsigned kTc = 1u << 3;
constexpr unsigned kExact = 1u << 4;
constexpr unsigned kFits = kEstimate | kFlow | kTc;
constexpr unsigned kAll = kSample | kFits | kExact;

struct KeyInfo {
  const char* name;
  unsigned commands;
  bool flag;
  const char* help;
};

// Echo order; one entry per config key / long flag.
constexpr KeyInfo kKeys[] = {
    {"seed", kAll, false, "master seed; every chain and level seed derives from it"},
    {"temp", kSample | kFlow | kExact, false, "temperature T; the couplings are (2/T, 0, ..., 0)"},
    {"alpha", kSample | kExact, false, "eight comma-separated couplings (instead of --temp)"},
    {"size", kSample | kFlow | kTc | kExact, false, "lattice side L"},
    {"samples", kSample, false, "number of configurations written"},
    {"thin", kSample, false, "sweeps between written configurations"},
    {"sweeps", kFits, false, "sweeps per chain, burn-in included"},
    {"burn-in", kSample | kFits, false, "discarded sweeps per chain (default 10% of --sweeps)"},
    {"chains", kSample | kFits, false, "independent Metropolis chains"},
    {"batches", kFits, false, "batch-means batches per chain for standard errors"},
    {"threads", kFits, false, "worker threads for the chains (0: all cores); results do not depend on it"},
    {"in", kEstimate, false, "sample file to fit"},
    {"alpha0", kEstimate, false, "eight comma-separated starting couplings"},
    {"provider", kEstimate, false, "model moments from 'mc' sampling or 'exact' enumeration (L <= 4)"},
    {"steps", kFlow | kTc, false, "renormalization steps"},
    {"multiblock", kFlow | kTc, true, "block the fine ensemble j times instead of resampling each fitted level"},
    {"warm-start", kFlow | kTc, true, "start each level's fit from the previous level's couplings"},
    {"replicas", kFlow | kTc, false, "independent flows per temperature; the slope error is their scatter"},
    {"t-lo", kTc, false, "lowest temperature of the grid"},
    {"t-hi", kTc, false, "highest temperature of the grid"},
    {"grid", kTc, false, "number of grid temperatures"},
    {"refine", kTc, false, "refinement passes on the bracketing interval"},
    {"lambda0", kFits, false, "initial Levenberg-Marquardt damping"},
    {"streak", kFits, false, "accepted steps before the damping is divided by 10"},
    {"rtol", kFits, false, "relative error-change tolerance"},
    {"atol", kFits, false, "absolute moment tolerance"},
    {"max-iters", kFits, false, "iteration limit"},
    {"lambda-max", kFits, false, "damping limit"},
    {"damping", kFits, false, "damping matrix: diag (diag of J^T J) or identity"},
    {"atol-form", kFits, false, "absolute criterion: paper (sqrt(|f|/2)/|mu|) or normalized (|f|/sqrt(2)/|mu|)"},
    {"noise-z", kFits, false, "Monte Carlo noise floor of both tolerances, in standard errors (0: off)"},
    {"format", kFits | kExact, false, "output format: csv or json"},
    {"out", kAll, false, "output path (default: standard output)"},
};

unsigned bit(Command c) {
  switch (c) {
    case Command::sample: return kSample;
    case Command::estimate: return kEstimate;
    case Command::flow: return kFlow;
    case Command::tc: return kTc;
    case Command::exact: return kExact;
  }
  return 0;
}

const KeyInfo* find_key(const std::string& name) {
  for (const KeyInfo& k : kKeys) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

std::map<std::string, std::string> defaults(Command c) {
  const LMConfig lm;
  std::map<std::string, std::string> d = {
      {"seed", "1"},
      {"chains", "4"},
      {"batches", "50"},
      {"threads", "0"},
      {"lambda0", io::format_double(lm.lambda0)},
      {"streak", std::to_string(lm.streak_length)},
      {"rtol", io::format_double(lm.rtol)},
      {"atol", io::format_double(lm.atol)},
      {"max-iters", std::to_string(lm.max_iters)},
      {"lambda-max", io::format_double(lm.lambda_max)},
      {"damping", to_string(lm.damping)},
      {"atol-form", to_string(lm.atol_form)},
      {"noise-z", io::format_double(lm.noise_z)},
      {"steps", "3"},
      {"multiblock", "false"},
      {"warm-start", "false"},
      {"replicas", "4"},
      {"t-lo", "2.15"},
      {"t-hi", "2.4"},
      {"grid", "6"},
      {"refine", "0"},
      {"provider", "mc"},
      {"alpha0", "0,0,0,0,0,0,0,0"},
      {"out", ""},
  };
  switch (c) {
    case Command::sample:
      d["size"] = "20";
      d["samples"] = "1000";
      d["thin"] = "10";
      d["burn-in"] = "1000";
      d["chains"] = "1";
      break;
    case Command::estimate:
      d["sweeps"] = "20000";
      d["format"] = "json";
      break;
    case Command::flow:
    case Command::tc:
      d["size"] = "40";
      d["sweeps"] = "30000";
      d["format"] = "csv";
      break;
    case Command::exact:
      d["size"] = "4";
      d["format"] = "json";
      break;
  }
  return d;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError("invalid value '" + value + "' for '" + key + "': " + why);
}

long long parse_integer(const std::string& key, const std::string& value, long long lo, long long hi) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "not an integer");
  if (v < lo || v > hi) bad_value(key, value, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return v;
}

int parse_int(const std::string& key, const std::string& value, int lo, int hi = std::numeric_limits<int>::max()) {
  return static_cast<int>(parse_integer(key, value, lo, hi));
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    bad_value(key, value, "not a non-negative 64-bit integer");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "not a number");
  if (!std::isfinite(v)) bad_value(key, value, "must be finite");
  return v;
}

double parse_positive(const std::string& key, const std::string& value) {
  const double v = parse_real(key, value);
  if (!(v > 0.0)) bad_value(key, value, "must be positive");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "expected true or false");
}

Vector8 parse_couplings(const std::string& key, const std::string& value) {
  try {
    const Vector8 v = io::parse_vector(value);
    if (!v.allFinite()) bad_value(key, value, "entries must be finite");
    return v;
  } catch (const ConfigError& e) {
    bad_value(key, value, e.what());
  }
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

Json to_json(const Vector8& v) {
  Json a = Json::array();
  for (int k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

Json to_json(const Matrix8& m) {
  Json a = Json::array();
  for (int i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector8(m.row(i).transpose())));
  return a;
}

Json config_json(const RunConfig& cfg) {
  Json c = Json::object();
  for (const auto& [k, v] : cfg.echo()) c[k] = v;
  return c;
}

Json envelope(const RunConfig& cfg) {
  Json j = Json::object();
  j["schema"] = "mlrg/v1";
  j["command"] = to_string(cfg.command);
  j["config"] = config_json(cfg);
  return j;
}

void echo_comments(io::CsvWriter& csv, const RunConfig& cfg) {
  csv.comment(std::string("mlrg ") + to_string(cfg.command) + " v1");
  for (const auto& [k, v] : cfg.echo()) csv.comment(k + "=" + v);
}

std::string echo_block(const RunConfig& cfg) {
  std::ostringstream os;
  io::CsvWriter csv(os);
  echo_comments(csv, cfg);
  return os.str();
}

Json report_json(const LMReport& r) {
  Json j = Json::object();
  j["converged"] = r.converged;
  j["termination"] = to_string(r.termination);
  j["iterations"] = r.iterations;
  j["alpha"] = to_json(r.alpha_final);
  j["alpha_std_error"] = to_json(r.alpha_std_error);
  j["estimator_std_error"] = to_json(r.estimator_cov.diagonal().cwiseMax(0.0).cwiseSqrt().eval());
  j["reference_trace"] = r.reference_trace;
  j["final_moments"] = to_json(r.final_moments);
  j["final_residual"] = to_json(r.final_residual);
  j["error_trace"] = r.error_trace;
  j["lambda_trace"] = r.lambda_trace;
  j["condition_trace"] = r.condition_trace;
  j["accepted"] = r.accepted;
  j["warnings"] = r.warnings;
  return j;
}

std::vector<std::string> alpha_fields(const Vector8& a) {
  std::vector<std::string> f;
  for (int k = 0; k < a.size(); ++k) f.push_back(io::format_double(a(k)));
  return f;
}

std::vector<std::string> alpha_header() {
  std::vector<std::string> h;
  for (int k = 1; k <= kNumPotentials; ++k) h.push_back("alpha_" + std::to_string(k));
  return h;
}

FlowOptions flow_options(const RunConfig& cfg) {
  FlowOptions o;
  o.mc = cfg.mc;
  o.lm = cfg.lm;
  o.multiblock = cfg.multiblock;
  o.warm_start = cfg.warm_start;
  o.replicas = cfg.replicas;
  return o;
}

struct Outcome {
  std::string payload;
  int code = kSuccess;
  std::string message;
};

void emit(const RunConfig& cfg, const Outcome& outcome, std::ostream& out) {
  if (cfg.out.empty()) {
    out << outcome.payload;
  } else {
    io::write_file(cfg.out, outcome.payload);
    out << echo_block(cfg) << "# wrote " << cfg.out << '\n';
  }
}

void print_warnings(const LMReport& r, std::ostream& err, const std::string& where) {
  for (const auto& w : r.warnings) err << "warning" << where << ": " << w << '\n';
}

Outcome cmd_sample(const RunConfig& cfg) {
  io::SampleFile file;
  file.side = cfg.side;
  file.samples = draw_configurations(cfg.alpha, cfg.side, cfg.samples, cfg.thin, cfg.mc);
  std::ostringstream os;
  io::write_samples(os, file);
  return {os.str(), kSuccess, {}};
}

Outcome cmd_estimate(const RunConfig& cfg, std::ostream& err) {
  const io::SampleFile file = io::load_samples(cfg.input);
  if (cfg.exact_provider && file.side > ExactEnumerator::kMaxSide) {
    throw ConfigError("the exact provider enumerates lattices up to side 4; the sample file has side " +
                      std::to_string(file.side));
  }
  const auto n = static_cast<double>(file.samples.size());
  Vector8 mean = Vector8::Zero();
  Matrix8 second = Matrix8::Zero();
  for (const SpinLattice& lat : file.samples) {
    const Vector8 psi = evaluate_basis(lat);
    mean += psi;
    second += psi * psi.transpose();
  }
  mean /= n;
  MomentTarget target;
  target.mean = mean;
  if (file.samples.size() > 1) {
    const Matrix8 cov = (second - n * mean * mean.transpose()) / (n - 1.0);
    target.mean_cov = cov / n;
    target.std_error = target.mean_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  }

  const MomentProvider provider = cfg.exact_provider ? exact_provider(file.side) : monte_carlo_provider(file.side, cfg.mc);
  const LMReport report = solve(provider, target, cfg.alpha0, cfg.lm);
  print_warnings(report, err, "");

  std::ostringstream os;
  if (cfg.format == "json") {
    Json j = envelope(cfg);
    Json r = Json::object();
    r["side"] = file.side;
    r["samples"] = file.samples.size();
    r["target_mean"] = to_json(target.mean);
    r["target_std_error"] = to_json(target.std_error);
    r["report"] = report_json(report);
    j["result"] = std::move(r);
    os << j.dump(2) << '\n';
  } else {
    io::CsvWriter csv(os);
    echo_comments(csv, cfg);
    csv.comment("termination=" + std::string(to_string(report.termination)));
    csv.comment("alpha=" + io::format_vector(report.alpha_final));
    csv.comment("alpha_std_error=" + io::format_vector(report.alpha_std_error));
    csv.comment("estimator_std_error=" +
                io::format_vector(report.estimator_cov.diagonal().cwiseMax(0.0).cwiseSqrt().eval()));
    std::vector<std::string> header = {"iteration", "lambda", "condition_number", "error", "accepted"};
    for (auto& h : alpha_header()) header.push_back(h);
    csv.row(header);
    for (std::size_t i = 0; i < report.error_trace.size(); ++i) {
      std::vector<std::string> row = {std::to_string(i)};
      if (i == 0) {
        row.insert(row.end(), {"", ""});
      } else {
        row.push_back(io::format_double(report.lambda_trace[i - 1]));
        row.push_back(io::format_double(report.condition_trace[i - 1]));
      }
      row.push_back(io::format_double(report.error_trace[i]));
      row.push_back(i == 0 ? "" : format_bool(report.accepted[i - 1]));
      for (auto& a : alpha_fields(report.alpha_trace[i])) row.push_back(a);
      csv.row(row);
    }
  }
  Outcome o{os.str(), kSuccess, {}};
  if (!report.converged) {
    o.code = kNumericalError;
    o.message = std::string("solver did not converge: termination=") + to_string(report.termination);
  }
  return o;
}

Json flow_json(const RGFlowRecord& rec) {
  Json j = Json::object();
  j["temperature"] = rec.temperature;
  j["complete"] = rec.complete;
  j["failure"] = rec.failure;
  Json levels = Json::array();
  for (std::size_t s = 0; s < rec.alphas.size(); ++s) {
    Json l = Json::object();
    l["step"] = s;
    l["side"] = rec.sides[s];
    l["M2"] = rec.m2[s];
    l["M2_std_error"] = rec.m2_std_error[s];
    l["alpha"] = to_json(rec.alphas[s]);
    if (s > 0) {
      l["seed"] = rec.seeds[s - 1];
      l["report"] = report_json(rec.reports[s - 1]);
    }
    levels.push_back(std::move(l));
  }
  j["levels"] = std::move(levels);
  return j;
}

Outcome cmd_flow(const RunConfig& cfg, std::ostream& err) {
  const std::vector<RGFlowRecord> reps = flow_replicas(*cfg.temperature, cfg.side, cfg.steps, flow_options(cfg));
  bool complete = true;
  std::string failure;
  for (std::size_t r = 0; r < reps.size(); ++r) {
    for (std::size_t s = 0; s < reps[r].reports.size(); ++s) {
      print_warnings(reps[r].reports[s], err,
                     " (replica " + std::to_string(r) + ", step " + std::to_string(s + 1) + ")");
    }
    if (complete && !reps[r].complete) {
      complete = false;
      failure = "replica " + std::to_string(r) + ": " + reps[r].failure;
    }
  }
  std::optional<SlopeStat> slope;
  if (complete) slope = replica_slope(reps);

  std::ostringstream os;
  if (cfg.format == "json") {
    Json j = envelope(cfg);
    Json r = Json::object();
    r["slope"] = slope ? Json(slope->slope) : Json(nullptr);
    r["slope_std_error"] = slope ? Json(slope->std_error) : Json(nullptr);
    Json list = Json::array();
    for (const auto& rec : reps) list.push_back(flow_json(rec));
    r["replicas"] = std::move(list);
    j["result"] = std::move(r);
    os << j.dump(2) << '\n';
  } else {
    io::CsvWriter csv(os);
    echo_comments(csv, cfg);
    csv.comment(complete ? "status=complete" : "status=failed: " + failure);
    if (slope) {
      csv.comment("slope=" + io::format_double(slope->slope));
      csv.comment("slope_std_error=" + io::format_double(slope->std_error));
    }
    std::vector<std::string> header = {"step", "M2"};
    for (auto& h : alpha_header()) header.push_back(h);
    header.insert(header.end(), {"iterations", "condition_number", "side", "M2_std_error", "termination", "replica"});
    csv.row(header);
    for (std::size_t r = 0; r < reps.size(); ++r) {
      const RGFlowRecord& rec = reps[r];
      for (std::size_t s = 0; s < rec.alphas.size(); ++s) {
        std::vector<std::string> row = {std::to_string(s), io::format_double(rec.m2[s])};
        for (auto& a : alpha_fields(rec.alphas[s])) row.push_back(a);
        if (s == 0) {
          row.insert(row.end(), {"0", ""});
        } else {
          const LMReport& rep = rec.reports[s - 1];
          row.push_back(std::to_string(rep.iterations));
          row.push_back(rep.condition_trace.empty() ? "" : io::format_double(rep.condition_trace.back()));
        }
        row.push_back(std::to_string(rec.sides[s]));
        row.push_back(io::format_double(rec.m2_std_error[s]));
        row.push_back(s == 0 ? "" : to_string(rec.reports[s - 1].termination));
        row.push_back(std::to_string(r));
        csv.row(row);
      }
    }
  }
  Outcome o{os.str(), kSuccess, {}};
  if (!complete) {
    o.code = kNumericalError;
    o.message = "flow failed: " + failure;
  }
  return o;
}

std::string tc_payload(const RunConfig& cfg, const TcResult& result) {
  std::ostringstream os;
  if (cfg.format == "json") {
    Json j = envelope(cfg);
    Json r = Json::object();
    r["tc"] = result.tc ? Json(*result.tc) : Json(nullptr);
    Json table = Json::array();
    for (std::size_t i = 0; i < result.temperatures.size(); ++i) {
      Json row = Json::object();
      row["temperature"] = result.temperatures[i];
      row["slope"] = result.slopes[i].slope;
      row["slope_std_error"] = result.slopes[i].std_error;
      Json list = Json::array();
      for (const auto& rec : result.flows[i]) list.push_back(flow_json(rec));
      row["replicas"] = std::move(list);
      table.push_back(std::move(row));
    }
    r["table"] = std::move(table);
    j["result"] = std::move(r);
    os << j.dump(2) << '\n';
    return os.str();
  }
  io::CsvWriter csv(os);
  echo_comments(csv, cfg);
  csv.comment("tc=" + (result.tc ? io::format_double(*result.tc) : std::string("none")));
  std::vector<std::string> header = {"temperature", "slope", "slope_std_error"};
  for (int j = 0; j <= cfg.steps; ++j) header.push_back("M2_" + std::to_string(j));
  csv.row(header);
  // M2 columns: replica means per level
  for (std::size_t i = 0; i < result.temperatures.size(); ++i) {
    std::vector<std::string> row = {io::format_double(result.temperatures[i]), io::format_double(result.slopes[i].slope),
                                    io::format_double(result.slopes[i].std_error)};
    const auto& reps = result.flows[i];
    for (std::size_t j = 0; j < reps.front().m2.size(); ++j) {
      double m = 0.0;
      for (const auto& rec : reps) m += rec.m2[j];
      row.push_back(io::format_double(m / static_cast<double>(reps.size())));
    }
    csv.row(row);
  }
  return os.str();
}

Outcome cmd_tc(const RunConfig& cfg) {
  try {
    const TcResult result = locate_tc(cfg.t_lo, cfg.t_hi, cfg.side, cfg.steps, flow_options(cfg), cfg.grid, cfg.refine);
    return {tc_payload(cfg, result), kSuccess, {}};
  } catch (const BracketError& e) {
    return {tc_payload(cfg, e.result()), kNumericalError, e.what()};
  }
}

Outcome cmd_exact(const RunConfig& cfg) {
  const ExactResult r = exact_moments(cfg.alpha, cfg.side);
  Json j = envelope(cfg);
  Json res = Json::object();
  res["log_z"] = r.log_z;
  res["mean"] = to_json(r.mean);
  res["second"] = to_json(r.second);
  res["cov"] = to_json(r.cov);
  j["result"] = std::move(res);
  return {j.dump(2) + "\n", kSuccess, {}};
}

}  // namespace

const char* to_string(Command c) {
  switch (c) {
    case Command::sample: return "sample";
    case Command::estimate: return "estimate";
    case Command::flow: return "flow";
    case Command::tc: return "tc";
    case Command::exact: return "exact";
  }
  return "unknown";
}

std::vector<std::string> keys_for(Command command) {
  std::vector<std::string> out;
  for (const KeyInfo& k : kKeys) {
    if (k.commands & bit(command)) out.emplace_back(k.name);
  }
  return out;
}

RunConfig resolve(Command command, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const KeyInfo* info = find_key(key);
    if (!info) throw ConfigError("unknown key '" + key + "'");
    if (!(info->commands & bit(command))) {
      throw ConfigError("key '" + key + "' does not apply to command '" + to_string(command) + "'");
    }
  }
  std::map<std::string, std::string> v = defaults(command);
  for (const auto& [key, value] : values) v[key] = value;
  auto has = [&](const char* key) { return values.count(key) > 0; };

  RunConfig c;
  c.command = command;
  const unsigned me = bit(command);
  c.seed = parse_u64("seed", v["seed"]);
  c.out = v["out"];

  if (me & (kSample | kFlow | kExact)) {
    if (has("temp") && has("alpha")) throw ConfigError("give either 'temp' or 'alpha', not both");
    if (has("temp")) {
      c.temperature = parse_positive("temp", v["temp"]);
      c.alpha = ising_parameters(*c.temperature);
    } else if (has("alpha")) {
      c.alpha = parse_couplings("alpha", v["alpha"]);
    } else if (command != Command::exact) {
      throw ConfigError(std::string("command '") + to_string(command) + "' needs 'temp'" +
                        (command == Command::sample ? " or 'alpha'" : ""));
    }
  }
  if (me & (kSample | kFlow | kTc | kExact)) c.side = parse_int("size", v["size"], 2, 4096);

  if (me & (kSample | kFits)) {
    c.mc.seed = c.seed;
    c.mc.chains = parse_int("chains", v["chains"], 1, 4096);
    if (me & kFits) {
      c.mc.sweeps = parse_int("sweeps", v["sweeps"], 2);
      c.mc.batches = parse_int("batches", v["batches"], 1);
      c.mc.threads = parse_int("threads", v["threads"], 0, 4096);
      c.mc.burn_in = v.count("burn-in") ? parse_int("burn-in", v["burn-in"], 0) : -1;
      c.mc.burn_in = c.mc.effective_burn_in();
    }
  }

  if (me & kFits) {
    c.lm.lambda0 = parse_positive("lambda0", v["lambda0"]);
    c.lm.streak_length = parse_int("streak", v["streak"], 1, 1000);
    c.lm.rtol = parse_positive("rtol", v["rtol"]);
    c.lm.atol = parse_positive("atol", v["atol"]);
    c.lm.max_iters = parse_int("max-iters", v["max-iters"], 1, 100000);
    c.lm.lambda_max = parse_positive("lambda-max", v["lambda-max"]);
    c.lm.noise_z = parse_real("noise-z", v["noise-z"]);
    const std::string& d = v["damping"];
    if (d == "diag") {
      c.lm.damping = Damping::diag_jtj;
    } else if (d == "identity") {
      c.lm.damping = Damping::identity;
    } else {
      bad_value("damping", d, "expected diag or identity");
    }
    const std::string& f = v["atol-form"];
    if (f == "paper") {
      c.lm.atol_form = AtolForm::paper;
    } else if (f == "normalized") {
      c.lm.atol_form = AtolForm::normalized;
    } else {
      bad_value("atol-form", f, "expected paper or normalized");
    }
    c.lm.validate();
  }

  if (me & (kFits | kExact)) {
    c.format = v["format"];
    if (c.format != "csv" && c.format != "json") bad_value("format", c.format, "expected csv or json");
    if (command == Command::exact && c.format != "json") bad_value("format", c.format, "exact results are JSON only");
  }

  switch (command) {
    case Command::sample:
      c.samples = parse_int("samples", v["samples"], 1, 100000000);
      c.thin = parse_int("thin", v["thin"], 1);
      c.mc.burn_in = parse_int("burn-in", v["burn-in"], 0);
      if (c.side < SpinLattice::kMinSide) throw ConfigError("sampling needs a lattice side of at least 4");
      // sweeps is not a sample key; keep the settings self-consistent
      c.mc.sweeps = c.mc.burn_in + 1;
      c.mc.validate();
      break;
    case Command::estimate:
      c.input = v["in"];
      if (c.input.empty()) throw ConfigError("command 'estimate' needs 'in', the sample file");
      c.alpha0 = parse_couplings("alpha0", v["alpha0"]);
      if (v["provider"] == "exact") {
        c.exact_provider = true;
      } else if (v["provider"] != "mc") {
        bad_value("provider", v["provider"], "expected mc or exact");
      }
      c.mc.validate();
      break;
    case Command::flow:
    case Command::tc:
      c.steps = parse_int("steps", v["steps"], 1, 30);
      c.multiblock = parse_bool("multiblock", v["multiblock"]);
      c.warm_start = parse_bool("warm-start", v["warm-start"]);
      c.replicas = parse_int("replicas", v["replicas"], 1, 1000);
      check_flow_sides(c.side, c.steps);
      c.mc.validate();
      if (command == Command::tc) {
        c.t_lo = parse_positive("t-lo", v["t-lo"]);
        c.t_hi = parse_positive("t-hi", v["t-hi"]);
        if (!(c.t_hi > c.t_lo)) throw ConfigError("'t-hi' must exceed 't-lo'");
        c.grid = parse_int("grid", v["grid"], 2, 10000);
        c.refine = parse_int("refine", v["refine"], 0, 100);
      }
      break;
    case Command::exact:
      if (c.side > ExactEnumerator::kMaxSide) {
        throw ConfigError("exact enumeration is limited to side 4 (2^16 configurations), got " + std::to_string(c.side));
      }
      break;
  }
  return c;
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> e;
  for (const std::string& key : keys_for(command)) {
    std::string v;
    if (key == "seed") v = std::to_string(seed);
    else if (key == "temp") {
      if (!temperature) continue;
      v = io::format_double(*temperature);
    } else if (key == "alpha") v = io::format_vector(alpha);
    else if (key == "size") v = std::to_string(side);
    else if (key == "samples") v = std::to_string(samples);
    else if (key == "thin") v = std::to_string(thin);
    else if (key == "sweeps") v = std::to_string(mc.sweeps);
    else if (key == "burn-in") v = std::to_string(mc.effective_burn_in());
    else if (key == "chains") v = std::to_string(mc.chains);
    else if (key == "batches") v = std::to_string(mc.batches);
    else if (key == "threads") v = std::to_string(mc.threads);
    else if (key == "in") v = input;
    else if (key == "alpha0") v = io::format_vector(alpha0);
    else if (key == "provider") v = exact_provider ? "exact" : "mc";
    else if (key == "steps") v = std::to_string(steps);
    else if (key == "multiblock") v = format_bool(multiblock);
    else if (key == "warm-start") v = format_bool(warm_start);
    else if (key == "replicas") v = std::to_string(replicas);
    else if (key == "t-lo") v = io::format_double(t_lo);
    else if (key == "t-hi") v = io::format_double(t_hi);
    else if (key == "grid") v = std::to_string(grid);
    else if (key == "refine") v = std::to_string(refine);
    else if (key == "lambda0") v = io::format_double(lm.lambda0);
    else if (key == "streak") v = std::to_string(lm.streak_length);
    else if (key == "rtol") v = io::format_double(lm.rtol);
    else if (key == "atol") v = io::format_double(lm.atol);
    else if (key == "max-iters") v = std::to_string(lm.max_iters);
    else if (key == "lambda-max") v = io::format_double(lm.lambda_max);
    else if (key == "damping") v = to_string(lm.damping);
    else if (key == "atol-form") v = to_string(lm.atol_form);
    else if (key == "noise-z") v = io::format_double(lm.noise_z);
    else if (key == "format") v = format;
    else if (key == "out") v = out;
    e.emplace_back(key, v);
  }
  return e;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"mlrg: moment-matching fits and block-spin renormalization of 2D Ising densities"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.\n"
      "Single-spin Metropolis decorrelates slowly near the critical temperature (T ~ 2.27);\n"
      "raise --sweeps there rather than trusting short runs.");

  struct Sub {
    Command command;
    CLI::App* app;
    std::string config;
    std::map<std::string, std::string> raw;
    std::map<std::string, bool> flags;
    std::map<std::string, CLI::Option*> options;
  };
  const std::pair<Command, const char*> commands[] = {
      {Command::sample, "write Metropolis configurations to a sample file"},
      {Command::estimate, "fit couplings to the moments of a sample file"},
      {Command::flow, "renormalization flow of the second moment at one temperature"},
      {Command::tc, "critical temperature from the sign change of the flow slope"},
      {Command::exact, "exact moments by enumeration (L <= 4)"},
  };
  std::vector<Sub> subs(std::size(commands));
  for (std::size_t i = 0; i < subs.size(); ++i) {
    Sub& s = subs[i];
    s.command = commands[i].first;
    s.app = app.add_subcommand(to_string(s.command), commands[i].second);
    s.app->add_option("--config", s.config, "flat 'key = value' file; flags override it");
    for (const KeyInfo& k : kKeys) {
      if (!(k.commands & bit(s.command))) continue;
      const std::string flag = std::string("--") + k.name;
      if (k.flag) {
        s.options[k.name] = s.app->add_flag(flag, s.flags[k.name], k.help);
      } else {
        s.options[k.name] = s.app->add_option(flag, s.raw[k.name], k.help);
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kSuccess;
    }
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  RunConfig cfg;
  try {
    const Sub* chosen = nullptr;
    for (const Sub& s : subs) {
      if (s.app->parsed()) chosen = &s;
    }
    std::map<std::string, std::string> values;
    if (!chosen->config.empty()) values = io::load_key_values(chosen->config);
    for (const auto& [name, opt] : chosen->options) {
      if (opt->count() == 0) continue;
      const KeyInfo* info = find_key(name);
      values[name] = info->flag ? "true" : chosen->raw.at(name);
    }
    cfg = resolve(chosen->command, values);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  }

  try {
    Outcome o;
    switch (cfg.command) {
      case Command::sample: o = cmd_sample(cfg); break;
      case Command::estimate: o = cmd_estimate(cfg, err); break;
      case Command::flow: o = cmd_flow(cfg, err); break;
      case Command::tc: o = cmd_tc(cfg); break;
      case Command::exact: o = cmd_exact(cfg); break;
    }
    if (cfg.command == Command::sample && cfg.out.empty()) err << echo_block(cfg);
    emit(cfg, o, out);
    if (o.code != kSuccess) err << "error: " << o.message << '\n';
    return o.code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::bad_alloc&) {
    err << "numerical error: out of memory\n";
    return kNumericalError;
  }
}

}  // namespace mlrg::cli
