#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "mlrg/cli.hpp"
#include "mlrg/errors.hpp"
#include "mlrg/io.hpp"

using namespace mlrg;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run mlrg_run(std::vector<std::string> args) {
  args.insert(args.begin(), "mlrg");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mlrg_cli_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

const std::vector<std::string> kSmallFlow = {"--size", "16", "--steps", "2", "--sweeps", "300", "--chains", "2"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("exact command") {
  const Run r = mlrg_run({"exact", "--size", "2"});
  REQUIRE(r.code == cli::kSuccess);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["schema"] == "mlrg/v1");
  CHECK(j["command"] == "exact");
  CHECK(j["config"]["size"] == "2");
  CHECK(j["result"]["log_z"].get<double>() == doctest::Approx(std::log(16.0)).epsilon(1e-14));
  CHECK(j["result"]["mean"].size() == 8);
  CHECK(r.out.find("\"config\"") < r.out.find("\"result\""));  // echo first

  const Run t = mlrg_run({"exact", "--size", "4", "--temp", "2.5"});
  REQUIRE(t.code == cli::kSuccess);
  CHECK(t.out == mlrg_run({"exact", "--size", "4", "--temp", "2.5"}).out);
}

TEST_CASE("configuration errors exit with 2") {
  CHECK(mlrg_run({"exact", "--size", "5"}).code == cli::kConfigError);
  CHECK(mlrg_run({"exact", "--temp", "2", "--alpha", "1,0,0,0,0,0,0,0"}).code == cli::kConfigError);
  CHECK(mlrg_run({"exact", "--alpha", "1,0,0"}).code == cli::kConfigError);
  CHECK(mlrg_run({"exact", "--bogus", "1"}).code == cli::kConfigError);
  CHECK(mlrg_run({"sample"}).code == cli::kConfigError);  // no temperature
  CHECK(mlrg_run({"sample", "--temp", "-1"}).code == cli::kConfigError);
  CHECK(mlrg_run({"flow", "--temp", "2.3", "--size", "20", "--steps", "3"}).code == cli::kConfigError);
  CHECK(mlrg_run({"flow", "--temp", "2.3", "--damping", "cubic"}).code == cli::kConfigError);
  CHECK(mlrg_run({"flow", "--temp", "2.3", "--atol-form", "other"}).code == cli::kConfigError);
  CHECK(mlrg_run({"flow", "--temp", "2.3", "--rtol", "0"}).code == cli::kConfigError);
  CHECK(mlrg_run({"tc", "--t-lo", "2.4", "--t-hi", "2.2"}).code == cli::kConfigError);
  CHECK(mlrg_run({"exact", "--format", "csv"}).code == cli::kConfigError);
  CHECK(mlrg_run({}).code == cli::kConfigError);
  const Run e = mlrg_run({"exact", "--size", "5"});
  CHECK(e.out.empty());
  CHECK(e.err.find("config error") != std::string::npos);
}

TEST_CASE("help exits 0") {
  const Run r = mlrg_run({"--help"});
  CHECK(r.code == cli::kSuccess);
  CHECK(r.out.find("Exit codes") != std::string::npos);
}

TEST_CASE("sample command: format and byte-identical reruns") {
  const std::vector<std::string> args = {"sample", "--temp", "2.5", "--size", "6", "--samples", "5", "--thin", "2",
                                         "--burn-in", "50", "--seed", "9"};
  const Run a = mlrg_run(args);
  REQUIRE(a.code == cli::kSuccess);
  const auto rows = lines(a.out);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0] == "ISING-SAMPLES v1 L=6 N=5");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].size() == 36);
    CHECK(rows[i].find_first_not_of("+-") == std::string::npos);
  }
  // the echo goes to stderr so stdout stays a valid sample file
  CHECK(a.err.find("seed=9") != std::string::npos);
  CHECK(mlrg_run(args).out == a.out);
  CHECK(mlrg_run({"sample", "--temp", "2.5", "--size", "6", "--samples", "5", "--seed", "10"}).out != a.out);

  const std::string path = temp_path("samples.txt");
  const Run f = mlrg_run(with(args, {"--out", path}));
  REQUIRE(f.code == cli::kSuccess);
  CHECK(slurp(path) == a.out);
  CHECK(f.out.rfind("# mlrg sample v1", 0) == 0);
  CHECK(f.out.find("# wrote " + path) != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("config file overlaid by flags") {
  const std::string cfg = temp_path("config.txt");
  io::write_file(cfg, "# sample settings\ntemp = 2.5\nsize = 8\nsamples = 2\nburn-in = 10\n");
  const Run a = mlrg_run({"sample", "--config", cfg});
  REQUIRE(a.code == cli::kSuccess);
  CHECK(lines(a.out)[0] == "ISING-SAMPLES v1 L=8 N=2");
  const Run b = mlrg_run({"sample", "--config", cfg, "--size", "6"});
  REQUIRE(b.code == cli::kSuccess);
  CHECK(lines(b.out)[0] == "ISING-SAMPLES v1 L=6 N=2");

  io::write_file(cfg, "temp = 2.5\nsteps = 3\n");  // steps does not apply to sample
  CHECK(mlrg_run({"sample", "--config", cfg}).code == cli::kConfigError);
  io::write_file(cfg, "temp = 2.5\ncolour = red\n");
  CHECK(mlrg_run({"sample", "--config", cfg}).code == cli::kConfigError);
  std::filesystem::remove(cfg);
  CHECK(mlrg_run({"sample", "--config", cfg}).code == cli::kIoError);
}

TEST_CASE("estimate command") {
  const std::string samples = temp_path("estimate_samples.txt");
  REQUIRE(mlrg_run({"sample", "--temp", "5", "--size", "4", "--samples", "4000", "--thin", "2", "--burn-in", "100",
                    "--out", samples})
              .code == cli::kSuccess);

  SUBCASE("exact provider recovers the coupling") {
    const std::vector<std::string> args = {"estimate", "--in", samples, "--provider", "exact", "--alpha0",
                                           "0.3,0,0,0,0,0,0,0"};
    const Run a = mlrg_run(args);
    REQUIRE(a.code == cli::kSuccess);
    const auto j = nlohmann::json::parse(a.out);
    CHECK(j["command"] == "estimate");
    const auto& rep = j["result"]["report"];
    CHECK(rep["converged"] == true);
    const double a1 = rep["alpha"][0].get<double>();
    const double se1 = rep["alpha_std_error"][0].get<double>();
    CHECK(std::abs(a1 - 0.4) < 4.0 * se1 + 1e-9);
    CHECK(rep["condition_trace"].size() == rep["iterations"].get<std::size_t>());
    CHECK(mlrg_run(args).out == a.out);
  }
  SUBCASE("csv trace") {
    const Run c = mlrg_run({"estimate", "--in", samples, "--provider", "exact", "--format", "csv"});
    REQUIRE(c.code == cli::kSuccess);
    const auto rows = lines(c.out);
    CHECK(rows[0] == "# mlrg estimate v1");
    std::size_t h = 0;
    while (h < rows.size() && rows[h][0] == '#') ++h;
    REQUIRE(h < rows.size());
    const auto header = io::csv_split(rows[h]);
    CHECK(header[0] == "iteration");
    CHECK(header[2] == "condition_number");
    CHECK(header.size() == 13);
    CHECK(c.out.find('\r') == std::string::npos);
  }
  SUBCASE("errors") {
    CHECK(mlrg_run({"estimate", "--in", temp_path("missing.txt")}).code == cli::kIoError);
    CHECK(mlrg_run({"estimate"}).code == cli::kConfigError);  // no input
    const std::string bad = temp_path("bad_samples.txt");
    io::write_file(bad, "ISING-SAMPLES v1 L=4 N=2\n++++++++++++++++\n");
    CHECK(mlrg_run({"estimate", "--in", bad}).code == cli::kIoError);
    std::filesystem::remove(bad);
  }
  std::filesystem::remove(samples);
}

TEST_CASE("flow command") {
  const auto args = with({"flow", "--temp", "2.3", "--replicas", "1"}, kSmallFlow);
  const Run a = mlrg_run(args);
  REQUIRE(a.code == cli::kSuccess);
  const auto rows = lines(a.out);
  REQUIRE(!rows.empty());
  CHECK(rows[0] == "# mlrg flow v1");
  CHECK(a.out.find("# temp=2.3") != std::string::npos);
  CHECK(a.out.find("# slope=") != std::string::npos);
  CHECK(a.out.find("# slope_std_error=") != std::string::npos);
  std::size_t h = 0;
  while (rows[h][0] == '#') ++h;
  const auto header = io::csv_split(rows[h]);
  CHECK(header[0] == "step");
  CHECK(header[1] == "M2");
  CHECK(header[2] == "alpha_1");
  CHECK(header[11] == "condition_number");
  CHECK(header.back() == "replica");
  REQUIRE(rows.size() == h + 4);
  const auto first = io::csv_split(rows[h + 1]);
  CHECK(std::stod(first[1]) == doctest::Approx(2.0 / 2.3));
  for (int s = 1; s <= 2; ++s) {
    const auto row = io::csv_split(rows[h + 1 + static_cast<std::size_t>(s)]);
    CHECK(std::stoi(row[0]) == s);
    CHECK(std::stod(row[11]) > 1.0);
    CHECK(row.back() == "0");
  }
  CHECK(mlrg_run(args).out == a.out);

  const Run j = mlrg_run(with(args, {"--format", "json"}));
  REQUIRE(j.code == cli::kSuccess);
  const auto doc = nlohmann::json::parse(j.out);
  CHECK(doc["result"]["replicas"].size() == 1);
  CHECK(doc["result"]["replicas"][0]["levels"].size() == 3);
  CHECK(doc["result"]["slope_std_error"].get<double>() > 0.0);

  SUBCASE("replicas") {
    const Run r = mlrg_run(with({"flow", "--temp", "2.3", "--replicas", "3"}, kSmallFlow));
    REQUIRE(r.code == cli::kSuccess);
    const auto rr = lines(r.out);
    std::size_t hh = 0;
    while (rr[hh][0] == '#') ++hh;
    REQUIRE(rr.size() == hh + 1 + 3 * 3);
    CHECK(io::csv_split(rr.back()).back() == "2");
    // replica 0 is the single flow
    CHECK(rr[hh + 2] == rows[h + 2]);
    CHECK(r.out.find("# replicas=3") != std::string::npos);
    CHECK(mlrg_run({"flow", "--temp", "2.3", "--replicas", "0"}).code == cli::kConfigError);
  }
}

TEST_CASE("tc command reports a missing bracket with exit 3") {
  const auto args = with({"tc", "--t-lo", "1.0", "--t-hi", "1.2", "--grid", "2"}, kSmallFlow);
  const Run a = mlrg_run(args);
  CHECK(a.code == cli::kNumericalError);
  CHECK(a.err.find("[1, 1.2]") != std::string::npos);
  CHECK(a.out.find("# tc=none") != std::string::npos);
  CHECK(mlrg_run(args).out == a.out);
}

TEST_CASE("output file errors exit with 4") {
  CHECK(mlrg_run({"exact", "--size", "2", "--out", "/nonexistent/dir/out.json"}).code == cli::kIoError);
}
