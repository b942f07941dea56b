#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "hinfdae/cli.hpp"
#include "hinfdae/matrix_market.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int run_cli(std::initializer_list<std::string> args) {
  return hinfdae::cli::run(std::vector<std::string>(args));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return json::parse(in, nullptr, true, true);
}

std::string fresh_dir(const std::string& name) {
  const std::string dir = (fs::temp_directory_path() / ("hinfctl_test_" + name)).string();
  fs::remove_all(dir);
  return dir;
}

// Small unstable synthetic system with a computed margin, generated once and
// shared by the command tests below.
const std::string& synthetic_dir() {
  static std::string dir = [] {
    std::string d = fresh_dir("syn");
    REQUIRE(run_cli({"gen", "--kind", "synthetic", "--out", d, "--nv", "30", "--np", "5",
                     "--unstable", "2", "--seed", "11"}) == 0);
    REQUIRE(run_cli({"margin", "--system", d}) == 0);
    return d;
  }();
  return dir;
}

// Supercritical nonlinear toy bundle with margin and synthesized controller.
const std::string& toy_dir() {
  static std::string dir = [] {
    std::string d = fresh_dir("toy");
    REQUIRE(run_cli({"gen", "--kind", "toy", "--out", d, "--nv", "40", "--np", "6", "--re",
                     "120", "--seed", "3"}) == 0);
    REQUIRE(run_cli({"margin", "--system", d}) == 0);
    REQUIRE(run_cli({"synth", "--system", d, "--tol", "1e-3"}) == 0);
    return d;
  }();
  return dir;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("generation is deterministic across directories") {
  const std::string d1 = fresh_dir("gen1");
  const std::string d2 = fresh_dir("gen2");
  for (const std::string& d : {d1, d2})
    REQUIRE(run_cli({"gen", "--kind", "synthetic", "--out", d, "--nv", "24", "--np", "4",
                     "--seed", "5"}) == 0);
  CHECK(slurp(d1 + "/manifest.json") == slurp(d2 + "/manifest.json"));
  CHECK(slurp(d1 + "/A.mtx") == slurp(d2 + "/A.mtx"));
  CHECK(slurp(d1 + "/E.mtx") == slurp(d2 + "/E.mtx"));
}

TEST_CASE("margin command writes a complete report") {
  const std::string& d = synthetic_dir();
  json report = load_json(d + "/margin.json");
  CHECK(report.at("feasible").get<bool>());
  const double gamma = report.at("gamma").get<double>();
  CHECK(gamma > 1.0);
  CHECK(report.at("rho").get<double>() < gamma * gamma);
  CHECK(report.at("probes").is_array());
  CHECK(report.at("probes").size() >= 2);
  CHECK(report.at("provenance").at("config_hash").get<std::string>().size() == 16);

  // Solution factors are stored beside the report, sized to the plant.
  const Eigen::MatrixXd zx = hinfdae::read_matrix_market_dense(d + "/margin_x.mtx");
  const Eigen::MatrixXd zy = hinfdae::read_matrix_market_dense(d + "/margin_y.mtx");
  CHECK(zx.rows() == 30);
  CHECK(zy.rows() == 30);
  CHECK(zx.cols() == report.at("ranks").at("x").get<int>());
  CHECK(zy.cols() == report.at("ranks").at("y").get<int>());
}

TEST_CASE("synthesis writes rom, controller and certificate bundles") {
  const std::string& d = synthetic_dir();
  const std::string out = fresh_dir("synout");
  REQUIRE(run_cli({"synth", "--system", d, "--out", out, "--tol", "1e-2", "--aposteriori"}) == 0);

  for (const char* name :
       {"/rom/A.mtx", "/rom/B.mtx", "/rom/C.mtx", "/rom/W.mtx", "/rom/T.mtx", "/rom/sigma.mtx",
        "/rom/meta.json", "/controller/E.mtx", "/controller/A.mtx", "/controller/B.mtx",
        "/controller/C.mtx", "/controller/meta.json", "/certificate.json"})
    CHECK(fs::exists(out + name));

  json cert = load_json(out + "/certificate.json");
  const long long r = cert.at("r").get<long long>();
  CHECK(r >= 1);
  CHECK(cert.at("gamma").get<double>() > 1.0);
  CHECK(cert.at("eps").get<double>() >= 0.0);
  CHECK(cert.contains("apriori_ok"));
  CHECK(cert.contains("eps_hat"));  // measured because --aposteriori was given

  json kmeta = load_json(out + "/controller/meta.json");
  CHECK(kmeta.at("order").get<long long>() == r);

  const Eigen::MatrixXd sigma = hinfdae::read_matrix_market_dense(out + "/rom/sigma.mtx");
  for (Eigen::Index i = 0; i + 1 < sigma.rows(); ++i) CHECK(sigma(i, 0) >= sigma(i + 1, 0));

  // Explicit order request reproduces the threshold cut.
  const std::string out2 = fresh_dir("synout2");
  REQUIRE(run_cli({"synth", "--system", d, "--out", out2, "--order", std::to_string(r)}) == 0);
  CHECK(load_json(out2 + "/certificate.json").at("r").get<long long>() == r);

  // A looser threshold keeps no more states.
  const std::string out3 = fresh_dir("synout3");
  REQUIRE(run_cli({"synth", "--system", d, "--out", out3, "--tol", "1e-1"}) == 0);
  CHECK(load_json(out3 + "/certificate.json").at("r").get<long long>() <= r);
}

TEST_CASE("command failures map to distinct exit codes") {
  const std::string& d = synthetic_dir();

  CHECK(run_cli({"margin", "--system", fresh_dir("missing")}) == 2);
  CHECK(run_cli({"margin", "--system", d, "--no-such-flag"}) == 2);
  CHECK(run_cli({"synth", "--system", d, "--tol", "1e-2", "--order", "3"}) == 2);
  CHECK(run_cli({"synth", "--system", d}) == 2);

  const std::string bare = fresh_dir("bare");
  REQUIRE(run_cli({"gen", "--kind", "synthetic", "--out", bare, "--nv", "20", "--np", "3",
                   "--seed", "2"}) == 0);
  CHECK(run_cli({"synth", "--system", bare, "--tol", "1e-2"}) == 2);  // no margin yet
  CHECK(run_cli({"margin", "--system", bare, "--gamma-max", "1.0001"}) == 3);
}

TEST_CASE("pipeline stabilizes the toy flow where the open loop grows") {
  const std::string& d = toy_dir();
  const std::string trace_path = d + "/trace.csv";

  CHECK(run_cli({"simulate", "--plant", d, "--t-end", "200", "--amp", "1e-3", "--window-hi",
                 "50", "--trace", trace_path}) == 0);

  json verdict = load_json(d + "/verdict.json");
  CHECK(verdict.at("stabilized").get<bool>());
  CHECK(verdict.at("constraint_drift").get<double>() < 1e-8);

  std::vector<std::string> lines = lines_of(slurp(trace_path));
  REQUIRE(lines.size() == 20003);  // comment + header + 20001 samples
  CHECK(lines[0].rfind("# hinfctl", 0) == 0);
  CHECK(lines[1] == "t,y1,y2,u1,u2");
  CHECK(lines[2].rfind("0,", 0) == 0);

  CHECK(run_cli({"simulate", "--plant", d, "--open-loop", "--t-end", "200", "--amp", "1e-3",
                 "--window-hi", "50", "--verdict", d + "/verdict_open.json"}) == 4);
  CHECK_FALSE(load_json(d + "/verdict_open.json").at("stabilized").get<bool>());
}

TEST_CASE("sweep emits the certification grid") {
  const std::string& d = toy_dir();
  const std::string csv = d + "/sweep.csv";
  REQUIRE(run_cli({"sweep", "--plant", d, "--out", csv, "--ells", "1", "--tols", "1e-2,1e-4",
                   "--t-end", "100", "--amp", "1e-3"}) == 0);

  std::vector<std::string> lines = lines_of(slurp(csv));
  REQUIRE(lines.size() == 4);  // comment + header + 2 cells
  CHECK(lines[1] == "ell,tol,r,stabilized,eps,eps_hat,delta_norm,apriori_ok,aposteriori_ok,robcov_ok");

  long long prev_r = 0;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    std::istringstream row(lines[i]);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 10);
    const long long r = std::stoll(cells[2]);
    CHECK(r >= prev_r);  // tols shrink along the rows
    prev_r = r;
    const bool stabilized = cells[3] == "1";
    const bool certified = cells[7] == "1" && cells[9] == "1";
    if (certified) CHECK(stabilized);
  }
}
