#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "vcoadc/linear_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("vcosim_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int vcosim(const std::string& args) {
  const std::string cmd = std::string(VCOSIM_PATH) + " " + args + " 2>" + (scratch() / "stderr.txt").string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const char* kSmall = R"({
  "oversampling": 256, "warmup_samples": 256,
  "vco": {"noise": {"white_frac_density": 1e-8}},
  "stimulus": {"kind": "tone", "tones": [{"amplitude_dbv": -20, "frequency_hz": 3000}]},
  "analysis": {"nfft": 2048, "n_avg": 2},
  "sweep": {"levels_dbv": [-40, -20], "frequencies_hz": [3000, 12000], "n_avg": 1}
})";

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("run writes trace, spectrum and metrics, reproducibly") {
  const fs::path cfg = write_file("small.json", kSmall);
  const fs::path a = scratch() / "run_a", b = scratch() / "run_b";
  REQUIRE(vcosim("run --config " + cfg.string() + " --out " + a.string()) == 0);
  REQUIRE(vcosim("run --config " + cfg.string() + " --out " + b.string()) == 0);
  for (const char* f : {"trace.csv", "spectrum.csv", "metrics.json", "config.json"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto trace = lines(slurp(a / "trace.csv"));
  REQUIRE(trace.size() == 2 + 4096u);
  CHECK(trace[0].rfind("# vcosim ", 0) == 0);
  CHECK(trace[0].find("config_hash=") != std::string::npos);
  CHECK(trace[1] == "n,dout,wp,wn");
  CHECK(lines(slurp(a / "spectrum.csv"))[1] == "freq_hz,psd_db");

  const json m = json::parse(slurp(a / "metrics.json"));
  CHECK(m.at("lock").at("locked").get<bool>());
  CHECK(m.contains("sndr_dba"));
  CHECK(m.contains("slope_db_per_dec"));

  // a different seed changes the noisy trace
  const fs::path c = scratch() / "run_c";
  REQUIRE(vcosim("run --config " + cfg.string() + " --out " + c.string() + " --seed 5") == 0);
  CHECK(slurp(a / "trace.csv") != slurp(c / "trace.csv"));
}

TEST_CASE("sweeps do not depend on the job count") {
  const fs::path cfg = write_file("small.json", kSmall);
  for (const char* exp : {"sweep-amp", "sweep-freq"}) {
    CAPTURE(exp);
    const fs::path a = scratch() / (std::string(exp) + "_1"), b = scratch() / (std::string(exp) + "_2");
    REQUIRE(vcosim(std::string(exp) + " --config " + cfg.string() + " --out " + a.string() + " --jobs 1") == 0);
    REQUIRE(vcosim(std::string(exp) + " --config " + cfg.string() + " --out " + b.string() + " --jobs 2") == 0);
    for (const auto& e : fs::directory_iterator(a)) CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
  }
  const auto amp = lines(slurp(scratch() / "sweep-amp_1" / "sweep_amp.csv"));
  CHECK(amp[1] == "level_dbv,snr_dba,sndr_dba,thd_pct,locked");
  CHECK(amp.size() == 4u);
  CHECK(lines(slurp(scratch() / "sweep-freq_1" / "stf.csv"))[1] == "freq_hz,gain_db,h3_dbc");
}

TEST_CASE("ntf.csv is the closed form") {
  const fs::path out = scratch() / "ntf";
  REQUIRE(vcosim("ntf --out " + out.string()) == 0);
  const auto rows = lines(slurp(out / "ntf.csv"));
  REQUIRE(rows.size() > 100u);
  for (std::size_t i = 2; i < rows.size(); ++i) {
    double f = 0, db = 0;
    REQUIRE(std::sscanf(rows[i].c_str(), "%lf,%lf", &f, &db) == 2);
    CHECK(db == doctest::Approx(vcoadc::ntf_magnitude(1.6e6, 3.072e6, f)).epsilon(1e-8));
  }
}

TEST_CASE("configuration errors exit with 2 and leave nothing behind") {
  const fs::path bad = write_file("bad.json", R"({"fs_hz": 3.072e6,)");
  const fs::path out = scratch() / "bad_out";
  CHECK(vcosim("run --config " + bad.string() + " --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));
  CHECK(slurp(scratch() / "stderr.txt").find("config error") != std::string::npos);

  CHECK(vcosim("warp --out " + out.string()) == 2);
  CHECK(vcosim("run --config " + (scratch() / "missing.json").string() + " --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));

  const fs::path typo = write_file("typo.json", R"({"word_bit": 6})");
  CHECK(vcosim("run --config " + typo.string() + " --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("compare refuses a reference configuration with another fs") {
  write_file("ref_fs.json", R"({"fs_hz": 2.048e6, "oversampling": 1024})");
  const fs::path cfg = write_file("cmp.json", R"({"compare": {"reference_config": "ref_fs.json"}})");
  const fs::path out = scratch() / "cmp_out";
  CHECK(vcosim("compare --config " + cfg.string() + " --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("an existing output directory is replaced") {
  const fs::path out = scratch() / "replace";
  fs::create_directories(out);
  std::ofstream(out / "stale.txt") << "old";
  REQUIRE(vcosim("stf --out " + out.string()) == 0);
  CHECK_FALSE(fs::exists(out / "stale.txt"));
  CHECK(fs::exists(out / "stf_model.csv"));
}
