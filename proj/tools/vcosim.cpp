// vcosim <experiment> --config <path> --out <dir> [--seed S] [--jobs J]

#include <CLI11.hpp>

#include <iostream>
#include <thread>

#include "vcoadc/experiments.hpp"
#include "vcoadc/kernels.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Behavioural simulator for VCO-based sigma-delta ADCs"};
  app.set_version_flag("--version", vcoadc::kToolVersion);

  vcoadc::RunManifest m;
  std::string config;
  std::uint64_t seed = 0;
  std::string isa;
  app.add_option("experiment", m.experiment, "run | sweep-amp | sweep-freq | ntf | stf | compare | higher-order")
      ->required()
      ->check(CLI::IsMember(vcoadc::experiment_names()));
  app.add_option("--config,-c", config, "JSON configuration (schema 1); built-in defaults if omitted");
  app.add_option("--out,-o", m.out_dir, "output directory (replaced atomically)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--jobs,-j", m.jobs, "parallel simulations for sweeps")
      ->default_val(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--isa", isa, "force kernel ISA")->check(CLI::IsMember({"scalar", "avx2"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  m.config_path = config;
  if (*seed_opt) m.seed = seed;
  if (!isa.empty()) {
    try {
      vcoadc::kernels::select(isa == "avx2" ? vcoadc::kernels::Isa::avx2 : vcoadc::kernels::Isa::scalar);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    }
  }
  return vcoadc::run_experiment(m, std::cerr);
}
