// mcflab: run, resume and inspect experiments.
// Exit codes: 0 all assertions pass (or run interrupted on request), 1 assertion failure, 2 error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <limits>

#include "mcflab/experiment.hpp"

using namespace mcflab;

namespace {

ExperimentConfig with_overrides(const ExperimentConfig& base, const std::vector<std::string>& overrides) {
  if (overrides.empty()) return base;
  auto j = to_json(base);
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

int report(const RunReport& rep) {
  std::printf("%s: %s\n", rep.config.name.c_str(), rep.status.c_str());
  for (const auto& w : rep.warnings) std::printf("  warning: %s\n", w.c_str());
  for (const auto& a : rep.assertions)
    std::printf("  %s  %s\n", a.pass ? "PASS" : "FAIL", a.detail.c_str());
  std::printf("  steps %ld accepted, %ld rejected; %.2f s\n", rep.accepted_steps, rep.rejected_steps, rep.wall_seconds);
  if (!rep.files.empty()) std::printf("  output: %s\n", rep.output_dir.c_str());
  if (rep.status == "interrupted") {
    std::printf("  resume with: mcflab resume %s/checkpoint.bin\n", rep.output_dir.c_str());
    return 0;
  }
  std::printf("%s\n", rep.pass ? "PASS" : "FAIL");
  return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean curvature flow lab"};
  app.require_subcommand(1);

  std::string path, name;
  std::vector<std::string> overrides;
  double stop_after = std::numeric_limits<double>::infinity();

  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("config", path, "config file")->required();
  run->add_option("--override", overrides, "key.path=value");
  run->add_option("--stop-after", stop_after, "interrupt the rescaled run at this s (checkpoint kept)");

  auto* pre = app.add_subcommand("preset", "run a built-in experiment");
  pre->add_option("name", name, "preset name")->required();
  pre->add_option("--override", overrides, "key.path=value");
  pre->add_option("--stop-after", stop_after, "interrupt the rescaled run at this s (checkpoint kept)");

  auto* res = app.add_subcommand("resume", "continue a run from its checkpoint");
  res->add_option("checkpoint", path, "checkpoint.bin")->required();

  auto* list = app.add_subcommand("list-presets", "show the preset catalog");
  auto* val = app.add_subcommand("validate", "check a config without running it");
  val->add_option("config", path, "config file")->required();

  auto* dump = app.add_subcommand("show-preset", "print a preset's config as JSON");
  dump->add_option("name", name, "preset name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    RunControl ctl;
    ctl.stop_after = stop_after;
    if (*run) return report(run_experiment(with_overrides(load_config(path), overrides), ctl));
    if (*pre) return report(run_experiment(with_overrides(preset(name), overrides), ctl));
    if (*res) return report(resume_experiment(path));
    if (*list) {
      for (const auto& p : list_presets()) std::printf("%-18s %s\n", p.name.c_str(), p.description.c_str());
      return 0;
    }
    if (*val) {
      const auto cfg = load_config(path);
      std::printf("%s: valid\n", cfg.name.c_str());
      return 0;
    }
    if (*dump) {
      std::cout << to_json(preset(name)).dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
