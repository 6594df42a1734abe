#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "emad/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early malicious address detection pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<double> dtsa_theta;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "root seed (overrides the config)");
  app.add_option("--out", out, "artifact directory")->capture_default_str();
  app.add_option("--dtsa-theta", dtsa_theta, "importance fraction kept by feature selection");

  std::vector<std::string> names;
  for (const char* n : {"synth", "ingest", "paths", "features", "select", "segment", "train", "predict", "eval", "report"})
    names.emplace_back(n);
  for (const auto& n : names) app.add_subcommand(n, "run the " + n + " stage");
  app.add_subcommand("all", "run every stage, synthesizing data when none exists");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    auto cfg = config_path.empty() ? emad::PipelineConfig{} : emad::load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.synth.seed = *seed;
    }
    if (dtsa_theta) {
      if (!(*dtsa_theta > 0.0 && *dtsa_theta < 1.0)) throw emad::UsageError("--dtsa-theta must lie in (0,1)");
      cfg.dtsa.theta = *dtsa_theta;
    }
    const auto* sub = app.get_subcommands().front();
    if (sub->get_name() == "all")
      emad::run_all(cfg, out);
    else
      emad::run_stage(*emad::parse_stage(sub->get_name()), cfg, out);
  } catch (const emad::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const emad::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const emad::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
