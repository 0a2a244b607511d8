// Command-line driver: `umtpara <stage> --config <path> [options]`.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "umtpara/error.hpp"
#include "umtpara/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kMissing = 3, kRuntime = 4 };

std::string stage_list() {
  std::string s;
  for (const char* name : umtpara::pipeline::kStages) {
    if (!s.empty()) s += ", ";
    s += name;
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  namespace pl = umtpara::pipeline;

  CLI::App app{"Paraphrase generation via unsupervised translation between topic clusters"};
  std::string stage;
  std::string config_path;
  std::string out_dir;
  std::string profile_name;
  std::string axis;
  std::optional<std::uint64_t> seed;
  app.add_option("stage", stage, "one of: " + stage_list())->required();
  app.add_option("-c,--config", config_path, "INI config file")->required();
  app.add_option("-o,--out", out_dir, "output directory (overrides UMTPARA_OUT and run.out)");
  app.add_option("-s,--seed", seed, "global seed");
  app.add_option("-p,--profile", profile_name, "default profile: paper or desk");
  app.add_option("-a,--axis", axis, "ablation axis for the ablate stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (!pl::is_stage(stage)) throw umtpara::ConfigError("stage", "unknown stage '" + stage + "' (" + stage_list() + ")");
    std::optional<pl::Profile> profile;
    if (!profile_name.empty()) profile = pl::parse_profile(profile_name);
    auto config = pl::load_config(config_path, profile);
    if (!out_dir.empty()) {
      config.out_dir = out_dir;
    } else if (const char* env = std::getenv("UMTPARA_OUT"); env != nullptr && *env != '\0') {
      config.out_dir = env;
    }
    if (seed) config.seed = *seed;
    if (!axis.empty()) config.ablate_axis = axis;

    const auto summary = pl::run_stage(stage, config);
    std::cout << summary.dump(2) << "\n";
    return kOk;
  } catch (const umtpara::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const umtpara::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
