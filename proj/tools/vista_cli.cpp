// vista: run and compare PnP / ViSTA-PnP reconstruction experiments.
//
//   vista run --config exp.json [--output-dir DIR] [--algorithm.gamma 1.5 ...]
//   vista compare --config a.json --config b.json [--output-dir DIR]
//   vista show-config --config exp.json [--field.path value ...]
//
// Exit codes: 0 success (diverged runs included), 2 config error, 3 I/O
// error, 1 any other failure.

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "vista/experiment.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Turns leftover "--a.b value" / "--a.b=value" arguments into overrides.
Overrides parse_overrides(const std::vector<std::string>& extras) {
  Overrides out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3)
      throw vista::ConfigError("unexpected argument '" + arg + "'");
    const std::string body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
      continue;
    }
    if (i + 1 >= extras.size()) throw vista::ConfigError("override " + arg + " needs a value");
    out.emplace_back(body, extras[++i]);
  }
  return out;
}

void print_summary(const vista::RunReport& report) {
  for (const auto& run : report.runs) {
    const auto& s = run.summary;
    std::printf("%s: peak %.2f dB @ %zu, asymptotic %.2f dB @ %zu%s%s -> %s\n", run.image.c_str(),
                s.peak_psnr, s.peak_iter, s.asymptotic_psnr, s.asymptotic_iter,
                s.diverged ? " [diverged]" : "", s.bridge_failed ? " [bridge failed]" : "",
                run.output_dir.string().c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PnP image reconstruction with viscosity stabilization"};
  app.require_subcommand(1);

  std::string run_config, run_output;
  auto* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("-c,--config", run_config, "Experiment config (JSON)")->required();
  run->add_option("-o,--output-dir", run_output, "Override output_dir");
  run->allow_extras();

  std::vector<std::string> compare_configs;
  std::string compare_output = "compare_out";
  auto* cmp = app.add_subcommand("compare", "Run several configs and tabulate peak/asymptotic PSNR");
  cmp->add_option("-c,--config", compare_configs, "Experiment configs")->required();
  cmp->add_option("-o,--output-dir", compare_output, "Directory for runs and the table");
  cmp->allow_extras();

  std::string show_config;
  auto* show = app.add_subcommand("show-config", "Print the validated, fully defaulted config");
  show->add_option("-c,--config", show_config, "Experiment config (JSON)")->required();
  show->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) {
      vista::ExperimentConfig cfg = vista::load_config(run_config, parse_overrides(run->remaining()));
      if (!run_output.empty()) cfg.output_dir = run_output;
      print_summary(vista::run_experiment(cfg));
    } else if (*cmp) {
      const Overrides overrides = parse_overrides(cmp->remaining());
      std::vector<vista::ExperimentConfig> configs;
      for (const auto& path : compare_configs) configs.push_back(vista::load_config(path, overrides));
      const auto rows = vista::compare(configs, compare_output);
      std::cout << vista::compare_text(rows);
    } else if (*show) {
      const vista::ExperimentConfig cfg = vista::load_config(show_config, parse_overrides(show->remaining()));
      std::cout << vista::to_json(cfg).dump(2) << '\n';
    }
  } catch (const vista::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const vista::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
