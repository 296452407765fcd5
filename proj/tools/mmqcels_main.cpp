// Copyright 2026 The mmqcels Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmqcels/bench.hpp"
#include "mmqcels/estimator.hpp"
#include "mmqcels/qpe.hpp"
#include "mmqcels/rng.hpp"
#include "mmqcels/sampling.hpp"
#include "mmqcels/spectrum.hpp"

namespace {

using namespace mmqcels;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// For `bench`, a "preset" field pulls in the canned configuration and the
// user file is merge-patched on top (RFC 7386: null removes a key).
ExperimentConfig load_config(const std::string& path, bool merge_preset) {
  const std::string text = read_file(path);
  if (!merge_preset) return parse_experiment_config(text);
  nlohmann::json user;
  try {
    user = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& err) {
    throw std::invalid_argument(std::string("config: ") + err.what());
  }
  if (!user.is_object() || !user.contains("preset"))
    return parse_experiment_config(text);
  if (!user.at("preset").is_string())
    throw std::invalid_argument("config: preset has the wrong type");
  nlohmann::json merged =
      nlohmann::json::parse(preset_config_text(user.at("preset")));
  merged.merge_patch(user);
  return parse_experiment_config(merged.dump());
}

// Empty path means stdout.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    if (!std::cout) throw std::runtime_error("failed writing to stdout");
    return;
  }
  write_csv(path, text);
}

int cmd_spectrum(const ExperimentConfig& config) {
  emit(config.out, spectrum_to_json(realize_spectrum(config.source)) + "\n");
  return 0;
}

int cmd_generate(const ExperimentConfig& config) {
  const Spectrum spectrum = realize_spectrum(config.source);
  const TimeDensity density =
      make_time_density(config.sampling.t, config.sampling.gamma);
  const MeasurementMode mode = config.sampling.exact
                                   ? MeasurementMode::kExact
                                   : MeasurementMode::kSingleShot;
  const Dataset dataset =
      generate_dataset(spectrum, density, config.sampling.n, config.seed, mode);
  emit(config.out, dataset_to_jsonl(dataset));
  return 0;
}

int cmd_estimate(const ExperimentConfig& config) {
  const Spectrum spectrum = realize_spectrum(config.source);
  const SpectrumStats stats = spectrum_stats(spectrum, config.source.dominant);
  const Schedule schedule = build_schedule(stats, config.epsilon, config.eta,
                                           config.zeta, config.schedule);
  const MmqcelsResult result = mm_qcels(spectrum, config.k_modes, schedule,
                                        config.seed, config.mode);
  emit(config.out, estimate_to_json(result) + "\n");
  return 0;
}

int cmd_qpe(const ExperimentConfig& config) {
  const Spectrum spectrum = realize_spectrum(config.source);
  if (config.source.dominant.count() < 1)
    throw std::invalid_argument("qpe: source.dominant must list the target modes");
  const double lambda1 =
      spectrum.eigenvalues[config.source.dominant.indices.front()];
  std::vector<BenchRecord> rows;
  for (int trial = 0; trial < config.trials; ++trial) {
    const std::uint64_t trial_seed =
        config.seed ^ static_cast<std::uint64_t>(trial);
    for (int d = config.qpe.ancilla_min; d <= config.qpe.ancilla_max; ++d) {
      QpeConfig qpe;
      qpe.ancillas = d;
      qpe.repetitions = config.qpe.repetitions;
      // Same stream keys as the bench rows, so the sweeps coincide.
      const std::uint64_t row_seed =
          RngStream::mix(trial_seed, 64 + static_cast<std::uint64_t>(d));
      const double depth = std::ldexp(1.0, d) - 1.0;
      BenchRecord row;
      row.method = BenchRecord::Method::kQpe;
      row.trial = trial;
      row.seed = row_seed;
      row.t_max = depth;
      row.t_total = depth * config.qpe.repetitions;
      row.error = qpe_trial_error(spectrum, lambda1, qpe, config.qpe.dither,
                                  row_seed);
      row.err_mode1 = row.error;
      row.err_mode2 = std::numeric_limits<double>::quiet_NaN();
      rows.push_back(row);
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const BenchRecord& a, const BenchRecord& b) {
              if (a.t_max != b.t_max) return a.t_max < b.t_max;
              return a.trial < b.trial;
            });
  emit(config.out, records_to_csv(rows));
  return 0;
}

int cmd_landscape(const ExperimentConfig& config) {
  const LandscapeResult result = run_landscape(config);
  const std::string prefix = config.out.empty() ? "landscape" : config.out;
  write_csv(prefix + "_minimizers.csv", landscape_minimizers_csv(result));
  write_csv(prefix + "_slices.csv", landscape_slices_csv(result));
  return 0;
}

int cmd_bench(const ExperimentConfig& config) {
  if (config.preset == "landscape_tfim") return cmd_landscape(config);
  const std::vector<BenchRecord> rows =
      config.preset == "wrong_k" || config.preset == "small_pmin"
          ? run_robustness(config)
          : run_figure3(config);
  emit(config.out, records_to_csv(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MM-QCELS simulation and benchmarking toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"spectrum", "build a model or inline spectrum and print it as JSON"},
      {"generate", "draw a Hadamard-test dataset (JSON lines)"},
      {"estimate", "one multi-level MM-QCELS run (JSON)"},
      {"qpe", "QPE baseline sweep over the ancilla range (CSV)"},
      {"landscape", "loss-landscape sweep (minimizers + slices CSV)"},
      {"bench", "figure presets and custom benchmark sweeps (CSV)"},
  };
  for (const auto& [name, description] : commands) {
    CLI::App* sub = app.add_subcommand(name, description);
    sub->add_option("--config", config_path, "JSON experiment config")
        ->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out, "override the config output path");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  const CLI::App* active = app.get_subcommands().front();
  const std::string command = active->get_name();
  try {
    ExperimentConfig config = load_config(config_path, command == "bench");
    if (active->count("--seed") > 0) config.seed = seed;
    if (active->count("--out") > 0) config.out = out;
    if (command == "spectrum") return cmd_spectrum(config);
    if (command == "generate") return cmd_generate(config);
    if (command == "estimate") return cmd_estimate(config);
    if (command == "qpe") return cmd_qpe(config);
    if (command == "landscape") return cmd_landscape(config);
    return cmd_bench(config);
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  }
}
