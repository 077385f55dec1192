// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every subcommand takes --config <file> --seed <n>
// --out <dir> and writes result.json, table.csv and log.jsonl to <dir>.
// Failures print one JSON error record to stderr (and <dir>/error.json when
// possible) and exit nonzero.

#include "sdt/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kInvalid = 2, kFormat = 3, kIo = 4 };

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

json read_json(const fs::path& path) {
  try {
    return json::parse(sdt::detail::read_file(path));
  } catch (const json::parse_error& e) {
    throw sdt::FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

sdt::ExperimentConfig experiment_config(const Args& a) {
  sdt::ExperimentConfig cfg;
  if (!a.config.empty()) cfg = sdt::load_experiment_config(a.config);
  if (a.seed) cfg.seeds = {*a.seed};
  cfg.validate();
  return cfg;
}

void write_timing(const fs::path& out, const std::vector<sdt::ExperimentResult>& rows) {
  json t = json::object();
  for (const auto& r : rows) t[r.label] = r.wall_clock_seconds;
  sdt::detail::write_file(out / "timing.json", t.dump(2) + "\n");
}

int synth_gen(const Args& a) {
  json j = a.config.empty() ? json::object() : read_json(a.config);
  sdt::GeneratorConfig gen;
  sdt::CorpusCounts counts;
  try {
    if (j.contains("generator")) gen = j["generator"].get<sdt::GeneratorConfig>();
    if (j.contains("counts")) counts = j["counts"].get<sdt::CorpusCounts>();
  } catch (const json::exception& e) {
    throw sdt::InvalidArgument(std::string("config: ") + e.what());
  }
  if (a.seed) gen.seed = *a.seed;
  const fs::path out = a.out;
  const auto corpus = sdt::generate_synthetic(gen, counts);
  sdt::write_corpus(corpus, gen.num_classes, out);
  auto frames = [](const std::vector<sdt::PairedRecording>& v) {
    std::int64_t n = 0;
    for (const auto& p : v) n += p.exo.features.frames();
    return n;
  };
  json summary = {{"train_source", {{"recordings", corpus.train.size()}, {"frames", frames(corpus.train)}}},
                  {"adapt_pair", {{"recordings", corpus.adapt.size()}, {"frames", frames(corpus.adapt)}}},
                  {"test_target", {{"recordings", corpus.test.size()}, {"frames", frames(corpus.test)}}}};
  json result = {{"command", "synth-gen"},
                 {"config", {{"generator", gen}, {"counts", counts}}},
                 {"corpus", summary},
                 {"manifest", "manifest.json"}};
  sdt::detail::write_file(out / "result.json", result.dump(2) + "\n");
  std::string csv = "role,recordings,frames\n";
  for (const char* role : {"train_source", "adapt_pair", "test_target"})
    csv += std::string(role) + "," + summary[role]["recordings"].dump() + "," + summary[role]["frames"].dump() + "\n";
  sdt::detail::write_file(out / "table.csv", csv);
  sdt::detail::write_file(out / "log.jsonl", "");
  return kOk;
}

int experiment(const std::string& command, const Args& a) {
  const sdt::ExperimentConfig cfg = experiment_config(a);
  const fs::path out = a.out;
  fs::create_directories(out / "checkpoints");
  sdt::Lab lab(cfg);
  lab.set_checkpoint_dir(out / "checkpoints");

  if (command == "retrieve") {
    const auto rows = lab.retrieval(cfg.retrieval_k);
    sdt::emit_retrieval_report(json(cfg), rows, lab.log(), out);
    return kOk;
  }

  std::vector<sdt::ExperimentResult> rows;
  if (command == "train-teacher") {
    rows.push_back(lab.run_oracle(false));
  } else if (command == "distill") {
    rows.push_back(lab.run_no_adaptation());
    rows.push_back(lab.run_distillation(cfg.distill));
  } else if (command == "adapt-baseline") {
    rows.push_back(lab.run_no_adaptation());
    rows.push_back(lab.run_baseline_adaptation(cfg.adapt));
  } else if (command == "eval") {
    rows.push_back(lab.run(cfg.task));
  } else if (command == "ablate-pairs") {
    rows = lab.ablate_pair_amounts(cfg.fractions);
  } else if (command == "ablate-drops") {
    rows = lab.ablate_drop_rates(cfg.drop_rates);
  } else if (command == "ablate-layers") {
    rows = lab.ablate_layer_sets(cfg.layer_sets);
  } else {
    throw sdt::InvalidArgument("unknown command " + command);
  }
  sdt::emit_report(command, json(cfg), rows, lab.log(), out);
  write_timing(out, rows);
  return kOk;
}

/// Concatenates the rows of several result.json files into one table.
int report(const Args& a) {
  SDT_REQUIRE(!a.config.empty(), "report: --config with an \"inputs\" list is required");
  const fs::path cfg_path = a.config;
  const json j = read_json(cfg_path);
  SDT_REQUIRE(j.contains("inputs") && j["inputs"].is_array() && !j["inputs"].empty(),
              "report: config needs a non-empty \"inputs\" array");
  std::vector<sdt::ExperimentResult> rows;
  json sources = json::array();
  for (const auto& in : j["inputs"]) {
    fs::path p = in.get<std::string>();
    sources.push_back(p.generic_string());
    if (p.is_relative()) p = cfg_path.parent_path() / p;
    const auto r = sdt::load_result_rows(p);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  sdt::emit_report("report", json{{"inputs", sources}}, rows, {}, a.out);
  return kOk;
}

int dispatch(const std::string& command, const Args& a) {
  if (command == "synth-gen") return synth_gen(a);
  if (command == "report") return report(a);
  return experiment(command, a);
}

void write_error(const Args& a, const std::string& type, const std::string& message,
                 std::optional<std::uint64_t> offset) {
  json err = {{"error", {{"type", type}, {"message", message}}}};
  if (offset) err["error"]["offset"] = *offset;
  std::cerr << err.dump() << std::endl;
  if (a.out.empty()) return;
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (!ec) {
    try {
      sdt::detail::write_file(fs::path(a.out) / "error.json", err.dump(2) + "\n");
    } catch (...) {
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exo-to-ego distillation laboratory for temporal action segmentation"};
  app.require_subcommand(1);
  Args args;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth-gen", "Generate a synthetic paired corpus"},
      {"train-teacher", "Train exo teachers and evaluate them on test_source"},
      {"distill", "Distill teachers into ego students"},
      {"adapt-baseline", "Adapt teachers with a competitor loss"},
      {"eval", "Run the task named in the config"},
      {"ablate-pairs", "Distillation with fractions of the adaptation pairs"},
      {"ablate-drops", "Distillation with randomly dropped frames"},
      {"ablate-layers", "Distillation at different decoder layer sets"},
      {"retrieve", "Segment retrieval probe with raw and adapted ego features"},
      {"report", "Merge result.json files into one table"},
  };
  std::uint64_t seed = 0;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", args.config, "JSON config file");
    sub->add_option("--seed", seed, "Run a single seed instead of the config's seed list");
    sub->add_option("--out", args.out, "Output directory")->required();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    write_error(args, "usage", e.what(), std::nullopt);
    return kInvalid;
  }
  std::string command;
  for (auto* sub : app.get_subcommands()) {
    command = sub->get_name();
    if (sub->count("--seed") > 0) args.seed = seed;
  }
  // Checked after parsing so the error record lands in --out.
  if (!args.config.empty() && !fs::is_regular_file(args.config)) {
    write_error(args, "usage", "--config: file does not exist: " + args.config, std::nullopt);
    return kInvalid;
  }
  try {
    return dispatch(command, args);
  } catch (const sdt::FormatError& e) {
    write_error(args, "format_error", e.what(), e.offset());
    return kFormat;
  } catch (const sdt::IoError& e) {
    write_error(args, "io_error", e.what(), std::nullopt);
    return kIo;
  } catch (const fs::filesystem_error& e) {
    write_error(args, "io_error", e.what(), std::nullopt);
    return kIo;
  } catch (const sdt::InvalidArgument& e) {
    write_error(args, "invalid_argument", e.what(), std::nullopt);
    return kInvalid;
  } catch (const std::exception& e) {
    write_error(args, "internal", e.what(), std::nullopt);
    return kInternal;
  }
}
