#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "genselect/harness/config.hpp"
#include "genselect/harness/dataset.hpp"
#include "genselect/harness/pipeline.hpp"
#include "genselect/harness/report.hpp"
#include "genselect/judge_sim.hpp"

namespace gs = genselect;
namespace h = genselect::harness;

namespace {

constexpr int kFailure = 125;

struct RunFlags {
  std::string config;
  std::string dataset;
  std::string replay_dir;
  std::string capture_dir;
  std::string base_url;
  std::string model;
  std::string output;
  std::string judge;
  bool live = false;
  std::optional<double> judge_p;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> problems_width;
  std::optional<std::size_t> repeats;
  std::optional<std::size_t> arity;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("-c,--config", f.config, "JSON config file");
  cmd->add_option("-d,--dataset", f.dataset, "JSONL dataset")->required()->check(CLI::ExistingFile);
  cmd->add_option("--replay-dir", f.replay_dir, "serve model calls from this fixture directory");
  cmd->add_flag("--live", f.live, "call the chat-completions endpoint");
  cmd->add_option("--base-url", f.base_url, "endpoint base URL, e.g. http://host:8000/v1");
  cmd->add_option("--model", f.model, "model name sent to the endpoint");
  cmd->add_option("--capture-dir", f.capture_dir, "also save every model result as a fixture");
  cmd->add_option("-o,--output", f.output, "output directory");
  cmd->add_option("--judge", f.judge, "judge mode")->check(CLI::IsMember({"model", "scripted"}));
  cmd->add_option("--judge-p", f.judge_p, "scripted judge accuracy")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("-m,--samples", f.samples, "generations per problem");
  cmd->add_option("-j,--jobs", f.problems_width, "problems processed concurrently");
  cmd->add_option("-k,--repeats", f.repeats, "GenSelect repeats (replaces configured selectors)");
  cmd->add_option("-n,--arity", f.arity, "GenSelect arity (with --repeats)");
}

h::ExperimentConfig resolve(const RunFlags& f) {
  auto c = f.config.empty() ? h::config_from_json(nlohmann::json::object())
                            : h::load_config(f.config);
  if (!f.replay_dir.empty()) {
    c.backend.kind = h::BackendConfig::Kind::Replay;
    c.backend.replay_dir = f.replay_dir;
  }
  if (f.live) c.backend.kind = h::BackendConfig::Kind::Live;
  if (!f.base_url.empty()) c.backend.base_url = f.base_url;
  if (!f.model.empty()) c.backend.model = f.model;
  if (!f.capture_dir.empty()) c.backend.capture_dir = f.capture_dir;
  if (!f.output.empty()) c.output_dir = f.output;
  if (f.judge == "model") c.judge.mode = h::JudgeConfig::Mode::Model;
  if (f.judge == "scripted") c.judge.mode = h::JudgeConfig::Mode::Scripted;
  if (f.judge_p) c.judge.scripted.judge_p = c.judge.scripted.verifier_p = *f.judge_p;
  if (f.samples) c.generation.samples = *f.samples;
  if (f.problems_width) c.concurrency.problems = *f.problems_width;
  if (f.repeats) {
    h::GenSelectSelector g;
    g.repeats = *f.repeats;
    if (f.arity) g.arity = *f.arity;
    c.selectors.genselect = {g};
  } else if (f.arity) {
    for (auto& g : c.selectors.genselect) g.arity = *f.arity;
  }
  c.validate();
  return c;
}

int finish(const h::Experiment::Output& out, const std::filesystem::path& dir) {
  h::persist(dir, out);
  if (!out.metrics.methods.empty()) {
    std::cout << h::table_markdown(h::build_table({out.metrics}));
  }
  std::cout << "problems: " << out.metrics.problems
            << "  quarantined: " << out.metrics.quarantined.size()
            << "  records: " << out.records.size() << "  -> " << dir.string() << "\n";
  for (const auto& q : out.metrics.quarantined) std::cerr << "quarantined " << q << "\n";
  return static_cast<int>(std::min<std::size_t>(out.metrics.quarantined.size(), 100));
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoul(item));
  }
  return out;
}

gs::sim::SimResult read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw gs::Error("cannot open " + path.string());
  gs::sim::SimResult r;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[7];
    for (auto& x : f) std::getline(ss, x, ',');
    gs::sim::ArityResult row;
    row.arity = std::stoul(f[0]);
    row.trials = std::stoul(f[1]);
    row.correct = std::stoul(f[2]);
    row.accuracy = std::stod(f[3]);
    row.standard_error = std::stod(f[4]);
    row.mean_comparisons = std::stod(f[5]);
    row.mean_rounds = std::stod(f[6]);
    r.rows.push_back(row);
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knockout-tournament answer selection over sampled solutions"};
  app.require_subcommand(1);

  RunFlags gen_flags, sel_flags, pipe_flags;
  auto* generate = app.add_subcommand("generate", "sample candidate solutions only");
  add_run_flags(generate, gen_flags);

  auto* select = app.add_subcommand("select", "run selectors over recorded generations");
  add_run_flags(select, sel_flags);
  std::string pool_records;
  select->add_option("-r,--records", pool_records, "records.jsonl holding the generations")
      ->required()
      ->check(CLI::ExistingFile);

  auto* pipeline = app.add_subcommand("pipeline", "generate, select and score end to end");
  add_run_flags(pipeline, pipe_flags);

  gs::sim::SimConfig sim;
  std::string arities = "2,4,8,16";
  std::string split_sizes;
  std::string sim_format = "markdown";
  std::string sim_out;
  double judge_p = 1.0;
  bool uniform = false;
  std::size_t distractors = 3;
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo tournament study");
  simulate->add_option("-m,--candidates", sim.candidates, "candidates per problem")
      ->capture_default_str();
  simulate->add_option("-n,--arities", arities, "comma-separated arities")->capture_default_str();
  simulate->add_option("-q,--accuracy", sim.candidate_accuracy, "candidate accuracy")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  simulate->add_option("-p,--judge-p", judge_p, "judge accuracy")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  simulate->add_flag("--uniform", uniform, "judge picks uniformly at random");
  simulate->add_option("-t,--trials", sim.trials, "trials per arity")->capture_default_str();
  simulate->add_option("-s,--seed", sim.seed, "seed")->capture_default_str();
  simulate->add_option("--threads", sim.threads, "worker threads")->capture_default_str();
  simulate->add_option("--budget-split", split_sizes,
                       "comma-separated pool sizes: majority over 2M vs GenSelect@M");
  simulate->add_option("--distractors", distractors, "distinct wrong answers (budget split)")
      ->capture_default_str();
  simulate->add_option("-f,--format", sim_format, "output format")
      ->check(CLI::IsMember({"markdown", "csv"}))
      ->capture_default_str();
  simulate->add_option("-o,--output", sim_out, "write the table here instead of stdout");

  std::vector<std::string> metric_files;
  std::string report_dir = "report";
  std::string sweep_csv;
  auto* report = app.add_subcommand("report", "tables from one or more metrics.json files");
  report->add_option("metrics", metric_files, "metrics.json files")->check(CLI::ExistingFile);
  report->add_option("-o,--output", report_dir, "report directory")->capture_default_str();
  report->add_option("--sweep", sweep_csv, "simulate CSV to append")->check(CLI::ExistingFile);

  std::string fixture_records, fixture_dir;
  auto* fixtures = app.add_subcommand("fixtures", "turn a records.jsonl into replay fixtures");
  fixtures->add_option("records", fixture_records, "records.jsonl")
      ->required()
      ->check(CLI::ExistingFile);
  fixtures->add_option("-o,--output", fixture_dir, "fixture directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      auto cfg = resolve(gen_flags);
      const auto items = h::load_dataset(gen_flags.dataset);
      h::Experiment exp(cfg);
      return finish(exp.run_generation(items), cfg.output_dir);
    }
    if (*select) {
      auto cfg = resolve(sel_flags);
      const auto items = h::load_dataset(sel_flags.dataset);
      h::Experiment exp(cfg);
      return finish(exp.run_selection(items, h::read_records(pool_records)), cfg.output_dir);
    }
    if (*pipeline) {
      auto cfg = resolve(pipe_flags);
      const auto items = h::load_dataset(pipe_flags.dataset);
      h::Experiment exp(cfg);
      return finish(exp.run_pipeline(items), cfg.output_dir);
    }
    if (*simulate) {
      sim.judge = uniform ? gs::JudgeModel::uniform() : gs::JudgeModel::scripted(judge_p);
      std::string text;
      if (!split_sizes.empty()) {
        gs::sim::BudgetSplitConfig b;
        b.candidate_accuracy = sim.candidate_accuracy;
        b.judge = sim.judge;
        b.sizes = parse_list(split_sizes);
        b.trials = sim.trials;
        b.seed = sim.seed;
        b.distractors = distractors;
        const auto rows = gs::sim::budget_split_study(b);
        text = sim_format == "csv" ? gs::sim::to_csv(rows) : gs::sim::to_markdown(rows);
      } else {
        sim.arities = parse_list(arities);
        const auto result = gs::sim::simulate(sim);
        text = sim_format == "csv" ? gs::sim::to_csv(result) : gs::sim::to_markdown(result);
      }
      if (sim_out.empty()) {
        std::cout << text;
      } else {
        h::write_text(sim_out, text);
      }
      return 0;
    }
    if (*report) {
      std::vector<h::Metrics> runs;
      for (const auto& f : metric_files) runs.push_back(h::read_metrics(f));
      std::optional<gs::sim::SimResult> sweep;
      if (!sweep_csv.empty()) sweep = read_sweep_csv(sweep_csv);
      if (runs.empty() && !sweep) throw gs::Error("nothing to report");
      const auto files = h::emit_report(runs, report_dir, sweep);
      std::cout << "wrote " << files.markdown.string() << " and " << files.csv.string() << "\n";
      return 0;
    }
    if (*fixtures) {
      const auto records = h::read_records(fixture_records);
      gs::ReplayStore store(fixture_dir);
      std::cout << "wrote " << gs::export_fixtures(records, store) << " fixtures to "
                << fixture_dir << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return 0;
}
