// atpo: train and analyze adaptive-step-selection policy optimization for a
// toy masked-denoising language model.
//
// Exit codes: 0 success, 2 usage/config, 3 io, 4 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "atpo/analysis.hpp"
#include "atpo/parallel.hpp"
#include "atpo/rl.hpp"
#include "atpo/sampler.hpp"
#include "atpo/selection.hpp"
#include "atpo/trace_io.hpp"

namespace fs = std::filesystem;
using namespace atpo;

namespace {

int exit_code_of(const Error& e) {
  switch (e.code()) {
    case Err::IoError:
    case Err::ParseError: return 3;
    case Err::NumericFailure: return 4;
    default: return 2;
  }
}

std::string zero_padded(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

int cmd_generate_data(const std::string& task_name, int count, int length, std::uint64_t seed,
                      const std::string& out) {
  const Vocab vocab = Vocab::standard();
  const TaskId task = parse_task(task_name);
  const auto instances = generate_instances(task, 0, count, length, seed, vocab);
  write_dataset(out, instances, vocab, length, seed);
  std::cout << "wrote " << instances.size() << " instances to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, int workers,
              int trace_every) {
  const TrainConfig cfg = load_config(config_path);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, Err::IoError, "cannot create '" + out_dir + "'");

  {
    std::ofstream echo((fs::path(out_dir) / "config.json").string());
    require(echo.good(), Err::IoError, "cannot write config echo");
    echo << config_to_json(cfg) << "\n";
  }

  std::ofstream run_log((fs::path(out_dir) / "run.jsonl").string());
  std::ofstream timing_log((fs::path(out_dir) / "timings.jsonl").string());
  require(run_log.good() && timing_log.good(), Err::IoError, "cannot open run logs");

  Trainer trainer(cfg, workers);

  auto eval_record = [&](int iteration, const IterationMetrics* m) {
    RunRecord r;
    r.iteration = iteration;
    if (m) {
      r.mean_reward = m->mean_reward;
      r.loss = m->loss;
      r.mean_kl = m->mean_kl;
      r.boundaries = m->boundaries;
      r.entropy_mean = m->entropy_mean;
      r.entropy_max = m->entropy_max;
      r.roec_mean = m->roec_mean;
      r.roec_max = m->roec_max;
    }
    return r;
  };

  // baseline eval before any update
  EvalResult eval = trainer.evaluate(cfg.eval_count);
  RunRecord first = eval_record(0, nullptr);
  first.eval_reward = eval.mean_reward;
  first.eval_exact = eval.exact_rate;
  append_line(run_log, run_record_to_line(first));
  run_log.flush();

  for (int i = 1; i <= cfg.iterations; ++i) {
    const IterationMetrics m = trainer.run_iteration();
    RunRecord r = eval_record(i, &m);
    const bool eval_now =
        (cfg.eval_every > 0 && i % cfg.eval_every == 0) || i == cfg.iterations;
    if (eval_now) {
      eval = trainer.evaluate(cfg.eval_count);
      r.eval_reward = eval.mean_reward;
      r.eval_exact = eval.exact_rate;
    }
    append_line(run_log, run_record_to_line(r));
    run_log.flush();
    append_line(timing_log, timing_to_line(trainer.last_timings()));
    timing_log.flush();

    if (trace_every > 0 && i % trace_every == 0) {
      const fs::path dir = fs::path(out_dir) / "traces";
      fs::create_directories(dir, ec);
      require(!ec, Err::IoError, "cannot create trace directory");
      write_traces((dir / ("iter_" + zero_padded(i, 6) + ".jsonl")).string(),
                   trainer.last_traces());
    }
    if (cfg.checkpoint_every > 0 && i % cfg.checkpoint_every == 0) {
      save_checkpoint((fs::path(out_dir) / ("ckpt_" + zero_padded(i, 6) + ".ckpt")).string(),
                      trainer.params(), cfg.seed);
    }
  }

  save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), trainer.params(), cfg.seed);
  std::cout << "final_eval_reward " << fmt_double(eval.mean_reward) << "\n";
  std::cout << "final_eval_exact " << fmt_double(eval.exact_rate) << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& task_name, int count, bool greedy,
             int steps, std::uint64_t seed, double temperature, int workers) {
  const auto [params, meta] = load_checkpoint(checkpoint);
  const Vocab vocab = Vocab::standard();
  require(meta.dims.vocab == vocab.size(), Err::BadConfig,
          "checkpoint vocabulary size " + std::to_string(meta.dims.vocab) +
              " does not match the expected " + std::to_string(vocab.size()));
  const TaskId task = parse_task(task_name);
  require(meta.dims.prompt_len == task_prompt_len(task), Err::BadConfig,
          "checkpoint prompt length does not fit task '" + task_name + "'");

  const int T = steps > 0 ? steps : meta.dims.completion_len;
  require(T <= meta.dims.completion_len, Err::BadConfig, "steps cannot exceed L");

  const auto instances =
      generate_instances(task, Trainer::kEvalBase, count, meta.dims.completion_len, seed, vocab);
  const ParamSnapshot snap{params, SnapshotLabel::Current};

  std::vector<double> rewards(static_cast<std::size_t>(count));
  std::vector<char> exact(static_cast<std::size_t>(count));
  parallel_for(count, workers, [&](int i) {
    const TaskInstance& inst = instances[static_cast<std::size_t>(i)];
    DecodeSpec spec;
    spec.T = T;
    spec.L = meta.dims.completion_len;
    spec.greedy = greedy;
    spec.temperature = temperature;
    spec.seed = seed;
    spec.prompt_id = inst.id;
    const RolloutTrace tr = rollout(snap, inst.prompt, spec);
    rewards[static_cast<std::size_t>(i)] = reward(inst, tr.final_tokens);
    exact[static_cast<std::size_t>(i)] = is_correct(inst, tr.final_tokens) ? 1 : 0;
  });
  double mean = 0.0, hits = 0.0;
  for (int i = 0; i < count; ++i) {
    mean += rewards[static_cast<std::size_t>(i)];
    hits += exact[static_cast<std::size_t>(i)];
  }
  std::cout << "mean_reward " << fmt_double(mean / count) << "\n";
  std::cout << "exact_rate " << fmt_double(hits / count) << "\n";
  return 0;
}

int cmd_select(const std::string& curves_path, int n, const std::string& policy_str,
               double sigma_mult) {
  const DifficultyCurves curves = read_curves(curves_path);
  const SelectionPolicy policy = parse_policy(policy_str);
  const SegmentPlan plan = select_plan(policy, curves, n, sigma_mult);
  for (std::size_t i = 0; i < plan.boundaries.size(); ++i) {
    if (i) std::cout << ' ';
    std::cout << plan.boundaries[i];
  }
  std::cout << "\n";
  return 0;
}

int cmd_analyze_outcome(const std::string& traces_path, const std::string& out_prefix) {
  const std::vector<RolloutTrace> traces = read_traces(traces_path);
  const OutcomeCurves oc = outcome_curves(traces);
  auto emit = [&](const char* name, const std::optional<DifficultyCurves>& curves) {
    const std::string path = out_prefix + name + ".csv";
    if (curves) {
      write_curves(path, *curves);
    } else {
      std::ofstream out(path);
      require(out.good(), Err::IoError, "cannot open '" + path + "'");
      out << "step,mean_entropy,mean_inv_margin,roec\n";
    }
  };
  emit("correct", oc.correct);
  emit("incorrect", oc.incorrect);
  std::cout << "correct " << oc.correct_count << "\n";
  std::cout << "incorrect " << oc.incorrect_count << "\n";
  return 0;
}

int cmd_analyze_compare(const std::vector<std::string>& log_paths, const std::string& out) {
  std::vector<std::vector<RunRecord>> logs;
  std::vector<std::string> labels;
  for (const std::string& path : log_paths) {
    logs.push_back(read_run_log(path));
    labels.push_back(fs::path(path).stem().string());
  }
  const RunComparison cmp = compare_runs(logs, labels);
  const std::string csv = comparison_to_csv(cmp);
  if (out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream file(out);
    require(file.good(), Err::IoError, "cannot open '" + out + "'");
    file << csv;
  }
  return 0;
}

int cmd_analyze_overhead(const std::string& adaptive_path, const std::string& uniform_path) {
  auto load = [](const std::string& path) {
    try {
      return read_timings(path);
    } catch (const Error& e) {
      if (e.code() == Err::IoError) {
        fail(Err::MissingTimings, "timing log '" + path + "' is missing");
      }
      throw;
    }
  };
  const std::vector<PhaseTimings> adaptive = load(adaptive_path);
  const std::vector<PhaseTimings> uniform = load(uniform_path);
  std::cout << overhead_to_text(selection_overhead(adaptive, uniform));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive trajectory policy optimization on toy denoising tasks"};
  app.require_subcommand(1);

  // generate-data
  std::string gen_task = "copy", gen_out = "dataset.tsv";
  int gen_count = 100, gen_length = 16;
  std::uint64_t gen_seed = 1;
  auto* gen = app.add_subcommand("generate-data", "write a dataset file");
  gen->add_option("--task", gen_task, "copy | sort | sum")->required();
  gen->add_option("--count", gen_count, "number of instances");
  gen->add_option("--length", gen_length, "completion length L");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output path")->required();

  // train
  std::string train_config, train_out = "run";
  int train_workers = 1, train_trace_every = 0;
  auto* train = app.add_subcommand("train", "run the training loop");
  train->add_option("--config", train_config, "JSON training config")->required();
  train->add_option("--out-dir", train_out, "output directory")->required();
  train->add_option("--workers", train_workers, "rollout/scoring worker threads");
  train->add_option("--trace-every", train_trace_every, "dump rollout traces every k iterations");

  // eval
  std::string eval_ckpt, eval_task = "copy";
  int eval_count = 200, eval_steps = 0, eval_workers = 1;
  bool eval_greedy = false;
  std::uint64_t eval_seed = 1;
  double eval_temperature = 1.0;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on held-out instances");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--task", eval_task, "copy | sort | sum")->required();
  eval->add_option("--count", eval_count, "held-out instances");
  eval->add_flag("--greedy", eval_greedy, "greedy decoding");
  eval->add_option("--steps", eval_steps, "denoising steps (default: L)");
  eval->add_option("--seed", eval_seed, "instance/sampling seed");
  eval->add_option("--temperature", eval_temperature, "sampling temperature");
  eval->add_option("--workers", eval_workers, "worker threads");

  // select
  std::string sel_curves, sel_policy = "hybrid";
  int sel_n = 4;
  double sel_sigma_mult = 1.0;
  auto* sel = app.add_subcommand("select", "run a step-selection policy on a curves file");
  sel->add_option("--curves", sel_curves, "curves CSV path")->required();
  sel->add_option("--n", sel_n, "target segment count N");
  sel->add_option("--policy", sel_policy, "uniform | roec | cm | hybrid");
  sel->add_option("--sigma-mult", sel_sigma_mult, "RoEC threshold multiplier");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "analysis reports");
  analyze->require_subcommand(1);

  std::string oc_traces, oc_prefix = "outcome_";
  auto* oc = analyze->add_subcommand("outcome-curves", "split difficulty curves by outcome");
  oc->add_option("--traces", oc_traces, "trace file")->required();
  oc->add_option("--out-prefix", oc_prefix, "output path prefix");

  std::vector<std::string> cmp_logs;
  std::string cmp_out;
  auto* cmp = analyze->add_subcommand("compare", "align eval rewards of several runs");
  cmp->add_option("logs", cmp_logs, "run log paths")->required()->expected(-1);
  cmp->add_option("--out", cmp_out, "output CSV (default stdout)");

  std::string ovh_adaptive, ovh_uniform;
  auto* ovh = analyze->add_subcommand("overhead", "adaptive vs uniform wall-time ratio");
  ovh->add_option("--adaptive", ovh_adaptive, "adaptive timing log")->required();
  ovh->add_option("--uniform", ovh_uniform, "uniform timing log")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_generate_data(gen_task, gen_count, gen_length, gen_seed, gen_out);
    if (train->parsed()) return cmd_train(train_config, train_out, train_workers, train_trace_every);
    if (eval->parsed()) {
      return cmd_eval(eval_ckpt, eval_task, eval_count, eval_greedy, eval_steps, eval_seed,
                      eval_temperature, eval_workers);
    }
    if (sel->parsed()) return cmd_select(sel_curves, sel_n, sel_policy, sel_sigma_mult);
    if (oc->parsed()) return cmd_analyze_outcome(oc_traces, oc_prefix);
    if (cmp->parsed()) return cmd_analyze_compare(cmp_logs, cmp_out);
    if (ovh->parsed()) return cmd_analyze_overhead(ovh_adaptive, ovh_uniform);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_of(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
