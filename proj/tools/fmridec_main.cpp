// Command-line front end: synth | prepare | train | decode | evaluate | ablate.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fmridec/errors.hpp"
#include "fmridec/runner.hpp"

using namespace fmridec;

namespace {

RunConfig load_config(const std::string& config_path,
                      const std::vector<std::string>& overrides) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config, "--set expects key=value, got '" + kv + "'");
    cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "fmridec: decode text from fMRI windows with a prompt-conditioned language model.\n"
      "Pretrained LM weights referenced by lm.pretrained_path resolve under "
      "$FMRIDEC_CACHE_DIR when relative."};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic corpus");
  run::SynthArgs synth_args;
  synth_cmd->add_option("--out", synth_args.out_root, "corpus root directory")->required();
  synth_cmd->add_option("--subject", synth_args.subject, "subject id");
  synth_cmd->add_option("--vocab", synth_args.vocab, "vocabulary size");
  synth_cmd->add_option("--stories", synth_args.stories, "number of stories");
  synth_cmd->add_option("--words", synth_args.words_per_story, "words per story");
  synth_cmd->add_option("--voxels", synth_args.voxels, "voxel count");
  synth_cmd->add_option("--tr", synth_args.tr_seconds, "repetition time (s)");
  synth_cmd->add_option("--window", synth_args.window_seconds, "window length (s)");
  synth_cmd->add_option("--noise", synth_args.noise_sigma, "gaussian noise sigma");
  synth_cmd->add_option("--rate", synth_args.words_per_second, "words per second");
  synth_cmd->add_option("--seed", synth_args.seed, "generator seed");

  // prepare
  auto* prepare_cmd = app.add_subcommand("prepare", "window a corpus and persist the split");
  std::string root, subject, split_out, config_path;
  std::vector<std::string> test_stories, overrides;
  prepare_cmd->add_option("--root", root, "corpus root directory")->required();
  prepare_cmd->add_option("--subject", subject, "subject id")->required();
  prepare_cmd->add_option("--test-story", test_stories, "held-out story id (repeatable)")
      ->required();
  prepare_cmd->add_option("--out", split_out, "split manifest path")->required();
  prepare_cmd->add_option("--config", config_path, "config file");
  prepare_cmd->add_option("--set", overrides, "config override key=value (repeatable)");

  // train
  auto* train_cmd = app.add_subcommand("train", "run training stage 1 or 2");
  int stage = 0;
  std::string split_path, ckpt_out, stage1_ckpt;
  train_cmd->add_option("--stage", stage, "1 (text teacher) or 2 (brain encoder)")
      ->required();
  train_cmd->add_option("--split", split_path, "split manifest path")->required();
  train_cmd->add_option("--out", ckpt_out, "checkpoint output path")->required();
  train_cmd->add_option("--stage1-ckpt", stage1_ckpt, "stage-1 checkpoint (stage 2 only)");
  train_cmd->add_option("--config", config_path, "config file");
  train_cmd->add_option("--set", overrides, "config override key=value (repeatable)");

  // decode
  auto* decode_cmd = app.add_subcommand("decode", "decode windows with a trained model");
  run::DecodeArgs decode_args;
  std::string strategy = "alignment";
  decode_cmd->add_option("--ckpt", decode_args.checkpoint, "stage-2 checkpoint")->required();
  decode_cmd->add_option("--split", decode_args.split, "split manifest path")->required();
  decode_cmd->add_option("--strategy", strategy, "alignment | wordrate")
      ->check(CLI::IsMember({"alignment", "wordrate"}));
  decode_cmd->add_flag("--train-subset", decode_args.decode_train_subset,
                       "decode the training windows instead of the held-out ones");
  decode_cmd->add_option("--out", decode_args.out_path, "decode results path (json lines)")
      ->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score decode results");
  std::string results_path, report_out, format = "table";
  eval_cmd->add_option("--results", results_path, "decode results path")->required();
  eval_cmd->add_option("--split", split_path, "split manifest path")->required();
  eval_cmd->add_option("--out", report_out, "report output path (default: stdout)");
  eval_cmd->add_option("--format", format, "table | json-lines")
      ->check(CLI::IsMember({"table", "json-lines"}));
  eval_cmd->add_option("--config", config_path, "config file");
  eval_cmd->add_option("--set", overrides, "config override key=value (repeatable)");

  // ablate
  auto* ablate_cmd = app.add_subcommand(
      "ablate", "run the contrastive and fine-tune grids over both inference strategies");
  std::string work_dir;
  std::vector<uint64_t> seeds;
  bool skip_finetune = false, skip_contrastive = false;
  ablate_cmd->add_option("--split", split_path, "split manifest path")->required();
  ablate_cmd->add_option("--work-dir", work_dir, "directory for grid artifacts")->required();
  ablate_cmd->add_option("--seeds", seeds, "seeds (repeatable; default 1 2 3)");
  ablate_cmd->add_flag("--no-finetune-grid", skip_finetune, "skip the fine-tune grid");
  ablate_cmd->add_flag("--no-contrastive-grid", skip_contrastive,
                       "skip the contrastive grid");
  ablate_cmd->add_option("--config", config_path, "config file");
  ablate_cmd->add_option("--set", overrides, "config override key=value (repeatable)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      run::cmd_synth(synth_args);
      std::cout << "wrote corpus under " << synth_args.out_root << "/"
                << synth_args.subject << "\n";
    } else if (prepare_cmd->parsed()) {
      const RunConfig cfg = load_config(config_path, overrides);
      const auto manifest = run::cmd_prepare(root, subject, test_stories, cfg, split_out);
      std::cout << "split " << manifest.split_hash << " -> " << split_out << "\n";
    } else if (train_cmd->parsed()) {
      const RunConfig cfg = load_config(config_path, overrides);
      const auto result = run::cmd_train(stage, cfg, split_path, ckpt_out, stage1_ckpt);
      std::cout << "stage " << stage << " final loss " << result.final_loss << " -> "
                << result.checkpoint_path << "\n";
    } else if (decode_cmd->parsed()) {
      decode_args.strategy =
          strategy == "alignment" ? StopStrategy::alignment : StopStrategy::wordrate;
      const auto results = run::cmd_decode(decode_args);
      std::cout << "decoded " << results.size() << " windows -> " << decode_args.out_path
                << "\n";
    } else if (eval_cmd->parsed()) {
      run::EvaluateArgs ea;
      ea.results_path = results_path;
      ea.split_path = split_path;
      ea.cfg = load_config(config_path, overrides);
      ea.format = format == "table" ? run::ReportFormat::table : run::ReportFormat::json_lines;
      ea.out_path = report_out;
      run::cmd_evaluate(ea);
    } else if (ablate_cmd->parsed()) {
      run::AblateArgs aa;
      aa.cfg = load_config(config_path, overrides);
      aa.split_path = split_path;
      if (!seeds.empty()) aa.seeds = seeds;
      aa.contrastive_grid = !skip_contrastive;
      aa.finetune_grid = !skip_finetune;
      aa.work_dir = work_dir;
      const auto report = run::cmd_ablate(aa);
      std::cout << report.table;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
