#include "fmridec/runner.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "fmridec/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fmridec::run {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t seed, uint64_t tag) { return splitmix64(seed ^ splitmix64(tag)); }

// component seed tags
constexpr uint64_t kTagLm = 0x1a;
constexpr uint64_t kTagMapper = 0x2b;
constexpr uint64_t kTagEncoder = 0x3c;
constexpr uint64_t kTagStage1 = 0x4d;
constexpr uint64_t kTagStage2 = 0x5e;

}  // namespace

GptLm build_backend(const RunConfig& cfg, int vocab) {
  GptConfig gc;
  gc.vocab = vocab;
  gc.d_model = cfg.lm_dim;
  gc.layers = cfg.lm_layers;
  gc.heads = cfg.lm_heads;
  gc.max_seq = cfg.lm_max_seq;
  gc.init_seed = mix_seed(cfg.seed, kTagLm);
  return GptLm(gc, cfg.lm_trainable);
}

namespace {

nn::PromptMapperConfig mapper_arch(const RunConfig& cfg, int input_dim) {
  nn::PromptMapperConfig mc;
  mc.input_dim = input_dim;
  mc.width = cfg.mapper_width;
  mc.layers = cfg.mapper_layers;
  mc.heads = cfg.mapper_heads;
  mc.k = cfg.prompt_k;
  mc.d_lm = cfg.lm_dim;
  mc.max_input_len = cfg.mapper_max_input_len;
  return mc;
}

}  // namespace

MappingNetwork build_mapper(const RunConfig& cfg) {
  std::mt19937_64 rng(mix_seed(cfg.seed, kTagMapper));
  return MappingNetwork(mapper_arch(cfg, cfg.features_dim), rng);
}

FmriEncoder build_encoder(const RunConfig& cfg, int voxels) {
  std::mt19937_64 rng(mix_seed(cfg.seed, kTagEncoder));
  return FmriEncoder(mapper_arch(cfg, voxels), rng);
}

TextFeatureExtractor build_extractor(const RunConfig& cfg) {
  TextEncoderConfig tc;
  tc.dim = cfg.features_dim;
  tc.layers = cfg.features_layers;
  tc.heads = cfg.features_heads;
  tc.seed = cfg.features_seed;
  return TextFeatureExtractor(tc);
}

namespace {

void mix_bytes(uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

std::string hex64(uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Architecture keys that must agree between a stage-1 checkpoint and the
// stage-2 run consuming it.
const char* kArchKeys[] = {"prompt.k",       "mapper.layers", "mapper.heads",
                           "mapper.width",   "mapper.max_input_len",
                           "features.dim",   "features.layers", "features.heads",
                           "features.seed",  "lm.layers",     "lm.heads",
                           "lm.dim",         "lm.max_seq"};

std::map<std::string, std::string> echo_to_map(const std::string& echo) {
  std::map<std::string, std::string> out;
  std::istringstream in(echo);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

void check_architecture_match(const std::string& ckpt_echo, const RunConfig& cfg,
                              const std::string& what) {
  const auto ckpt_map = echo_to_map(ckpt_echo);
  const auto cfg_map = echo_to_map(cfg.echo());
  for (const char* key : kArchKeys) {
    const auto a = ckpt_map.find(key);
    const auto b = cfg_map.find(key);
    if (a == ckpt_map.end() || b == cfg_map.end() || a->second != b->second)
      fail(ErrorKind::config, what + ": checkpoint architecture key '" + key +
                                  "' does not match the current config");
  }
}

void write_loss_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write loss log " + path);
  out << "step\tl_brain\tl_c\tl\n";
  char buf[64];
  for (const TrainLogRow& r : rows) {
    out << r.step;
    std::snprintf(buf, sizeof(buf), "%.17g", r.l_brain);
    out << "\t" << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", r.l_c);
    out << "\t" << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", r.l);
    out << "\t" << buf << "\n";
  }
}

}  // namespace

std::string hash_split(const CorpusSplit& split) {
  uint64_t h = 1469598103934665603ull;
  auto mix_windows = [&h](const std::vector<WindowPair>& windows, int side_tag) {
    mix_bytes(h, &side_tag, sizeof(side_tag));
    for (const WindowPair& w : windows) {
      mix_bytes(h, w.text.story_id.data(), w.text.story_id.size());
      mix_bytes(h, &w.text.window_index, sizeof(w.text.window_index));
      mix_bytes(h, w.text.token_ids.data(), sizeof(int) * w.text.token_ids.size());
      mix_bytes(h, w.text.alignment_positions.data(),
                sizeof(int) * w.text.alignment_positions.size());
      mix_bytes(h, &w.text.word_count, sizeof(w.text.word_count));
      mix_bytes(h, w.fmri.data.data(),
                sizeof(double) * static_cast<std::size_t>(w.fmri.data.size()));
    }
  };
  mix_windows(split.train, 1);
  mix_windows(split.test, 2);
  return hex64(h);
}

void SplitManifest::save(const std::string& path) const {
  json j;
  j["root"] = root;
  j["subject"] = subject;
  j["window_seconds"] = window_seconds;
  j["lag_seconds"] = lag_seconds;
  j["test_story_ids"] = test_story_ids;
  j["vocab"] = vocab;
  j["split_hash"] = split_hash;
  j["config_hash"] = config_hash;
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write split manifest " + path);
  out << j.dump(2) << "\n";
}

SplitManifest SplitManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ingestion, "cannot open split manifest " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::schema, "split manifest is not valid json: " + path);
  SplitManifest m;
  m.root = j.at("root").get<std::string>();
  m.subject = j.at("subject").get<std::string>();
  m.window_seconds = j.at("window_seconds").get<double>();
  m.lag_seconds = j.at("lag_seconds").get<double>();
  m.test_story_ids = j.at("test_story_ids").get<std::vector<std::string>>();
  m.vocab = j.at("vocab").get<std::vector<std::string>>();
  m.split_hash = j.at("split_hash").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  return m;
}

SplitManifest cmd_prepare(const std::string& root, const std::string& subject,
                          const std::vector<std::string>& test_story_ids,
                          const RunConfig& cfg, const std::string& out_path) {
  const auto stories = load_corpus(root, subject);
  const Tokenizer tokenizer = Tokenizer::build(stories);
  const CorpusSplit split =
      make_split(stories, test_story_ids, cfg.window_seconds, tokenizer, cfg.lag_seconds);

  SplitManifest m;
  m.root = root;
  m.subject = subject;
  m.window_seconds = cfg.window_seconds;
  m.lag_seconds = cfg.lag_seconds;
  m.test_story_ids = test_story_ids;
  m.vocab = tokenizer.words();
  m.split_hash = hash_split(split);
  m.config_hash = cfg.hash();
  m.save(out_path);
  return m;
}

LoadedSplit load_split(const std::string& manifest_path) {
  LoadedSplit ls;
  ls.manifest = SplitManifest::load(manifest_path);
  const auto stories = load_corpus(ls.manifest.root, ls.manifest.subject);
  ls.tokenizer = Tokenizer::from_words(ls.manifest.vocab);
  ls.split = make_split(stories, ls.manifest.test_story_ids, ls.manifest.window_seconds,
                        ls.tokenizer, ls.manifest.lag_seconds);
  const std::string got = hash_split(ls.split);
  if (got != ls.manifest.split_hash)
    fail(ErrorKind::schema, "corpus under " + ls.manifest.root +
                                " no longer matches the split manifest (hash " + got +
                                " vs " + ls.manifest.split_hash + ")");
  return ls;
}

void cmd_synth(const SynthArgs& args) {
  synth::SynthSpec spec;
  spec.vocabulary = synth::default_vocabulary(args.vocab);
  spec.n_stories = args.stories;
  spec.words_per_story = args.words_per_story;
  spec.tr_seconds = args.tr_seconds;
  spec.window_seconds = args.window_seconds;
  spec.voxels = args.voxels;
  spec.noise_sigma = args.noise_sigma;
  spec.seed = args.seed;
  spec.words_per_second = args.words_per_second;
  const auto stories = synth::generate(spec);
  synth::write_corpus(stories, args.out_root, args.subject);
}

void maybe_load_pretrained_lm(GptLm& backend, const RunConfig& cfg) {
  if (cfg.lm_pretrained_path.empty()) return;
  fs::path path(cfg.lm_pretrained_path);
  if (path.is_relative()) {
    if (const char* cache = std::getenv("FMRIDEC_CACHE_DIR")) path = fs::path(cache) / path;
  }
  const Checkpoint ckpt = Checkpoint::load(path.string());
  if (!ckpt.has_tensor_prefix("lm."))
    fail(ErrorKind::schema, "pretrained checkpoint has no lm.* tensors: " + path.string());
  ckpt.load_into(backend.parameters());
}

TrainResult cmd_train(int stage, const RunConfig& cfg, const std::string& split_path,
                      const std::string& out_ckpt, const std::string& stage1_ckpt) {
  if (stage != 1 && stage != 2) fail(ErrorKind::config, "train stage must be 1 or 2");
  LoadedSplit ls = load_split(split_path);
  if (ls.split.train.empty()) fail(ErrorKind::input, "split has no training windows");

  TrainResult result;
  Checkpoint out;
  out.meta["config"] = cfg.echo();
  out.meta["config_hash"] = cfg.hash();
  out.meta["split_hash"] = ls.manifest.split_hash;
  out.vocab = ls.tokenizer.words();

  GptLm backend = build_backend(cfg, ls.tokenizer.size());
  const int voxels = ls.split.train.front().fmri.voxels();

  if (stage == 1) {
    maybe_load_pretrained_lm(backend, cfg);
    TextFeatureExtractor extractor = build_extractor(cfg);
    MappingNetwork mapper = build_mapper(cfg);

    Stage1Config sc;
    sc.epochs = cfg.stage1_epochs;
    sc.lr_mapper = cfg.stage1_lr_mapper;
    sc.lr_lm = cfg.stage1_lr_lm;
    sc.weight_decay = cfg.stage1_weight_decay;
    sc.batch_size = cfg.batch_size;
    sc.reduction = cfg.loss_reduction;
    sc.seed = mix_seed(cfg.seed, kTagStage1);
    result.final_loss =
        train_stage1(ls.split, extractor, mapper, backend, sc, ls.tokenizer, &result.log);

    out.meta["stage"] = "1";
    out.add_parameters(mapper.parameters());
    out.add_parameters(backend.parameters());
  } else {
    if (stage1_ckpt.empty())
      fail(ErrorKind::config, "stage 2 requires the stage-1 checkpoint path");
    const Checkpoint teacher_ckpt = Checkpoint::load(stage1_ckpt);
    if (teacher_ckpt.meta.count("stage") == 0 || teacher_ckpt.meta.at("stage") != "1")
      fail(ErrorKind::config, "stage 2 needs a stage-1 checkpoint, got stage '" +
                                  (teacher_ckpt.meta.count("stage")
                                       ? teacher_ckpt.meta.at("stage")
                                       : std::string("?")) +
                                  "'");
    if (teacher_ckpt.meta.at("split_hash") != ls.manifest.split_hash)
      fail(ErrorKind::config, "stage-1 checkpoint was trained on a different split");
    check_architecture_match(teacher_ckpt.meta.at("config"), cfg, "stage 2");
    if (teacher_ckpt.vocab != ls.tokenizer.words())
      fail(ErrorKind::schema, "stage-1 checkpoint vocabulary differs from the split");

    TextFeatureExtractor extractor = build_extractor(cfg);
    MappingNetwork mapper = build_mapper(cfg);
    teacher_ckpt.load_into(mapper.parameters());
    if (cfg.stage2_reuse_stage1_lm) {
      teacher_ckpt.load_into(backend.parameters());
    } else {
      maybe_load_pretrained_lm(backend, cfg);
    }

    const std::vector<Mat> text_prompts =
        compute_text_prompts(ls.split.train, extractor, mapper, ls.tokenizer);

    FmriEncoder encoder = build_encoder(cfg, voxels);
    Stage2Config sc;
    sc.epochs = cfg.stage2_epochs;
    sc.lr_encoder = cfg.stage2_lr_encoder;
    sc.lr_lm = cfg.stage2_lr_lm;
    sc.weight_decay = cfg.stage2_weight_decay;
    sc.batch_size = cfg.batch_size;
    sc.reduction = cfg.loss_reduction;
    sc.contrastive = cfg.contrastive();
    sc.seed = mix_seed(cfg.seed, kTagStage2);
    result.final_loss =
        train_stage2(ls.split, encoder, text_prompts, backend, sc, &result.log);

    out.meta["stage"] = "2";
    out.meta["voxels"] = std::to_string(voxels);
    out.add_parameters(encoder.parameters());
    out.add_parameters(backend.parameters());
  }

  out.save(out_ckpt);
  write_loss_log(out_ckpt + ".loss.tsv", result.log);
  result.checkpoint_path = out_ckpt;
  return result;
}

std::vector<DecodeResult> cmd_decode(const DecodeArgs& args) {
  LoadedSplit ls = load_split(args.split);
  const Checkpoint ckpt = Checkpoint::load(args.checkpoint);
  if (ckpt.meta.count("stage") == 0 || ckpt.meta.at("stage") != "2")
    fail(ErrorKind::config, "decode needs a stage-2 checkpoint");
  if (ckpt.vocab != ls.tokenizer.words())
    fail(ErrorKind::schema, "checkpoint vocabulary differs from the split");

  const RunConfig cfg = RunConfig::from_string(ckpt.meta.at("config"));
  const int voxels = std::stoi(ckpt.meta.at("voxels"));
  if (!ls.split.train.empty() && ls.split.train.front().fmri.voxels() != voxels)
    fail(ErrorKind::config, "split voxel count does not match the checkpoint");

  GptLm backend = build_backend(cfg, ls.tokenizer.size());
  FmriEncoder encoder = build_encoder(cfg, voxels);
  ckpt.load_into(backend.parameters());
  ckpt.load_into(encoder.parameters());
  backend.set_trainable(false);

  DecodeOptions opts;
  opts.strategy = args.strategy;
  opts.decode.kind = cfg.decode_kind;
  opts.decode.beam_width = cfg.decode_beam_width;
  opts.hard_cap =
      cfg.decode_hard_cap > 0 ? cfg.decode_hard_cap : default_hard_cap(ls.split.train);
  if (args.strategy == StopStrategy::wordrate) {
    opts.word_rate = train_word_rate(ls.split, cfg.wordrate_lambda, opts.hard_cap);
    std::cout << "word rate model: train MAE " << opts.word_rate->train_mae
              << ", validation MAE " << opts.word_rate->validation_mae << "\n";
  }

  const auto& windows = args.decode_train_subset ? ls.split.train : ls.split.test;
  auto results = decode_windows(encoder, backend, windows, opts, ls.tokenizer);
  if (!args.out_path.empty())
    write_decode_results(args.out_path, results, windows, ls.tokenizer,
                         cfg.hash(), ls.manifest.split_hash);
  return results;
}

void write_metric_report(const metrics::MetricReport& report, ReportFormat format,
                         const std::string& out_path, const RunConfig& cfg,
                         const std::string& results_config_hash) {
  const std::string config_hash = cfg.hash();
  std::ostringstream text;
  if (format == ReportFormat::json_lines) {
    for (const auto& w : report.per_window) {
      json j;
      j["story_id"] = w.story_id;
      j["window_index"] = w.window_index;
      j["bleu1"] = w.bleu1;
      j["meteor"] = w.meteor;
      j["bertscore_p"] = w.bertscore_p;
      j["bertscore_r"] = w.bertscore_r;
      j["bertscore_f1"] = w.bertscore_f1;
      text << j.dump() << "\n";
    }
    json summary;
    summary["summary"] = {{"windows", report.window_count},
                          {"bleu1", report.avg_bleu1},
                          {"meteor", report.avg_meteor},
                          {"bertscore_p", report.avg_bertscore_p},
                          {"bertscore_r", report.avg_bertscore_r},
                          {"bertscore_f1", report.avg_bertscore_f1},
                          {"config_hash", config_hash},
                          {"results_config_hash", results_config_hash},
                          {"config", cfg.echo()}};
    text << summary.dump() << "\n";
  } else {
    char line[256];
    text << "story            win   bleu1  meteor  bert_f1\n";
    for (const auto& w : report.per_window) {
      std::snprintf(line, sizeof(line), "%-16s %3d  %6.4f  %6.4f  %7.4f\n",
                    w.story_id.c_str(), w.window_index, w.bleu1, w.meteor, w.bertscore_f1);
      text << line;
    }
    std::snprintf(line, sizeof(line),
                  "mean over %d windows: bleu1=%.4f meteor=%.4f bertscore_f1=%.4f "
                  "(p=%.4f r=%.4f)\n",
                  report.window_count, report.avg_bleu1, report.avg_meteor,
                  report.avg_bertscore_f1, report.avg_bertscore_p, report.avg_bertscore_r);
    text << line;
    text << "config_hash=" << config_hash << " results_config_hash=" << results_config_hash
         << "\n";
    std::istringstream echo(cfg.echo());
    std::string echo_line;
    while (std::getline(echo, echo_line)) text << "# " << echo_line << "\n";
  }

  if (out_path.empty()) {
    std::cout << text.str();
  } else {
    std::ofstream out(out_path);
    if (!out) fail(ErrorKind::io, "cannot write metric report " + out_path);
    out << text.str();
  }
}

metrics::MetricReport cmd_evaluate(const EvaluateArgs& args) {
  const DecodeResultsFile results = read_decode_results(args.results_path);
  LoadedSplit ls = load_split(args.split_path);
  if (results.split_hash != ls.manifest.split_hash)
    fail(ErrorKind::evaluation,
         "decode results were produced from a different split (hash " +
             results.split_hash + " vs " + ls.manifest.split_hash + ")");
  if (results.config_hash != args.cfg.hash())
    log_warn("evaluate config differs from the decode config (" + results.config_hash +
             " vs " + args.cfg.hash() + ")");

  std::map<std::pair<std::string, int>, const TranscriptWindow*> by_key;
  for (const auto& w : ls.split.train) by_key[{w.text.story_id, w.text.window_index}] = &w.text;
  for (const auto& w : ls.split.test) by_key[{w.text.story_id, w.text.window_index}] = &w.text;
  std::vector<TranscriptWindow> references;
  references.reserve(results.results.size());
  std::string missing;
  for (const DecodeResult& r : results.results) {
    auto it = by_key.find({r.story_id, r.window_index});
    if (it == by_key.end())
      missing += " " + r.story_id + ":" + std::to_string(r.window_index);
    else
      references.push_back(*it->second);
  }
  if (!missing.empty())
    fail(ErrorKind::evaluation, "decode results reference unknown windows:" + missing);

  const FrozenTextEncoder embedder(TextEncoderConfig{
      args.cfg.features_dim, args.cfg.features_layers, args.cfg.features_heads,
      args.cfg.features_seed});
  metrics::MetricReport report =
      metrics::evaluate(results.results, references, ls.tokenizer, embedder);
  write_metric_report(report, args.format, args.out_path, args.cfg, results.config_hash);
  return report;
}

AblateReport cmd_ablate(const AblateArgs& args) {
  if (args.work_dir.empty()) fail(ErrorKind::config, "ablate needs a work directory");
  fs::create_directories(args.work_dir);
  AblateReport report;

  auto run_setting = [&](const RunConfig& cfg, const std::string& tag, uint64_t seed,
                         const std::string& stage1_path) {
    const std::string s2 = args.work_dir + "/" + tag + "_s" + std::to_string(seed) + ".ckpt";
    cmd_train(2, cfg, args.split_path, s2, stage1_path);
    for (StopStrategy strategy : {StopStrategy::alignment, StopStrategy::wordrate}) {
      DecodeArgs da;
      da.checkpoint = s2;
      da.split = args.split_path;
      da.strategy = strategy;
      da.out_path = s2 + "." + to_string(strategy) + ".jsonl";
      cmd_decode(da);
      EvaluateArgs ea;
      ea.results_path = da.out_path;
      ea.split_path = args.split_path;
      ea.cfg = cfg;
      ea.format = ReportFormat::json_lines;
      ea.out_path = da.out_path + ".report";
      const auto m = cmd_evaluate(ea);
      AblateCell cell;
      cell.setting = std::string(strategy == StopStrategy::alignment ? "align" : "wr") + tag;
      cell.seed = seed;
      cell.bleu1 = m.avg_bleu1;
      cell.meteor = m.avg_meteor;
      cell.bertscore_f1 = m.avg_bertscore_f1;
      report.cells.push_back(cell);
    }
  };

  for (uint64_t seed : args.seeds) {
    RunConfig base = args.cfg;
    base.seed = seed;

    const std::string s1 = args.work_dir + "/stage1_s" + std::to_string(seed) + ".ckpt";
    cmd_train(1, base, args.split_path, s1);

    run_setting(base, "", seed, s1);  // full setting: contrastive on, fine-tuned
    if (args.contrastive_grid) {
      RunConfig no_c = base;
      no_c.stage2_alpha = 0.0;
      run_setting(no_c, "(noC)", seed, s1);
    }
    if (args.finetune_grid) {
      RunConfig no_f = base;
      no_f.lm_trainable = false;
      const std::string s1_nf =
          args.work_dir + "/stage1_noF_s" + std::to_string(seed) + ".ckpt";
      cmd_train(1, no_f, args.split_path, s1_nf);
      run_setting(no_f, "(noF)", seed, s1_nf);
    }
  }

  // mean over seeds per setting
  std::map<std::string, std::array<double, 4>> agg;  // sums + count
  for (const AblateCell& c : report.cells) {
    auto& a = agg[c.setting];
    a[0] += c.bleu1;
    a[1] += c.meteor;
    a[2] += c.bertscore_f1;
    a[3] += 1.0;
  }
  std::ostringstream table;
  table << "setting        bleu1   meteor  bertscore_f1   (mean over "
        << args.seeds.size() << " seeds)\n";
  char line[160];
  for (const auto& [setting, a] : agg) {
    std::snprintf(line, sizeof(line), "%-13s %6.4f  %6.4f  %6.4f\n", setting.c_str(),
                  a[0] / a[3], a[1] / a[3], a[2] / a[3]);
    table << line;
  }
  report.table = table.str();
  return report;
}

}  // namespace fmridec::run
