#include "fmridec/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "fmridec/errors.hpp"

namespace fmridec {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(ErrorKind::config, "config key '" + key + "' needs an integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const uint64_t out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(ErrorKind::config, "config key '" + key + "' needs an unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(ErrorKind::config, "config key '" + key + "' needs a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorKind::config, "config key '" + key + "' needs true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::apply(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "seed") seed = parse_u64(key, v);
  else if (key == "corpus.window_seconds") window_seconds = parse_double(key, v);
  else if (key == "corpus.lag_seconds") lag_seconds = parse_double(key, v);
  else if (key == "prompt.k") prompt_k = parse_int(key, v);
  else if (key == "mapper.layers") mapper_layers = parse_int(key, v);
  else if (key == "mapper.heads") mapper_heads = parse_int(key, v);
  else if (key == "mapper.width") mapper_width = parse_int(key, v);
  else if (key == "mapper.max_input_len") mapper_max_input_len = parse_int(key, v);
  else if (key == "features.dim") features_dim = parse_int(key, v);
  else if (key == "features.layers") features_layers = parse_int(key, v);
  else if (key == "features.heads") features_heads = parse_int(key, v);
  else if (key == "features.seed") features_seed = parse_u64(key, v);
  else if (key == "lm.name") {
    if (v != "toy-gpt")
      fail(ErrorKind::config, "unsupported lm.name '" + v + "' (available: toy-gpt)");
    lm_name = v;
  } else if (key == "lm.trainable") lm_trainable = parse_bool(key, v);
  else if (key == "lm.layers") lm_layers = parse_int(key, v);
  else if (key == "lm.heads") lm_heads = parse_int(key, v);
  else if (key == "lm.dim") lm_dim = parse_int(key, v);
  else if (key == "lm.max_seq") lm_max_seq = parse_int(key, v);
  else if (key == "lm.pretrained_path") lm_pretrained_path = v;
  else if (key == "train.batch_size") batch_size = parse_int(key, v);
  else if (key == "train.loss_reduction") {
    if (v == "mean") loss_reduction = LossReduction::mean;
    else if (v == "sum") loss_reduction = LossReduction::sum;
    else fail(ErrorKind::config, "train.loss_reduction must be mean or sum");
  } else if (key == "stage1.epochs") stage1_epochs = parse_int(key, v);
  else if (key == "stage1.lr_mapper") stage1_lr_mapper = parse_double(key, v);
  else if (key == "stage1.lr_lm") stage1_lr_lm = parse_double(key, v);
  else if (key == "stage1.weight_decay") stage1_weight_decay = parse_double(key, v);
  else if (key == "stage2.epochs") stage2_epochs = parse_int(key, v);
  else if (key == "stage2.lr_encoder") stage2_lr_encoder = parse_double(key, v);
  else if (key == "stage2.lr_lm") stage2_lr_lm = parse_double(key, v);
  else if (key == "stage2.weight_decay") stage2_weight_decay = parse_double(key, v);
  else if (key == "stage2.tau") stage2_tau = parse_double(key, v);
  else if (key == "stage2.alpha") stage2_alpha = parse_double(key, v);
  else if (key == "stage2.reuse_stage1_lm") stage2_reuse_stage1_lm = parse_bool(key, v);
  else if (key == "contrastive.flatten") {
    if (v == "concat") contrastive_flatten = PromptFlatten::concat;
    else if (v == "mean") contrastive_flatten = PromptFlatten::mean_pool;
    else fail(ErrorKind::config, "contrastive.flatten must be concat or mean");
  } else if (key == "contrastive.include_positive_in_denominator")
    contrastive_include_positive_in_denominator = parse_bool(key, v);
  else if (key == "decode.kind") {
    if (v == "greedy") decode_kind = DecodeKind::greedy;
    else if (v == "beam") decode_kind = DecodeKind::beam;
    else fail(ErrorKind::config, "decode.kind must be greedy or beam");
  } else if (key == "decode.beam_width") decode_beam_width = parse_int(key, v);
  else if (key == "decode.hard_cap") decode_hard_cap = parse_int(key, v);
  else if (key == "wordrate.lambda") wordrate_lambda = parse_double(key, v);
  else fail(ErrorKind::config, "unknown config key '" + key + "'");
}

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config, "config line " + std::to_string(line_no) +
                                  " is not key = value: '" + t + "'");
    cfg.apply(t.substr(0, eq), t.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

std::string RunConfig::echo() const {
  std::ostringstream out;
  out << "seed = " << seed << "\n";
  out << "corpus.window_seconds = " << fmt(window_seconds) << "\n";
  out << "corpus.lag_seconds = " << fmt(lag_seconds) << "\n";
  out << "prompt.k = " << prompt_k << "\n";
  out << "mapper.layers = " << mapper_layers << "\n";
  out << "mapper.heads = " << mapper_heads << "\n";
  out << "mapper.width = " << mapper_width << "\n";
  out << "mapper.max_input_len = " << mapper_max_input_len << "\n";
  out << "features.dim = " << features_dim << "\n";
  out << "features.layers = " << features_layers << "\n";
  out << "features.heads = " << features_heads << "\n";
  out << "features.seed = " << features_seed << "\n";
  out << "lm.name = " << lm_name << "\n";
  out << "lm.trainable = " << (lm_trainable ? "true" : "false") << "\n";
  out << "lm.layers = " << lm_layers << "\n";
  out << "lm.heads = " << lm_heads << "\n";
  out << "lm.dim = " << lm_dim << "\n";
  out << "lm.max_seq = " << lm_max_seq << "\n";
  out << "lm.pretrained_path = " << lm_pretrained_path << "\n";
  out << "train.batch_size = " << batch_size << "\n";
  out << "train.loss_reduction = "
      << (loss_reduction == LossReduction::mean ? "mean" : "sum") << "\n";
  out << "stage1.epochs = " << stage1_epochs << "\n";
  out << "stage1.lr_mapper = " << fmt(stage1_lr_mapper) << "\n";
  out << "stage1.lr_lm = " << fmt(stage1_lr_lm) << "\n";
  out << "stage1.weight_decay = " << fmt(stage1_weight_decay) << "\n";
  out << "stage2.epochs = " << stage2_epochs << "\n";
  out << "stage2.lr_encoder = " << fmt(stage2_lr_encoder) << "\n";
  out << "stage2.lr_lm = " << fmt(stage2_lr_lm) << "\n";
  out << "stage2.weight_decay = " << fmt(stage2_weight_decay) << "\n";
  out << "stage2.tau = " << fmt(stage2_tau) << "\n";
  out << "stage2.alpha = " << fmt(stage2_alpha) << "\n";
  out << "stage2.reuse_stage1_lm = " << (stage2_reuse_stage1_lm ? "true" : "false") << "\n";
  out << "contrastive.flatten = "
      << (contrastive_flatten == PromptFlatten::concat ? "concat" : "mean") << "\n";
  out << "contrastive.include_positive_in_denominator = "
      << (contrastive_include_positive_in_denominator ? "true" : "false") << "\n";
  out << "decode.kind = " << (decode_kind == DecodeKind::greedy ? "greedy" : "beam") << "\n";
  out << "decode.beam_width = " << decode_beam_width << "\n";
  out << "decode.hard_cap = " << decode_hard_cap << "\n";
  out << "wordrate.lambda = " << fmt(wordrate_lambda) << "\n";
  return out.str();
}

std::string RunConfig::hash() const {
  const std::string text = echo();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ContrastiveConfig RunConfig::contrastive() const {
  ContrastiveConfig c;
  c.tau = stage2_tau;
  c.alpha = stage2_alpha;
  c.flatten = contrastive_flatten;
  c.include_positive_in_denominator = contrastive_include_positive_in_denominator;
  return c;
}

}  // namespace fmridec
