#include "fmridec/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "fmridec/errors.hpp"

namespace fmridec {

namespace {

constexpr char kMagic[8] = {'F', 'M', 'R', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) fail(ErrorKind::schema, "checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) fail(ErrorKind::schema, "checkpoint truncated");
  return s;
}

}  // namespace

void Checkpoint::add_parameters(const std::vector<ad::Parameter*>& params) {
  for (const ad::Parameter* p : params) tensors.emplace_back(p->name, p->value);
}

void Checkpoint::load_into(const std::vector<ad::Parameter*>& params) const {
  std::map<std::string, const ad::Mat*> index;
  for (const auto& [name, mat] : tensors) index[name] = &mat;
  for (ad::Parameter* p : params) {
    auto it = index.find(p->name);
    if (it == index.end())
      fail(ErrorKind::schema, "checkpoint is missing tensor '" + p->name + "'");
    if (it->second->rows() != p->value.rows() || it->second->cols() != p->value.cols())
      fail(ErrorKind::schema, "checkpoint tensor '" + p->name + "' has shape " +
                                  std::to_string(it->second->rows()) + "x" +
                                  std::to_string(it->second->cols()) + ", expected " +
                                  std::to_string(p->value.rows()) + "x" +
                                  std::to_string(p->value.cols()));
    p->value = *it->second;
  }
}

bool Checkpoint::has_tensor_prefix(const std::string& prefix) const {
  for (const auto& [name, mat] : tensors)
    if (name.rfind(prefix, 0) == 0) return true;
  return false;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write checkpoint to " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, meta.size());
  for (const auto& [k, v] : meta) {
    write_string(out, k);
    write_string(out, v);
  }
  write_u64(out, vocab.size());
  for (const std::string& w : vocab) write_string(out, w);
  write_u64(out, tensors.size());
  for (const auto& [name, mat] : tensors) {
    write_string(out, name);
    write_u64(out, static_cast<uint64_t>(mat.rows()));
    write_u64(out, static_cast<uint64_t>(mat.cols()));
    out.write(reinterpret_cast<const char*>(mat.data()),
              static_cast<std::streamsize>(sizeof(double) * mat.size()));
  }
  if (!out) fail(ErrorKind::io, "short write while saving checkpoint " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::ingestion, "cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    fail(ErrorKind::schema, "not a checkpoint file: " + path);
  Checkpoint ckpt;
  const uint64_t n_meta = read_u64(in);
  for (uint64_t i = 0; i < n_meta; ++i) {
    std::string k = read_string(in);
    ckpt.meta[k] = read_string(in);
  }
  const uint64_t n_vocab = read_u64(in);
  ckpt.vocab.reserve(n_vocab);
  for (uint64_t i = 0; i < n_vocab; ++i) ckpt.vocab.push_back(read_string(in));
  const uint64_t n_tensors = read_u64(in);
  ckpt.tensors.reserve(n_tensors);
  for (uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = read_string(in);
    const auto rows = static_cast<Eigen::Index>(read_u64(in));
    const auto cols = static_cast<Eigen::Index>(read_u64(in));
    ad::Mat m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) fail(ErrorKind::schema, "checkpoint truncated in tensor '" + name + "'");
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

}  // namespace fmridec
