#include "pudm/checkpoint.h"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <set>
#include <sstream>
#include <vector>

#include "pudm/errors.h"
#include "pudm/io_util.h"

namespace pudm {

namespace {

constexpr char kMagic[8] = {'P', 'U', 'D', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.append(b, 4);
}

void put_u64(std::string& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.append(b, 8);
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw IoError("checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string join4(const std::array<int, 4>& a) {
  std::ostringstream ss;
  ss << a[0] << ',' << a[1] << ',' << a[2] << ',' << a[3];
  return ss.str();
}

std::array<int, 4> parse4(const std::string& s, const std::string& key) {
  std::array<int, 4> out{};
  std::istringstream ss(s);
  std::string tok;
  for (int i = 0; i < 4; ++i) {
    if (!std::getline(ss, tok, ',')) throw IoError("checkpoint config: bad value for " + key);
    out[i] = std::stoi(tok);
  }
  return out;
}

}  // namespace

std::string serialize_meta(const CheckpointMeta& meta) {
  char fbuf[64];
  std::ostringstream ss;
  ss << "preset=" << meta.preset << '\n';
  ss << "level_points=" << join4(meta.cfg.level_points) << '\n';
  ss << "cnet_channels=" << join4(meta.cfg.cnet_channels) << '\n';
  ss << "nnet_channels=" << join4(meta.cfg.nnet_channels) << '\n';
  ss << "knn_k=" << meta.cfg.knn_k << '\n';
  ss << "heads=" << meta.cfg.heads << '\n';
  ss << "tm_latent=" << meta.cfg.tm_latent << '\n';
  ss << "tm_ffn=" << meta.cfg.tm_ffn << '\n';
  ss << "global_dim=" << meta.cfg.global_dim << '\n';
  ss << "time_dim=" << meta.cfg.time_dim << '\n';
  ss << "rate_rows=" << meta.cfg.rate_rows << '\n';
  ss << "rate_dim=" << meta.cfg.rate_dim << '\n';
  ss << "T=" << meta.T << '\n';
  std::snprintf(fbuf, sizeof fbuf, "%.17g", meta.beta_min);
  ss << "beta_min=" << fbuf << '\n';
  std::snprintf(fbuf, sizeof fbuf, "%.17g", meta.beta_max);
  ss << "beta_max=" << fbuf << '\n';
  return ss.str();
}

CheckpointMeta parse_meta(const std::string& text) {
  CheckpointMeta meta;
  std::istringstream lines(text);
  std::string line;
  int seen = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint config: malformed line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    ++seen;
    if (key == "preset") meta.preset = val;
    else if (key == "level_points") meta.cfg.level_points = parse4(val, key);
    else if (key == "cnet_channels") meta.cfg.cnet_channels = parse4(val, key);
    else if (key == "nnet_channels") meta.cfg.nnet_channels = parse4(val, key);
    else if (key == "knn_k") meta.cfg.knn_k = std::stoi(val);
    else if (key == "heads") meta.cfg.heads = std::stoi(val);
    else if (key == "tm_latent") meta.cfg.tm_latent = std::stoi(val);
    else if (key == "tm_ffn") meta.cfg.tm_ffn = std::stoi(val);
    else if (key == "global_dim") meta.cfg.global_dim = std::stoi(val);
    else if (key == "time_dim") meta.cfg.time_dim = std::stoi(val);
    else if (key == "rate_rows") meta.cfg.rate_rows = std::stoi(val);
    else if (key == "rate_dim") meta.cfg.rate_dim = std::stoi(val);
    else if (key == "T") meta.T = std::stoi(val);
    else if (key == "beta_min") meta.beta_min = std::stod(val);
    else if (key == "beta_max") meta.beta_max = std::stod(val);
    else throw IoError("checkpoint config: unknown key: " + key);
  }
  if (seen < 15) throw IoError("checkpoint config: missing keys");
  return meta;
}

void save_checkpoint(const ParameterStore& ps, const CheckpointMeta& meta,
                     const std::string& path) {
  std::string out;
  out.append(kMagic, 8);
  put_u32(out, kVersion);
  const std::string cfg_text = serialize_meta(meta);
  put_u32(out, static_cast<uint32_t>(cfg_text.size()));
  out += cfg_text;

  std::vector<const ParamTensor*> sorted;
  sorted.reserve(ps.count());
  for (const ParamTensor& p : ps.tensors()) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(),
            [](const ParamTensor* a, const ParamTensor* b) { return a->name < b->name; });

  put_u64(out, sorted.size());
  for (const ParamTensor* p : sorted) {
    put_u32(out, static_cast<uint32_t>(p->name.size()));
    out += p->name;
    put_u32(out, static_cast<uint32_t>(p->value.rows));
    put_u32(out, static_cast<uint32_t>(p->value.cols));
    for (double v : p->value.d) put_f32(out, static_cast<float>(v));
  }
  write_text_atomic(path, out);
}

CheckpointMeta load_checkpoint(const std::string& path, ParameterStore& ps) {
  if (ps.count() != 0) throw ValidationError("load_checkpoint: parameter store must be empty");
  const std::string buf = read_text(path);
  Reader r{buf};

  const std::string magic = r.bytes(8);
  if (std::memcmp(magic.data(), kMagic, 8) != 0)
    throw IoError("checkpoint: bad magic (not a checkpoint file)");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  const uint32_t cfg_len = r.u32();
  const CheckpointMeta meta = parse_meta(r.bytes(cfg_len));
  validate_config(meta.cfg);

  // Materialize the expected tensor set (shapes derive from the config),
  // then overwrite every value from the file.
  register_model_params(ps, meta.cfg, 0, true);

  const uint64_t n = r.u64();
  if (n != ps.count())
    throw IoError("checkpoint: tensor count " + std::to_string(n) + " does not match config (" +
                  std::to_string(ps.count()) + " expected)");
  std::set<std::string> seen;
  for (uint64_t i = 0; i < n; ++i) {
    const uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    if (!ps.has(name)) throw IoError("checkpoint: unexpected tensor: " + name);
    if (!seen.insert(name).second) throw IoError("checkpoint: duplicate tensor: " + name);
    ParamTensor& p = ps.get(name);
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    if (static_cast<int>(rows) != p.value.rows || static_cast<int>(cols) != p.value.cols)
      throw IoError("checkpoint: shape mismatch for tensor " + name + ": file has " +
                    std::to_string(rows) + "x" + std::to_string(cols) + ", config implies " +
                    std::to_string(p.value.rows) + "x" + std::to_string(p.value.cols));
    for (double& v : p.value.d) v = static_cast<double>(r.f32());
  }
  if (r.pos != buf.size()) throw IoError("checkpoint: trailing bytes after tensor data");
  return meta;
}

}  // namespace pudm
