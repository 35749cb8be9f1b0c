#include "sps/checkpoint.hpp"

#include <cstring>

#include "sps/error.hpp"
#include "sps/util.hpp"

namespace sps {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'S', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_array(std::string& out, const std::string& name, const MatF& m) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, m.data() + i, 4);
    put_u32(out, bits);
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  MatF array(std::uint32_t rows, std::uint32_t cols) {
    MatF m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const std::uint32_t bits = u32();
      std::memcpy(m.data() + i, &bits, 4);
    }
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_model(const Model& model) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  const std::string cfg = model.config.to_text();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  put_u32(out, static_cast<std::uint32_t>(model.params.size() + 2 * model.adapters.size()));
  for (const auto& [name, m] : model.params) put_array(out, name, m);
  for (const auto& [host, a] : model.adapters) {
    put_array(out, lora_a_name(host), a.A);
    put_array(out, lora_b_name(host), a.B);
  }
  return out;
}

Model deserialize_model(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IoError("not a checkpoint (bad magic)");
  }
  Reader in(bytes);
  in.str(sizeof kMagic);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  Model model;
  model.config = ModelConfig::from_text(in.str(in.u32()));
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = in.str(in.u32());
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    MatF m = in.array(rows, cols);
    const auto pos = name.rfind(".lora.");
    if (pos == std::string::npos) {
      model.params.emplace(name, std::move(m));
      continue;
    }
    const std::string host = name.substr(0, pos);
    auto& a = model.adapters[host];
    a.host_name = host;
    const std::string which = name.substr(pos + 6);
    if (which == "A") a.A = std::move(m);
    else if (which == "B") a.B = std::move(m);
    else throw IoError("unexpected adapter entry '" + name + "'");
  }
  if (!in.done()) throw IoError("trailing bytes after checkpoint");
  for (const auto& [host, a] : model.adapters) {
    if (a.A.size() == 0 || a.B.size() == 0) throw IoError("adapter '" + host + "' is incomplete");
    if (model.params.count(host) == 0) throw IoError("adapter host '" + host + "' missing");
  }
  return model;
}

void save_checkpoint(const Model& model, const std::string& path) { write_file(path, serialize_model(model)); }

Model load_checkpoint(const std::string& path) { return deserialize_model(read_file(path)); }

std::string model_digest(const Model& model) { return hex64(fnv1a(serialize_model(model))); }

std::string file_digest(const std::string& path) { return hex64(fnv1a(read_file(path))); }

}  // namespace sps
