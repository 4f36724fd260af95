// SPDX-License-Identifier: Apache-2.0

#include "mvae/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <map>

namespace mvae::training {

namespace {

using nn::Index;

constexpr std::array<char, 4> kMagic{'M', 'V', 'A', 'E'};
constexpr std::array<char, 4> kTrailer{'E', 'N', 'D', '!'};
constexpr std::uint64_t kMaxString = 1ULL << 28;
constexpr std::uint64_t kMaxElements = 1ULL << 32;

class Writer {
 public:
  explicit Writer(std::ostream &out) : out_(out) {}

  template <typename T>
  void integer(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
    out_.write(buf, sizeof(T));
  }
  void real(double v) { integer(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char *p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void string(const std::string &s) {
    integer<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void tensors(const std::vector<NamedTensor> &ts) {
    integer<std::uint32_t>(static_cast<std::uint32_t>(ts.size()));
    for (const auto &t : ts) {
      string(t.name);
      integer<std::uint64_t>(static_cast<std::uint64_t>(t.rows));
      integer<std::uint64_t>(static_cast<std::uint64_t>(t.cols));
      for (double v : t.data) real(v);
    }
  }

 private:
  std::ostream &out_;
};

class Reader {
 public:
  Reader(std::istream &in, std::string source) : in_(in), source_(std::move(source)) {}

  void bytes(char *p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated");
  }
  template <typename T>
  T integer() {
    using U = std::make_unsigned_t<T>;
    unsigned char buf[sizeof(T)];
    bytes(reinterpret_cast<char *>(buf), sizeof(T));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
    return static_cast<T>(u);
  }
  double real() { return std::bit_cast<double>(integer<std::uint64_t>()); }
  std::string string() {
    const auto n = integer<std::uint64_t>();
    if (n > kMaxString) fail("implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::vector<NamedTensor> tensors() {
    const auto n = integer<std::uint32_t>();
    std::vector<NamedTensor> ts;
    for (std::uint32_t k = 0; k < n; ++k) {
      NamedTensor t;
      t.name = string();
      const auto rows = integer<std::uint64_t>();
      const auto cols = integer<std::uint64_t>();
      if (rows > kMaxElements || cols > kMaxElements || rows * cols > kMaxElements)
        fail("implausible tensor shape for " + t.name);
      t.rows = static_cast<std::int64_t>(rows);
      t.cols = static_cast<std::int64_t>(cols);
      t.data.resize(rows * cols);
      for (auto &v : t.data) v = real();
      ts.push_back(std::move(t));
    }
    return ts;
  }
  [[noreturn]] void fail(const std::string &why) const { throw IoError("checkpoint " + source_ + ": " + why); }

 private:
  std::istream &in_;
  std::string source_;
};

template <typename Scalar>
NamedTensor named(const std::string &name, const nn::Matrix<Scalar> &m) {
  NamedTensor t{name, m.rows(), m.cols(), {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) t.data.push_back(static_cast<double>(m.data()[i]));
  return t;
}

template <typename Scalar>
void assign(nn::Matrix<Scalar> &dst, const NamedTensor &src) {
  if (src.rows != dst.rows() || src.cols != dst.cols())
    throw IoError("checkpoint tensor " + src.name + " has shape " + std::to_string(src.rows) + "x" +
                  std::to_string(src.cols) + ", expected " + std::to_string(dst.rows()) + "x" +
                  std::to_string(dst.cols()));
  for (Index i = 0; i < dst.size(); ++i) dst.data()[i] = static_cast<Scalar>(src.data[static_cast<std::size_t>(i)]);
}

}  // namespace

template <typename Scalar>
Checkpoint make_checkpoint(const TrainConfig &config, const Vocabulary &vocab, vae::SequenceVae<Scalar> &model,
                           const nn::AdamState<Scalar> &adam, long global_step, int epoch) {
  Checkpoint c;
  c.config = config;
  c.vocab = vocab;
  const auto params = model.parameters();
  for (auto *p : params) c.parameters.push_back(named(p->name, p->value));
  c.adam_step = adam.step;
  for (std::size_t k = 0; k < adam.m.size(); ++k) {
    c.adam_m.push_back(named(params[k]->name, adam.m[k]));
    c.adam_v.push_back(named(params[k]->name, adam.v[k]));
  }
  c.global_step = global_step;
  c.epoch = epoch;
  return c;
}

template <typename Scalar>
vae::SequenceVae<Scalar> restore_model(const Checkpoint &c) {
  vae::SequenceVae<Scalar> model(c.config.model(c.vocab.size()), c.config.seed);
  std::map<std::string, const NamedTensor *> by_name;
  for (const auto &t : c.parameters) by_name[t.name] = &t;
  for (auto *p : model.parameters()) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw IoError("checkpoint is missing tensor " + p->name);
    assign(p->value, *it->second);
  }
  return model;
}

template <typename Scalar>
nn::AdamState<Scalar> restore_optimizer(const Checkpoint &c) {
  nn::AdamState<Scalar> s;
  s.config.lr = c.config.lr;
  s.step = c.adam_step;
  if (c.adam_m.size() != c.adam_v.size()) throw IoError("checkpoint optimizer moments are inconsistent");
  for (std::size_t k = 0; k < c.adam_m.size(); ++k) {
    nn::Matrix<Scalar> m(c.adam_m[k].rows, c.adam_m[k].cols), v(c.adam_v[k].rows, c.adam_v[k].cols);
    assign(m, c.adam_m[k]);
    assign(v, c.adam_v[k]);
    s.m.push_back(std::move(m));
    s.v.push_back(std::move(v));
  }
  return s;
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &c) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    Writer w(out);
    w.bytes(kMagic.data(), kMagic.size());
    w.integer<std::uint32_t>(c.version);
    w.string(to_json(c.config).dump());
    const auto &tokens = c.vocab.tokens();
    w.integer<std::uint32_t>(static_cast<std::uint32_t>(tokens.size()));
    for (const auto &t : tokens) w.string(t);
    w.tensors(c.parameters);
    w.integer<std::int64_t>(c.adam_step);
    w.tensors(c.adam_m);
    w.tensors(c.adam_v);
    w.integer<std::int64_t>(c.global_step);
    w.integer<std::int32_t>(c.epoch);
    w.bytes(kTrailer.data(), kTrailer.size());
    out.flush();
    if (!out) throw IoError("write failure on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) r.fail("bad magic bytes");
  Checkpoint c;
  c.version = r.integer<std::uint32_t>();
  if (c.version != kCheckpointVersion)
    throw VersionMismatch("checkpoint " + path.string() + " has format version " + std::to_string(c.version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  try {
    c.config = config_from_json(nlohmann::json::parse(r.string()));
  } catch (const nlohmann::json::exception &e) {
    r.fail(std::string("config block: ") + e.what());
  } catch (const ConfigError &e) {
    r.fail(std::string("config block: ") + e.what());
  }
  const auto n_tokens = r.integer<std::uint32_t>();
  if (n_tokens < Vocabulary::kSpecialCount || n_tokens > 1'000'000) r.fail("implausible vocabulary size");
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < n_tokens; ++i) tokens.push_back(r.string());
  if (tokens[Vocabulary::kPad] != Vocabulary().text(Vocabulary::kPad)) r.fail("vocabulary specials out of place");
  c.vocab = Vocabulary(std::vector<std::string>(tokens.begin() + Vocabulary::kSpecialCount, tokens.end()));
  if (c.vocab.tokens() != tokens) r.fail("vocabulary is not canonical");
  c.parameters = r.tensors();
  c.adam_step = r.integer<std::int64_t>();
  c.adam_m = r.tensors();
  c.adam_v = r.tensors();
  c.global_step = r.integer<std::int64_t>();
  c.epoch = r.integer<std::int32_t>();
  std::array<char, 4> trailer{};
  r.bytes(trailer.data(), trailer.size());
  if (trailer != kTrailer) r.fail("bad trailer");
  return c;
}

template Checkpoint make_checkpoint<float>(const TrainConfig &, const Vocabulary &, vae::SequenceVae<float> &,
                                           const nn::AdamState<float> &, long, int);
template Checkpoint make_checkpoint<double>(const TrainConfig &, const Vocabulary &, vae::SequenceVae<double> &,
                                            const nn::AdamState<double> &, long, int);
template vae::SequenceVae<float> restore_model<float>(const Checkpoint &);
template vae::SequenceVae<double> restore_model<double>(const Checkpoint &);
template nn::AdamState<float> restore_optimizer<float>(const Checkpoint &);
template nn::AdamState<double> restore_optimizer<double>(const Checkpoint &);

}  // namespace mvae::training
