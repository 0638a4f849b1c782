#include "cflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace cflow {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_f64_array(std::string& out, const Vec& v) {
  put_u64(out, v.size());
  for (double x : v) put_f64(out, x);
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;

  void need(std::size_t n, const char* field) {
    if (pos + n > data.size())
      throw IoError(std::string("checkpoint truncated while reading ") + field);
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(data[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* field) { return std::bit_cast<double>(u64(field)); }
  Vec f64_array(const char* field) {
    const std::uint64_t n = u64(field);
    need(8 * n, field);
    Vec v(n);
    for (std::uint64_t i = 0; i < n; ++i) v[i] = f64(field);
    return v;
  }
};

constexpr char kMagic[4] = {'S', 'C', 'F', 'L'};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, Checkpoint::kVersion);
  put_u64(out, ckpt.widths.size());
  for (std::size_t w : ckpt.widths) put_u64(out, w);
  put_f64_array(out, ckpt.params);
  put_f64_array(out, ckpt.ema);
  put_f64_array(out, ckpt.adam_m);
  put_f64_array(out, ckpt.adam_v);
  put_u64(out, ckpt.adam_step);
  put_f64(out, ckpt.learning_rate);
  put_f64(out, ckpt.beta1);
  put_f64(out, ckpt.beta2);
  put_f64(out, ckpt.epsilon);
  put_u64(out, ckpt.iteration);
  put_u64(out, ckpt.config_hash);
  put_u64(out, ckpt.rng_seed);

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open checkpoint for writing: " + path);
  file.write(out.data(), std::streamsize(out.size()));
  if (!file) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  Reader r{data};
  r.need(4, "magic");
  if (std::memcmp(data.data(), kMagic, 4) != 0)
    throw IoError("checkpoint magic mismatch (not a SCFL file)");
  r.pos = 4;
  const std::uint32_t version = r.u32("version");
  if (version != Checkpoint::kVersion)
    throw IoError("checkpoint version mismatch: got " + std::to_string(version) + ", expected " +
                  std::to_string(Checkpoint::kVersion));

  Checkpoint ckpt;
  const std::uint64_t n_widths = r.u64("widths");
  r.need(8 * n_widths, "widths");
  ckpt.widths.resize(n_widths);
  for (std::uint64_t i = 0; i < n_widths; ++i) ckpt.widths[i] = std::size_t(r.u64("widths"));
  ckpt.params = r.f64_array("parameters");
  ckpt.ema = r.f64_array("ema parameters");
  ckpt.adam_m = r.f64_array("adam first moment");
  ckpt.adam_v = r.f64_array("adam second moment");
  ckpt.adam_step = r.u64("adam step");
  ckpt.learning_rate = r.f64("learning rate");
  ckpt.beta1 = r.f64("beta1");
  ckpt.beta2 = r.f64("beta2");
  ckpt.epsilon = r.f64("epsilon");
  ckpt.iteration = r.u64("iteration");
  ckpt.config_hash = r.u64("config hash");
  ckpt.rng_seed = r.u64("rng seed");
  if (r.pos != data.size()) throw IoError("checkpoint has trailing bytes");

  const std::size_t expect = Mlp::param_count_for(ckpt.widths);
  if (ckpt.params.size() != expect || ckpt.ema.size() != expect ||
      ckpt.adam_m.size() != expect || ckpt.adam_v.size() != expect)
    throw IoError("checkpoint array lengths do not match layer widths");
  return ckpt;
}

}  // namespace cflow
