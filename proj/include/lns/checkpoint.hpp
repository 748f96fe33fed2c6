#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "lns/error.hpp"
#include "lns/network.hpp"

namespace lns {

/**
 * Binary checkpoint, little-endian:
 *
 *   "LNSCKPT\0"  u32 version
 *   u64 input_dim, hidden_dim, num_classes
 *   u64 master_seed, iteration
 *   f64 period, f64 gamma, u64 next_update
 *   params:  w1, b1, w_out, b_out               (f64 arrays)
 *   adam:    m_w1, v_w1, steps_w1, m_b1, v_b1, steps_b1,
 *            m_out, v_out, steps_out, m_bout, v_bout, global_step
 *
 * Array lengths follow from the shape. Hash tables are not stored; they are
 * rebuilt from w_out when a checkpoint is loaded.
 */
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  NetworkParams params;
  AdamState adam;
  UpdateSchedule schedule;
  std::uint64_t master_seed = 0;
  std::uint64_t iteration = 0;
};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace detail {

inline constexpr std::array<char, 8> kCheckpointMagic = {'L', 'N', 'S', 'C', 'K', 'P', 'T', '\0'};

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  }
  template <class T>
  void scalar(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  template <class T>
  void array(const std::vector<T>& v) {
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(T)));
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw NotFoundError("cannot open checkpoint '" + path + "'");
  }
  template <class T>
  T scalar() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  template <class T>
  void array(std::vector<T>& v) {
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    check();
  }
  void raw(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    check();
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  std::uint64_t remaining() {
    const auto here = in_.tellg();
    in_.seekg(0, std::ios::end);
    const auto end = in_.tellg();
    in_.seekg(here);
    return static_cast<std::uint64_t>(end - here);
  }

 private:
  void check() {
    if (!in_) throw std::runtime_error("checkpoint is truncated");
  }
  std::ifstream in_;
};

// Bytes after the fixed header for a given shape; UINT64_MAX on overflow.
inline std::uint64_t payload_bytes(const NetworkShape& s) {
  std::uint64_t in_h = 0, out_h = 0, total = 0;
  const std::uint64_t h = s.hidden_dim;
  if (__builtin_mul_overflow(std::uint64_t{s.input_dim}, h, &in_h) ||
      __builtin_mul_overflow(std::uint64_t{s.num_classes}, h, &out_h)) {
    return UINT64_MAX;
  }
  // params w1, b1, w_out, b_out; adam m/v for each plus per-row step counters
  const std::uint64_t words[] = {in_h, h, out_h, s.num_classes, in_h, in_h, s.input_dim, h, h, 1,
                                 out_h, out_h, s.num_classes, s.num_classes, s.num_classes, 1};
  for (std::uint64_t w : words) {
    if (__builtin_add_overflow(total, w, &total)) return UINT64_MAX;
  }
  return __builtin_mul_overflow(total, std::uint64_t{8}, &total) ? UINT64_MAX : total;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  detail::BinaryWriter w(path);
  w.raw(detail::kCheckpointMagic.data(), detail::kCheckpointMagic.size());
  w.scalar(Checkpoint::kVersion);
  const auto& s = ck.params.shape;
  w.scalar<std::uint64_t>(s.input_dim);
  w.scalar<std::uint64_t>(s.hidden_dim);
  w.scalar<std::uint64_t>(s.num_classes);
  w.scalar(ck.master_seed);
  w.scalar(ck.iteration);
  w.scalar(ck.schedule.period);
  w.scalar(ck.schedule.gamma);
  w.scalar(ck.schedule.next_update);
  w.array(ck.params.w1.data());
  w.array(ck.params.b1);
  w.array(ck.params.w_out.data());
  w.array(ck.params.b_out);
  const auto& a = ck.adam;
  w.array(a.m_w1.data());
  w.array(a.v_w1.data());
  w.array(a.steps_w1);
  w.array(a.m_b1);
  w.array(a.v_b1);
  w.scalar(a.steps_b1);
  w.array(a.m_out.data());
  w.array(a.v_out.data());
  w.array(a.steps_out);
  w.array(a.m_bout);
  w.array(a.v_bout);
  w.scalar(a.global_step);
  w.finish();
}

inline Checkpoint load_checkpoint(const std::string& path) {
  detail::BinaryReader r(path);
  std::array<char, 8> magic{};
  r.raw(magic.data(), magic.size());
  if (magic != detail::kCheckpointMagic) throw std::runtime_error("not a checkpoint file");
  const auto version = r.scalar<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  NetworkShape s;
  s.input_dim = r.scalar<std::uint64_t>();
  s.hidden_dim = r.scalar<std::uint64_t>();
  s.num_classes = r.scalar<std::uint64_t>();
  ck.master_seed = r.scalar<std::uint64_t>();
  ck.iteration = r.scalar<std::uint64_t>();
  ck.schedule.period = r.scalar<double>();
  ck.schedule.gamma = r.scalar<double>();
  ck.schedule.next_update = r.scalar<std::uint64_t>();
  if (detail::payload_bytes(s) != r.remaining()) {
    throw std::runtime_error("checkpoint size does not match its header");
  }
  ck.params.shape = s;
  ck.params.w1 = Matrix(s.input_dim, s.hidden_dim);
  ck.params.b1.resize(s.hidden_dim);
  ck.params.w_out = Matrix(s.num_classes, s.hidden_dim);
  ck.params.b_out.resize(s.num_classes);
  r.array(ck.params.w1.data());
  r.array(ck.params.b1);
  r.array(ck.params.w_out.data());
  r.array(ck.params.b_out);
  ck.adam = AdamState::zeros(s);
  auto& a = ck.adam;
  r.array(a.m_w1.data());
  r.array(a.v_w1.data());
  r.array(a.steps_w1);
  r.array(a.m_b1);
  r.array(a.v_b1);
  a.steps_b1 = r.scalar<std::uint64_t>();
  r.array(a.m_out.data());
  r.array(a.v_out.data());
  r.array(a.steps_out);
  r.array(a.m_bout);
  r.array(a.v_bout);
  a.global_step = r.scalar<std::uint64_t>();
  if (!r.at_end()) throw std::runtime_error("checkpoint has trailing bytes");
  return ck;
}

}  // namespace lns
