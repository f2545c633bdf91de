#include "vcoadc/digital_logic.hpp"

#include <bit>
#include <string>

namespace vcoadc {

namespace {

std::uint32_t low_mask(unsigned bits) {
  return bits >= 32 ? 0xffffffffu : (std::uint32_t{1} << bits) - 1u;
}

std::uint32_t gray_decode(std::uint32_t g) {
  // prefix XOR from the MSB down
  for (unsigned shift = 1; shift < 32; shift <<= 1) g ^= g >> shift;
  return g;
}

}  // namespace

DigitalWord gray_from_phases(const TapVector& taps, unsigned bits) {
  if (bits < 2 || bits > 6) throw ConfigError("gray_from_phases: bit count must be in [2, 6]");
  const unsigned m = 1u << bits;
  if (taps.taps != m)
    throw ConfigError("gray_from_phases: " + std::to_string(bits) + "-bit encoder needs " + std::to_string(m) +
                      " taps, got " + std::to_string(taps.taps));
  std::uint32_t gc = 0;
  for (unsigned n = 0; n + 2 < bits; ++n) {
    bool parity = false;
    const unsigned step = 1u << n;
    for (unsigned j = 1; j <= m / (2u * step); ++j) parity ^= taps[step * (2 * j - 1)];
    gc |= std::uint32_t{parity} << n;
  }
  gc |= std::uint32_t{taps[m / 4] != taps[3 * m / 4]} << (bits - 2);
  gc |= std::uint32_t{taps[m / 2] != taps[0]} << (bits - 1);
  return DigitalWord::gray(gc, bits);
}

DigitalWord gray_to_binary(const DigitalWord& g) {
  if (g.encoding() != Encoding::gray) throw EncodingError("gray_to_binary: input is not Gray-encoded");
  return DigitalWord::binary(gray_decode(g.value()), g.width());
}

DigitalWord binary_to_gray(const DigitalWord& b) {
  if (b.encoding() != Encoding::binary) throw EncodingError("binary_to_gray: input is not binary");
  return DigitalWord::gray(b.value() ^ (b.value() >> 1), b.width());
}

DigitalWord mod_subtract(const DigitalWord& x, const DigitalWord& w) {
  if (x.encoding() != Encoding::binary || w.encoding() != Encoding::binary)
    throw EncodingError("mod_subtract: operands must be binary");
  if (x.width() != w.width()) throw EncodingError("mod_subtract: operand widths differ");
  const std::uint64_t m = x.modulus();
  return DigitalWord::binary(static_cast<std::uint32_t>((x.value() + m - w.value()) % m), x.width());
}

// ---------------------------------------------------------------------------

GrayExtender::GrayExtender(unsigned in_bits, unsigned out_bits) : in_bits_(in_bits), out_bits_(out_bits) {
  if (in_bits < 2 || out_bits < in_bits || out_bits > 31) throw ConfigError("GrayExtender: need 2 <= in_bits <= out_bits <= 31");
}

void GrayExtender::reset(const DigitalWord& gc) {
  if (gc.width() != in_bits_) throw EncodingError("GrayExtender: input width mismatch");
  last_in_ = gray_to_binary(gc).value();
  msb_edges_ = last_in_ >> (in_bits_ - 1);
  primed_ = true;
}

DigitalWord GrayExtender::update(const DigitalWord& gc) {
  if (!primed_) {
    reset(gc);
    return output();
  }
  if (gc.width() != in_bits_) throw EncodingError("GrayExtender: input width mismatch");
  const std::uint32_t in = gray_to_binary(gc).value();
  if (in == last_in_) return output();
  if (in != ((last_in_ + 1) & low_mask(in_bits_)))
    throw std::logic_error("GrayExtender: input jumped from " + std::to_string(last_in_) + " to " + std::to_string(in));
  if ((in ^ last_in_) >> (in_bits_ - 1)) msb_edges_ = (msb_edges_ + 1) & low_mask(out_bits_ - in_bits_ + 1);
  last_in_ = in;
  return output();
}

DigitalWord GrayExtender::output() const {
  const std::uint32_t count = (msb_edges_ << (in_bits_ - 1)) | (last_in_ & low_mask(in_bits_ - 1));
  return binary_to_gray(DigitalWord::binary(count & low_mask(out_bits_), out_bits_));
}

// ---------------------------------------------------------------------------

Sampler::Sampler(const SamplerModel& model) : model_(model), rng_(model.seed) {
  if (!(model.aperture_s >= 0.0)) throw ConfigError("SamplerModel: aperture must be >= 0");
}

DigitalWord Sampler::resolve(const DigitalWord& before, const DigitalWord& after) {
  if (model_.mode == SamplerMode::per_word) return (rng_() & 1u) ? after : before;
  std::uint32_t v = before.value();
  std::uint32_t diff = before.value() ^ after.value();
  while (diff) {
    const std::uint32_t bit = diff & (~diff + 1u);
    if (rng_() & 1u) v ^= bit;
    diff &= diff - 1u;
  }
  return DigitalWord(v, after.width(), after.encoding());
}

SampleResult Sampler::sample(const CounterTrajectory& traj, double t_s) {
  const double lo = t_s - 0.5 * model_.aperture_s;
  const double hi = t_s + 0.5 * model_.aperture_s;
  DigitalWord before = traj.initial;
  std::optional<DigitalWord> window_start;
  DigitalWord window_end = traj.initial;
  int inside = 0;
  for (const auto& tr : traj.transitions) {
    if (model_.aperture_s > 0.0 && tr.time_s >= lo && tr.time_s <= hi) {
      if (!window_start) window_start = before;
      window_end = tr.word;
      ++inside;
    } else if (tr.time_s <= t_s) {
      window_end = tr.word;
    }
    before = tr.word;
    if (tr.time_s > hi) break;
  }
  SampleResult r;
  if (inside == 0) {
    r.word = window_end;
    return r;
  }
  r.metastable = true;
  r.aperture_too_wide = inside > 1;
  r.word = resolve(*window_start, window_end);
  return r;
}

SampleResult Sampler::sample_edge(const DigitalWord& before, const DigitalWord& after, double t_edge, double t_s) {
  SampleResult r;
  const double half = 0.5 * model_.aperture_s;
  if (model_.aperture_s > 0.0 && t_edge >= t_s - half && t_edge <= t_s + half) {
    r.metastable = true;
    r.word = resolve(before, after);
  } else {
    r.word = t_edge <= t_s ? after : before;
  }
  return r;
}

// ---------------------------------------------------------------------------

std::vector<std::int32_t> first_difference(std::span<const std::uint32_t> w, unsigned bits) {
  FirstDifference diff(bits);
  std::vector<std::int32_t> y;
  y.reserve(w.size());
  for (std::uint32_t v : w) y.push_back(diff(v));
  return y;
}

std::int32_t FirstDifference::operator()(std::uint32_t w) {
  const std::int64_t m = std::int64_t{1} << bits_;
  const std::int64_t half = m / 2;
  const std::int64_t d = ((static_cast<std::int64_t>(w) - prev_ + half) % m + m) % m - half;
  prev_ = w;
  out_of_range_ = d < 0 || d >= half;
  return static_cast<std::int32_t>(d);
}

}  // namespace vcoadc
