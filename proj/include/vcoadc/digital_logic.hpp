#pragma once
// Bit-accurate loop elements: ring-oscillator Gray encoder, Gray width
// extender, Gray/binary conversion, modulo subtractor, metastable sampler and
// the output first difference.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "vcoadc/types.hpp"

namespace vcoadc {

/// XOR encoder driven directly by the taps of a differential ring oscillator
/// with M = 2^bits taps. Bit n < bits-2 is the parity of taps 2^n(2j-1),
/// j = 1..M/2^(n+1); the two MSBs each need a single XOR.
DigitalWord gray_from_phases(const TapVector& taps, unsigned bits);

DigitalWord gray_to_binary(const DigitalWord& g);
DigitalWord binary_to_gray(const DigitalWord& b);

/// (x + 2^B - w) mod 2^B. Both operands binary and of equal width.
DigitalWord mod_subtract(const DigitalWord& x, const DigitalWord& w);

/// Widens the Gray count of a small ring-oscillator counter by clocking a
/// Gray counter on both edges of the input MSB. The low bits pass straight
/// through. Output equals binary_to_gray(c mod 2^out_bits) up to a constant
/// offset, c being the number of input transitions since reset.
class GrayExtender {
 public:
  GrayExtender(unsigned in_bits, unsigned out_bits);

  /// Start-up reset: latches the current input word and aligns the extra
  /// bits with it.
  void reset(const DigitalWord& gc);
  /// Feed the next input word. Throws std::logic_error unless the input
  /// advanced by exactly one count (counting up).
  DigitalWord update(const DigitalWord& gc);
  DigitalWord output() const;

  unsigned in_bits() const { return in_bits_; }
  unsigned out_bits() const { return out_bits_; }

 private:
  unsigned in_bits_;
  unsigned out_bits_;
  std::uint32_t last_in_ = 0;   // binary value of the last input
  std::uint32_t msb_edges_ = 0; // edges seen on the input MSB, mod 2^(out-in+1)
  bool primed_ = false;
};

enum class SamplerMode : std::uint8_t { per_word, per_bit };

struct SamplerModel {
  double aperture_s = 0.0;  // 0 => ideal sampling
  std::uint64_t seed = 1;
  SamplerMode mode = SamplerMode::per_word;
};

/// Word transitions of an asynchronous counter around a sampling edge.
struct CounterTrajectory {
  struct Transition {
    double time_s;
    DigitalWord word;  // value after the transition
  };
  DigitalWord initial;                   // value before the first transition
  std::vector<Transition> transitions;   // ascending time
};

struct SampleResult {
  DigitalWord word;
  bool metastable = false;          // a transition fell inside the aperture
  bool aperture_too_wide = false;   // more than one did
};

/// Register that samples an asynchronous counter. A transition inside the
/// aperture resolves to the old or new word (per_word), or bit by bit
/// (per_bit, the failure mode of a binary counter).
class Sampler {
 public:
  explicit Sampler(const SamplerModel& model);

  SampleResult sample(const CounterTrajectory& traj, double t_s);
  /// Fast path for a single candidate transition at time t_edge.
  SampleResult sample_edge(const DigitalWord& before, const DigitalWord& after, double t_edge, double t_s);

  const SamplerModel& model() const { return model_; }

 private:
  DigitalWord resolve(const DigitalWord& before, const DigitalWord& after);

  SamplerModel model_;
  std::mt19937_64 rng_;
};

/// Output first difference of a B-bit binary stream with w[-1] = 0:
/// y[n] = ((w[n] - w[n-1] + 2^(B-1)) mod 2^B) - 2^(B-1).
std::vector<std::int32_t> first_difference(std::span<const std::uint32_t> w, unsigned bits);

/// Incremental first difference; also checks the per-branch output contract
/// 0 <= y < 2^(B-1).
class FirstDifference {
 public:
  explicit FirstDifference(unsigned bits) : bits_(bits) {}
  std::int32_t operator()(std::uint32_t w);
  bool last_out_of_range() const { return out_of_range_; }
  void reset(std::uint32_t w_prev = 0) { prev_ = w_prev; }

 private:
  unsigned bits_;
  std::uint32_t prev_ = 0;
  bool out_of_range_ = false;
};

}  // namespace vcoadc
