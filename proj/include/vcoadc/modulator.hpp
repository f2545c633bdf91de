#pragma once
// Modulator architectures built from the oscillator and digital-logic
// models:
//   * the proposed VCO + modulo-subtractor + DCO/Gray-counter loop, and its
//     generalisation to N integrators (simulate_proposed / simulate_higher_order)
//   * the textbook second-order CT sigma-delta loop (simulate_reference_ctsdm)
//   * the nested integrator + first-order loop + first difference form
//     (simulate_nested), ideal or modulo-wrapped
// All engines advance time in fixed steps dt = 1 / (K fs).

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vcoadc/digital_logic.hpp"
#include "vcoadc/oscillator.hpp"
#include "vcoadc/signal_gen.hpp"

namespace vcoadc {

/// Optional test signals injected inside the loop.
struct LoopInjection {
  /// Tone added at the DCO input, in DAC LSB (emulates DAC nonlinearity nl(t)).
  double stage2_tone_lsb = 0.0;
  double stage2_tone_hz = 0.0;
  /// Pseudo-random integer sequence added to the sampled stage-2 count:
  /// uniform in [-prbs_amplitude, prbs_amplitude]. 0 disables.
  int quantizer_prbs_amplitude = 0;
  std::uint64_t prbs_seed = 0x5eed;
};

struct SimConfig {
  double fs_hz = 3.072e6;
  unsigned oversampling = 512;  // K, engine steps per sampling period
  unsigned word_bits = 6;       // B, width of counters, subtractor and sampler
  bool pseudo_differential = true;
  OscillatorParams vco;         // input VCO, phase-combined (S = used phases)
  OscillatorParams dco;         // DAC-driven ring oscillator, S = 2 * taps
  DacModel dac;
  /// Sampler aperture in seconds; negative selects one engine step.
  double sampler_aperture_s = -1.0;
  SamplerMode sampler_mode = SamplerMode::per_word;
  /// Evaluate the Gray encoder on the ring taps and run the width extender
  /// on every DCO transition. When false the Gray word is formed directly
  /// from the transition count (same values, faster).
  bool bit_accurate = true;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> seed_n;  // N branch; default seed + 1
  std::int64_t warmup_samples = 1024;  // simulated but not recorded
  LoopInjection injection;

  double dt() const { return 1.0 / (fs_hz * oversampling); }
  std::uint64_t n_branch_seed() const { return seed_n.value_or(seed + 1); }
  double aperture_s() const { return sampler_aperture_s < 0.0 ? dt() : sampler_aperture_s; }
  /// Input VCO gain referred to the counter rate, Hz/V.
  double k_vco_eff() const { return vco.k_tune * vco.states_per_cycle; }
  /// DCO gain referred to the counter rate, Hz per DAC LSB.
  double k_dco_eff() const { return dco.k_tune * dac.v_lsb * dco.states_per_cycle; }

  void validate() const;
};

/// Defaults for the audio design point (6 MHz 7-phase VCO, 1.2 MHz 16-tap
/// DCO, 6-bit words, fs = 3.072 MHz).
SimConfig default_config();

/// Sets the DCO tuning slope so that the counter rate is k_eff_hz_per_lsb
/// per DAC code, with code 0 at 0 Hz.
void set_dco_gain(SimConfig& cfg, double k_eff_hz_per_lsb);

enum class EventKind : std::uint8_t {
  vco_clamp,       // input VCO frequency clamped at the floor
  dco_clamp,       // a DCO frequency clamped at the floor
  modulo_wrap,     // a subtractor output left [0, 2^B): counter lost lock
  output_range,    // first difference outside the 5-bit output contract
  aperture_wide,   // more than one transition inside the sampler aperture
  counter_skip,    // a DCO stepped over more than one state in one engine step
};

std::string to_string(EventKind k);

struct Event {
  EventKind kind;
  int branch;           // 0 = P, 1 = N
  std::int64_t sample;  // output sample index (negative during warm-up)
};

struct BranchStats {
  std::int64_t vco_clamp_steps = 0;
  std::int64_t dco_clamp_steps = 0;
  std::int64_t wrap_periods = 0;     // periods with any modulo wrap
  std::int64_t rail_steps = 0;       // steps with a subtractor output at or past a rail
  std::int64_t output_range = 0;
  std::int64_t aperture_wide = 0;
  std::int64_t counter_skips = 0;
  std::int64_t metastable_samples = 0;
  std::int64_t steps = 0;
};

struct BranchTrace {
  std::vector<std::int32_t> y;         // first difference
  std::vector<std::uint32_t> w;        // sampled binary count
  std::vector<std::uint16_t> v1_probe; // first subtractor output at each sampling edge
  std::vector<std::int32_t> injected;  // quantizer injection per sample, if enabled
  BranchStats stats;
};

struct LockReport {
  std::int64_t overload_count = 0;
  std::int64_t multi_wrap_count = 0;
  double v1_saturation_dwell = 0.0;
  std::int64_t aperture_events = 0;
  bool locked = true;
};

struct ModulatorTrace {
  SimConfig config;
  unsigned order = 2;
  bool differential = false;
  BranchTrace p;
  BranchTrace n;
  std::vector<std::int32_t> dout;  // y_p - y_n, or y_p when single-ended
  std::vector<Event> events;       // first kMaxLoggedEvents only
  bool unstable = false;

  static constexpr std::size_t kMaxLoggedEvents = 4096;
  std::size_t samples() const { return dout.size(); }
};

/// Input voltage as a function of engine step index. Implementations fill
/// out[i] with the value at step first + i.
using InputFn = std::function<void(std::span<double> out, std::int64_t first)>;

InputFn input_from_stimulus(const Stimulus& stim, double engine_rate_hz);
/// Engine-rate samples; steps beyond the end read as 0 V.
InputFn input_from_samples(std::vector<double> samples);

/// Full proposed modulator. Runs warmup_samples + n_samples periods; the
/// P branch sees x(t), the N branch -x(t) with n_branch_seed().
ModulatorTrace simulate_proposed(const SimConfig& cfg, const InputFn& input, std::int64_t n_samples);

/// N-integrator generalisation: the input VCO counter followed by N-1 DCO
/// stages, each driven by a modulo subtractor against the sampled output
/// count. gains_hz_per_lsb[j] is the counter-rate gain of DCO j; the last
/// DCO drives the Gray counter. order = 2 with the default gain is exactly
/// simulate_proposed.
ModulatorTrace simulate_higher_order(const SimConfig& cfg, unsigned order, std::span<const double> gains_hz_per_lsb,
                                     const InputFn& input, std::int64_t n_samples);

/// Gains placing all poles of the N-integrator inner loop's NTF at `pole`
/// (0 = dead-beat), returned in Hz/LSB for the given fs.
std::vector<double> higher_order_gains(unsigned order, double fs_hz, double pole);

LockReport lock_check(const ModulatorTrace& trace);

/// Runs one independent simulation job per entry on up to `jobs` threads;
/// results are returned in input order.
std::vector<ModulatorTrace> run_parallel(const std::vector<std::function<ModulatorTrace()>>& jobs, unsigned threads);

// ---------------------------------------------------------------------------
// Idealised continuous-time architectures in count units. The input voltage
// maps to a count rate u(t) = (f_e0 + k_vco_eff x(t)) / fs counts per sample.

/// Both idealised loops use exact integer state; the input rate u(t) is
/// rounded to a multiple of this many counts per sample at each engine step.
inline constexpr double kIdealInputQuantum = 0x1p-30;

struct IdealArchOptions {
  /// Include the VCO rest rate f_e0 in u(t). Off gives a zero-mean input.
  bool rest_offset = true;
  /// Nested form: second integrator gain relative to fs (1 reproduces
  /// (1 - z^-1)^2), rounded to a multiple of 1/1024.
  double k2_over_fs = 1.0;
  /// Initial state in counts: x1 and x2 of the reference loop, or the input
  /// integrator and stage-2 phase of the nested form (w[-1] = 0).
  double x1_init = 0.0;
  double x2_init = 0.0;
  /// Modulo mode for the nested form: wrap integrators and the sampled count
  /// at 2^word_bits. 0 = ideal unbounded integrators.
  unsigned modulo_bits = 0;
  /// Integer pseudo-random sequence added at the quantizer, as LoopInjection.
  int quantizer_prbs_amplitude = 0;
  std::uint64_t prbs_seed = 0x5eed;
  /// Reference loop: error out when |state| exceeds this many steps.
  double divergence_bound = 1e6;
};

struct IdealArchResult {
  std::vector<std::int64_t> y;
  std::vector<double> state_max;   // max |state| per integrator after warm-up
  std::int64_t multi_wraps = 0;    // modulo mode: periods with > 1 wrap or lost lock
  std::vector<std::int64_t> injected;  // quantizer injection sequence, if any
};

/// Second-order CT loop with NRZ feedback: x1' = (u - v)/T, x2' = (x1 - 1.5 v)/T,
/// v[n] = floor(x2(nT)). Throws std::runtime_error if the state diverges.
IdealArchResult simulate_reference_ctsdm(const SimConfig& cfg, const InputFn& input, std::int64_t n_samples,
                                         const IdealArchOptions& opt = {});

/// Input integrator x_SD(t), then a first-order loop whose quantised phase
/// w[n] is fed back to a subtractor, then y[n] = w[n] - w[n-1].
IdealArchResult simulate_nested(const SimConfig& cfg, const InputFn& input, std::int64_t n_samples,
                                const IdealArchOptions& opt = {});

}  // namespace vcoadc
