#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vcoadc {

/// Invalid user-supplied configuration or parameters. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Two words with incompatible encodings or widths were combined.
class EncodingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Encoding : std::uint8_t { binary, gray };

inline const char* to_string(Encoding e) { return e == Encoding::binary ? "binary" : "gray"; }

/// Unsigned word of a declared bit width, tagged with its encoding.
/// Invariant: value < 2^width, 1 <= width <= 32.
class DigitalWord {
 public:
  DigitalWord() = default;
  DigitalWord(std::uint32_t value, unsigned width, Encoding enc) : value_(value), width_(width), enc_(enc) {
    if (width < 1 || width > 32) throw std::logic_error("DigitalWord width must be in [1, 32]");
    if (width < 32 && value >= (std::uint64_t{1} << width))
      throw std::logic_error("DigitalWord value " + std::to_string(value) + " does not fit in " +
                             std::to_string(width) + " bits");
  }

  static DigitalWord binary(std::uint32_t value, unsigned width) { return {value, width, Encoding::binary}; }
  static DigitalWord gray(std::uint32_t value, unsigned width) { return {value, width, Encoding::gray}; }

  std::uint32_t value() const { return value_; }
  unsigned width() const { return width_; }
  Encoding encoding() const { return enc_; }
  std::uint64_t modulus() const { return std::uint64_t{1} << width_; }
  bool bit(unsigned b) const { return (value_ >> b) & 1u; }

  friend bool operator==(const DigitalWord&, const DigitalWord&) = default;

 private:
  std::uint32_t value_ = 0;
  unsigned width_ = 1;
  Encoding enc_ = Encoding::binary;
};

/// Logic levels of the M output phases of a ring oscillator, bit k = phase k.
struct TapVector {
  std::uint64_t bits = 0;
  unsigned taps = 0;

  bool operator[](unsigned k) const { return (bits >> k) & 1u; }
  void set(unsigned k, bool level) {
    if (level) bits |= std::uint64_t{1} << k;
    else bits &= ~(std::uint64_t{1} << k);
  }
  friend bool operator==(const TapVector&, const TapVector&) = default;
};

}  // namespace vcoadc
