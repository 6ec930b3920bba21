#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cas {

/// Levels of autonomy, fully ordered by rank.
enum class Level : std::uint8_t {
  kNone = 0,         // human performs the action manually
  kVerified = 1,     // human approves before the attempt
  kSupervised = 2,   // human watches and may override
  kUnsupervised = 3,
};

inline constexpr int kNumLevels = 4;
inline constexpr std::array<Level, kNumLevels> kAllLevels{
    Level::kNone, Level::kVerified, Level::kSupervised, Level::kUnsupervised};

constexpr int rank(Level l) noexcept { return static_cast<int>(l); }
constexpr Level level_from_rank(int r) noexcept { return static_cast<Level>(r); }

/// The current level and its chain neighbours, ordered by rank.
std::vector<Level> adjacent_levels(Level current);

/// Subset of levels as a bit set.
class LevelMask {
 public:
  constexpr LevelMask() = default;
  constexpr LevelMask(std::initializer_list<Level> levels) {
    for (Level l : levels) insert(l);
  }
  static constexpr LevelMask all() { return from_bits(0x0F); }
  static constexpr LevelMask from_bits(std::uint8_t bits) {
    LevelMask m;
    m.bits_ = static_cast<std::uint8_t>(bits & 0x0F);
    return m;
  }

  constexpr bool contains(Level l) const { return (bits_ >> rank(l)) & 1U; }
  constexpr void insert(Level l) { bits_ = static_cast<std::uint8_t>(bits_ | (1U << rank(l))); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool subset_of(LevelMask other) const { return (bits_ & ~other.bits_) == 0; }
  constexpr LevelMask operator|(LevelMask other) const { return from_bits(bits_ | other.bits_); }
  constexpr bool operator==(const LevelMask&) const = default;

  std::vector<Level> levels() const;
  /// Highest contained level; undefined on an empty mask.
  Level highest() const;

 private:
  std::uint8_t bits_ = 0;
};

/// Feedback signals of the four-level model.
enum class Signal : std::uint8_t {
  kNone = 0,        // no feedback (supervised, no intervention)
  kApprove = 1,
  kDisapprove = 2,
  kOverride = 3,
};

inline constexpr int kNumSignals = 4;

/// Probability over all four signals; mass on invalid signals must be zero.
using SignalDistribution = std::array<double, kNumSignals>;

/// Approve/disapprove at verified, none/override at supervised, nothing
/// elsewhere.
std::span<const Signal> valid_signals(Level level);
bool signal_valid(Signal signal, Level level);
constexpr bool has_feedback(Level l) { return l == Level::kVerified || l == Level::kSupervised; }

/// Uniform over the signals valid at `level`; all zero when none are.
SignalDistribution uniform_distribution(Level level);

std::string_view to_string(Level level);
std::string_view to_string(Signal signal);
std::optional<Level> parse_level(std::string_view text);
std::optional<Signal> parse_signal(std::string_view text);

}  // namespace cas
