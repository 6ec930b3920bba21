#include "cas/levels.hpp"

namespace cas {

namespace {
constexpr std::array<Signal, 2> kVerifiedSignals{Signal::kApprove, Signal::kDisapprove};
constexpr std::array<Signal, 2> kSupervisedSignals{Signal::kNone, Signal::kOverride};
}  // namespace

std::vector<Level> adjacent_levels(Level current) {
  std::vector<Level> out;
  for (int r = rank(current) - 1; r <= rank(current) + 1; ++r)
    if (r >= 0 && r < kNumLevels) out.push_back(level_from_rank(r));
  return out;
}

std::vector<Level> LevelMask::levels() const {
  std::vector<Level> out;
  for (Level l : kAllLevels)
    if (contains(l)) out.push_back(l);
  return out;
}

Level LevelMask::highest() const {
  for (int r = kNumLevels - 1; r > 0; --r)
    if (contains(level_from_rank(r))) return level_from_rank(r);
  return Level::kNone;
}

std::span<const Signal> valid_signals(Level level) {
  switch (level) {
    case Level::kVerified: return kVerifiedSignals;
    case Level::kSupervised: return kSupervisedSignals;
    default: return {};
  }
}

bool signal_valid(Signal signal, Level level) {
  for (Signal s : valid_signals(level))
    if (s == signal) return true;
  return false;
}

SignalDistribution uniform_distribution(Level level) {
  SignalDistribution d{};
  const auto valid = valid_signals(level);
  for (Signal s : valid) d[static_cast<std::size_t>(s)] = 1.0 / static_cast<double>(valid.size());
  return d;
}

std::string_view to_string(Level level) {
  switch (level) {
    case Level::kNone: return "l0";
    case Level::kVerified: return "l1";
    case Level::kSupervised: return "l2";
    case Level::kUnsupervised: return "l3";
  }
  return "?";
}

std::string_view to_string(Signal signal) {
  switch (signal) {
    case Signal::kNone: return "none";
    case Signal::kApprove: return "approve";
    case Signal::kDisapprove: return "disapprove";
    case Signal::kOverride: return "override";
  }
  return "?";
}

std::optional<Level> parse_level(std::string_view text) {
  for (Level l : kAllLevels)
    if (text == to_string(l)) return l;
  if (text.size() == 1 && text[0] >= '0' && text[0] <= '3') return level_from_rank(text[0] - '0');
  return std::nullopt;
}

std::optional<Signal> parse_signal(std::string_view text) {
  for (int i = 0; i < kNumSignals; ++i) {
    const auto s = static_cast<Signal>(i);
    if (text == to_string(s)) return s;
  }
  return std::nullopt;
}

}  // namespace cas
