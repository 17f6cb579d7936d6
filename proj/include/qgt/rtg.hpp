#pragma once

#include <vector>

namespace qgt {

// How the query that identifies the target is rewarded.
enum class FinalReward {
  MinusOne,  // every query costs -1, so the first return-to-go equals -T
  Zero,      // the identifying query earns 0
};

// Return-to-go for each of the T steps of an episode with a reward of -1 per
// query. Empty for T <= 0.
inline std::vector<int> compute_rtg(int episode_length, FinalReward final_reward = FinalReward::MinusOne) {
  std::vector<int> rtg;
  if (episode_length <= 0) return rtg;
  rtg.reserve(static_cast<std::size_t>(episode_length));
  const int shift = final_reward == FinalReward::Zero ? 1 : 0;
  for (int t = 1; t <= episode_length; ++t) rtg.push_back(-(episode_length - t + 1) + shift);
  return rtg;
}

}  // namespace qgt
