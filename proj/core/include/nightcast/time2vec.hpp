#pragma once

#include <vector>

#include "nightcast/nn.hpp"

namespace nightcast {

struct Time2VecConfig {
  long size = 64;  // K

  void validate() const {
    if (size < 1) throw ValidationError("time embedding size must be >= 1");
  }
};

// Learnable clock: component 0 is linear in t, the rest are sinusoids with
// learned frequency and phase. t is the day index relative to event start.
class Time2Vec {
 public:
  Time2Vec() = default;
  Time2Vec(const Time2VecConfig& cfg, Rng& rng);

  // (S,) day indices -> (S, K)
  Var embed(Tape& tape, const std::vector<long>& day_indices) const;

  long size() const { return cfg_.size; }
  const Time2VecConfig& config() const { return cfg_; }
  void collect(std::vector<Param*>& out);

  Param omega;  // (K)
  Param phi;    // (K)

 private:
  Time2VecConfig cfg_;
};

// Plain evaluation of the embedding for one time coordinate.
std::vector<double> time2vec_values(double t, const std::vector<double>& omega,
                                    const std::vector<double>& phi);

// Broadcasts the per-step time embedding to every node and concatenates:
// v (V, S, P) ++ tau (S, K) -> (V, S, P + K).
Var concat_embeddings(Tape& tape, Var v, Var tau);

}  // namespace nightcast
