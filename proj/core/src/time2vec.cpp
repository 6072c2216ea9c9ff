#include "nightcast/time2vec.hpp"

namespace nightcast {

Time2Vec::Time2Vec(const Time2VecConfig& cfg, Rng& rng)
    : omega("time2vec.omega", Tensor({cfg.size})),
      phi("time2vec.phi", Tensor({cfg.size})),
      cfg_(cfg) {
  cfg.validate();
  for (long i = 0; i < cfg.size; ++i) {
    omega.value[i] = rng.uniform();
    phi.value[i] = rng.uniform();
  }
}

Var Time2Vec::embed(Tape& tape, const std::vector<long>& day_indices) const {
  const long S = static_cast<long>(day_indices.size());
  const long K = cfg_.size;
  Tensor t_col({S, 1});
  for (long s = 0; s < S; ++s) {
    t_col[s] = static_cast<double>(day_indices[static_cast<std::size_t>(s)]);
  }
  Var t = tape.constant(std::move(t_col));
  Var omega_row =
      tape.reshape(tape.param(const_cast<Param&>(omega)), {1, K});
  Var phase = tape.add_row(tape.matmul(t, omega_row),
                           tape.param(const_cast<Param&>(phi)));  // (S, K)
  if (K == 1) return phase;
  Var linear_part = tape.slice(phase, 1, 0, 1);
  Var periodic = tape.sin_fn(tape.slice(phase, 1, 1, K - 1));
  return tape.concat({linear_part, periodic}, 1);
}

void Time2Vec::collect(std::vector<Param*>& out) {
  out.push_back(&omega);
  out.push_back(&phi);
}

std::vector<double> time2vec_values(double t, const std::vector<double>& omega,
                                    const std::vector<double>& phi) {
  if (omega.empty() || omega.size() != phi.size()) {
    throw ValidationError("time2vec: omega and phi must be nonempty and equal-sized");
  }
  std::vector<double> out(omega.size());
  out[0] = omega[0] * t + phi[0];
  for (std::size_t i = 1; i < omega.size(); ++i) {
    out[i] = std::sin(omega[i] * t + phi[i]);
  }
  return out;
}

Var concat_embeddings(Tape& tape, Var v, Var tau) {
  if (v.shape().size() != 3 || tau.shape().size() != 2) {
    throw ShapeError("concat_embeddings: expected v (V,S,P) and tau (S,K)");
  }
  if (v.dim(1) != tau.dim(0)) {
    throw ShapeError("concat_embeddings: step count mismatch, v has " +
                     std::to_string(v.dim(1)) + " steps, tau has " +
                     std::to_string(tau.dim(0)));
  }
  Var tiled = tape.tile_front(tau, v.dim(0));  // (V, S, K)
  return tape.concat({v, tiled}, 2);
}

}  // namespace nightcast
