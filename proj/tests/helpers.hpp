#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "nightcast/autodiff.hpp"
#include "nightcast/rng.hpp"

namespace nightcast::testing {

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("nightcast_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string operator/(const std::string& rel) const {
    return (path / rel).string();
  }
};

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Central-difference check of d(loss)/d(params) for a scalar-valued graph.
// Returns the worst relative error over every parameter element.
template <typename LossFn>
double gradcheck(std::vector<Param*> params, LossFn loss_fn,
                 double step = 1e-5) {
  // analytic
  for (Param* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (Param* p : params) {
    for (long i = 0; i < p->value.numel(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      double up, down;
      {
        Tape tape(/*grad_enabled=*/false);
        up = loss_fn(tape).value()[0];
      }
      p->value[i] = saved - step;
      {
        Tape tape(/*grad_enabled=*/false);
        down = loss_fn(tape).value()[0];
      }
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace nightcast::testing
