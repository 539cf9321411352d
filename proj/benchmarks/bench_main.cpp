// Microbenchmarks for the hot paths: plain least squares, the instrumented
// fit, bootstrap resampling, and confidence-set inversion.
#include <random>

#include <benchmark/benchmark.h>

#include "ivdiag/inference.hpp"
#include "ivdiag/iv.hpp"
#include "ivdiag/regression.hpp"
#include "ivdiag/rng.hpp"

namespace {

using namespace ivdiag;

IVModel make_model(Eigen::Index n, int p_z, double pi, std::uint64_t seed) {
  auto engine = replicate_engine(seed, 0xBE, 0);
  std::normal_distribution<double> normal;
  IVModel model;
  model.y.resize(n);
  model.d.resize(n);
  model.Z.resize(n, p_z);
  model.covariates.resize(n, 2);
  model.add_intercept = true;
  for (int j = 0; j < p_z; ++j) model.instrument_names.push_back("z" + std::to_string(j));
  model.covariate_names = {"x1", "x2"};
  for (Eigen::Index i = 0; i < n; ++i) {
    double zsum = 0.0;
    for (int j = 0; j < p_z; ++j) {
      const double z = normal(engine);
      model.Z(i, j) = z;
      zsum += z;
    }
    model.covariates(i, 0) = normal(engine);
    model.covariates(i, 1) = normal(engine);
    const double nu = normal(engine);
    const double eps = 0.5 * nu + normal(engine);
    model.d[i] = pi * zsum + nu + 0.3 * model.covariates(i, 0);
    model.y[i] = 1.5 * model.d[i] + eps + 0.2 * model.covariates(i, 1);
  }
  return model;
}

void bm_ols_fit(benchmark::State& state) {
  const auto model = make_model(state.range(0), 1, 0.8, 7);
  Eigen::MatrixXd X(model.n(), 1 + model.covariates.cols());
  X.col(0) = model.d;
  X.rightCols(2) = model.covariates;
  FitOptions opts;
  opts.flavor = VCovFlavor::hc1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ols_fit(model.y, X, opts));
  }
}
BENCHMARK(bm_ols_fit)->Arg(1000)->Arg(10000);

void bm_tsls_fit(benchmark::State& state) {
  const auto model = make_model(state.range(0), 1, 0.8, 7);
  FitOptions opts;
  opts.flavor = VCovFlavor::hc1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsls_fit(model, opts));
  }
}
BENCHMARK(bm_tsls_fit)->Arg(1000)->Arg(10000);

void bm_bootstrap_infer(benchmark::State& state) {
  const auto model = make_model(2000, 1, 0.8, 7);
  FitOptions opts;
  opts.flavor = VCovFlavor::hc1;
  opts.boot_reps = static_cast<int>(state.range(0));
  opts.seed = 11;
  opts.threads = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bootstrap_infer(model, opts));
  }
}
BENCHMARK(bm_bootstrap_infer)->Arg(200)->Arg(400);

void bm_ar_confidence_set(benchmark::State& state) {
  const auto model = make_model(2000, static_cast<int>(state.range(0)), 0.25, 7);
  FitOptions opts;
  opts.flavor = VCovFlavor::hc1;
  ARSetOptions set_opts;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ar_confidence_set(model, opts, set_opts));
  }
}
BENCHMARK(bm_ar_confidence_set)->Arg(1)->Arg(3);

}  // namespace

BENCHMARK_MAIN();
