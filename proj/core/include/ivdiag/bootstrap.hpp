#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace ivdiag {

// One nonparametric resample.  Plain designs draw n rows with replacement;
// clustered designs draw G whole clusters with replacement and relabel each
// draw as its own cluster.
struct Resample {
  std::vector<Eigen::Index> rows;
  std::vector<int> clusters;  // empty when the scheme is unclustered
};

// Row lists per cluster, precomputed once per bootstrap run.
std::vector<std::vector<Eigen::Index>> cluster_row_index(const std::vector<int>& clusters);

Resample draw_resample(Eigen::Index n, const std::vector<std::vector<Eigen::Index>>* by_cluster,
                       std::mt19937_64& rng);

// Replicate outputs collected in replicate order.
struct BootstrapRun {
  Eigen::MatrixXd draws;  // kept x dim
  int requested = 0;
  int kept = 0;
  int dropped = 0;
};

// Runs `fn` for B replicates with independent (seed, stream, index) engines,
// in parallel.  fn fills a dim-vector and returns false (or throws a
// NumericalError) to discard the replicate.  More than 10% discarded raises
// BootstrapInstabilityError.
BootstrapRun run_bootstrap(
    int boot_reps, std::uint64_t seed, std::uint64_t stream, int threads, Eigen::Index n,
    const std::vector<int>* clusters, int dim,
    const std::function<bool(const Resample&, Eigen::Ref<Eigen::VectorXd>)>& fn);

// Covariance of the kept draws (denominator kept-1).
Eigen::MatrixXd bootstrap_cov(const BootstrapRun& run);

}  // namespace ivdiag
