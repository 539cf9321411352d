#include "ivdiag/bootstrap.hpp"

#include <algorithm>
#include <string>

#include "ivdiag/errors.hpp"
#include "ivdiag/rng.hpp"

namespace ivdiag {

std::vector<std::vector<Eigen::Index>> cluster_row_index(const std::vector<int>& clusters) {
  int G = 0;
  for (int c : clusters) G = std::max(G, c + 1);
  std::vector<std::vector<Eigen::Index>> by_cluster(static_cast<std::size_t>(G));
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    by_cluster[static_cast<std::size_t>(clusters[i])].push_back(static_cast<Eigen::Index>(i));
  }
  return by_cluster;
}

Resample draw_resample(Eigen::Index n, const std::vector<std::vector<Eigen::Index>>* by_cluster,
                       std::mt19937_64& rng) {
  Resample out;
  if (by_cluster == nullptr || by_cluster->empty()) {
    out.rows.resize(static_cast<std::size_t>(n));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    for (auto& r : out.rows) r = pick(rng);
    return out;
  }
  const auto G = static_cast<int>(by_cluster->size());
  std::uniform_int_distribution<int> pick(0, G - 1);
  for (int g = 0; g < G; ++g) {
    const auto& rows = (*by_cluster)[static_cast<std::size_t>(pick(rng))];
    for (auto r : rows) {
      out.rows.push_back(r);
      out.clusters.push_back(g);  // each draw becomes its own cluster
    }
  }
  return out;
}

BootstrapRun run_bootstrap(
    int boot_reps, std::uint64_t seed, std::uint64_t stream, int threads, Eigen::Index n,
    const std::vector<int>* clusters, int dim,
    const std::function<bool(const Resample&, Eigen::Ref<Eigen::VectorXd>)>& fn) {
  if (boot_reps < 2) throw ConfigError("bootstrap needs at least 2 replicates");
  std::vector<std::vector<Eigen::Index>> by_cluster;
  const std::vector<std::vector<Eigen::Index>>* scheme = nullptr;
  if (clusters != nullptr && !clusters->empty()) {
    by_cluster = cluster_row_index(*clusters);
    scheme = &by_cluster;
  }

  Eigen::MatrixXd all(boot_reps, dim);
  std::vector<char> ok(static_cast<std::size_t>(boot_reps), 0);
  parallel_for(boot_reps, threads, [&](std::int64_t b) {
    auto rng = replicate_engine(seed, stream, static_cast<std::uint64_t>(b));
    const Resample rs = draw_resample(n, scheme, rng);
    Eigen::VectorXd row(dim);
    bool good = false;
    try {
      good = fn(rs, row);
    } catch (const NumericalError&) {
      good = false;
    }
    if (good) {
      all.row(b) = row;
      ok[static_cast<std::size_t>(b)] = 1;
    }
  });

  BootstrapRun run;
  run.requested = boot_reps;
  run.kept = static_cast<int>(std::count(ok.begin(), ok.end(), char(1)));
  run.dropped = boot_reps - run.kept;
  if (run.dropped * 10 > boot_reps) {
    throw BootstrapInstabilityError("bootstrap discarded " + std::to_string(run.dropped) + " of " +
                                    std::to_string(boot_reps) + " replicates");
  }
  run.draws.resize(run.kept, dim);
  int at = 0;
  for (int b = 0; b < boot_reps; ++b) {
    if (ok[static_cast<std::size_t>(b)]) run.draws.row(at++) = all.row(b);
  }
  return run;
}

Eigen::MatrixXd bootstrap_cov(const BootstrapRun& run) {
  const auto kept = run.draws.rows();
  if (kept < 2) throw BootstrapInstabilityError("fewer than 2 usable bootstrap replicates");
  const Eigen::RowVectorXd mean = run.draws.colwise().mean();
  const Eigen::MatrixXd centered = run.draws.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(kept - 1);
}

}  // namespace ivdiag
