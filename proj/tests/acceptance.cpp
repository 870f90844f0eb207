// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ecg/ecg.hpp"
#include "test_support.hpp"

using namespace ecg;
using testing_support::Rng;

namespace {

// Tolerances, fixed.
constexpr double kSolutionRelTol = 1e-6;
constexpr double kDriftRelTol = 1e-10;
constexpr std::size_t kDriftIterations = 50;
constexpr double kSpmbvRelTol = 1e-13;
constexpr double kOrthoTol = 1e-10;
constexpr std::size_t kOrthoSlack = 10;
constexpr double kEq10Tol = 1e-12;
constexpr double kRuntimeLimitSeconds = 60.0;
constexpr std::size_t kCorpusSize = 240;
constexpr std::size_t kModelDraws = 10000;
constexpr std::size_t kSplitVectors = 1000;

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

struct Instance {
  CsrMatrix a;
  std::size_t p, ppn, t;
};

std::vector<Instance> build_corpus() {
  Rng rng(2024);
  const std::size_t ps[] = {2, 4, 8, 16}, ppns[] = {1, 2, 4}, ts[] = {1, 2, 5, 20};
  std::vector<Instance> out;
  for (std::size_t i = 0; i < kCorpusSize; ++i) {
    Instance inst;
    inst.p = ps[i % 4];
    inst.ppn = ppns[(i / 4) % 3];
    inst.t = ts[(i / 12) % 4];
    const std::size_t n = testing_support::pick(rng, std::max<std::size_t>(inst.p, 8), 200);
    inst.a = testing_support::random_spd(n, testing_support::pick(rng, 1, 6), rng);
    out.push_back(std::move(inst));
  }
  return out;
}

const std::vector<Instance>& corpus() {
  static const std::vector<Instance> c = build_corpus();
  return c;
}

// Largest-first piece counts with the shared per-node budget; every chunk
// is one row, so pieces = min(rows, ranks on node, 1 + spare budget).
std::size_t expected_one_row_n_opt(const CommPattern& pat) {
  const auto payloads = node_payloads(pat);
  const std::size_t cap = std::max(max_destination_nodes(pat), pat.topology.ppn);
  std::size_t best = 0;
  for (std::size_t node = 0; node < payloads.size(); ++node) {
    const std::size_t k = pat.topology.node_size(node);
    std::vector<std::size_t> sizes;
    for (const auto& [dnode, rows] : payloads[node]) sizes.push_back(rows.size());
    std::sort(sizes.rbegin(), sizes.rend());
    std::size_t spare = k * cap - sizes.size(), chunks = 0;
    for (std::size_t rows : sizes) {
      const std::size_t pieces = std::min({rows, k, 1 + spare});
      spare -= pieces - 1;
      chunks += pieces;
    }
    best = std::max(best, (chunks + k - 1) / k);
  }
  return best;
}

SolveReport ecg_on(const Problem& prob, std::size_t t, const EcgObserver& obs = {}) {
  const DistributedMatrix a(prob.a, Topology(8, 4));
  return ecg_solve(a, prob.rhs, {}, t, {}, VirtualCluster(a.topology), obs);
}

Outcome convergence_ordering() {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  const Problem prob = generate_problem("laplace2d:128");
  const DistributedMatrix a(prob.a, Topology(8, 4));
  const VirtualCluster cluster(a.topology);
  const auto cg = cg_solve(a, prob.rhs, {}, {}, cluster);
  std::size_t its[9] = {};
  for (std::size_t t : {1, 2, 4, 8}) {
    const auto rep = ecg_solve(a, prob.rhs, {}, t, {}, cluster);
    if (rep.status != SolveStatus::converged) out.fail("ECG t=" + std::to_string(t) + " " + to_string(rep.status));
    its[t] = rep.iterations;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream d;
  d << "CG=" << cg.iterations << " t1=" << its[1] << " t2=" << its[2] << " t4=" << its[4] << " t8=" << its[8]
    << " " << secs << "s";
  if (cg.status != SolveStatus::converged) out.fail("CG did not converge");
  if (!(its[8] <= its[4] && its[4] <= its[2])) out.fail("iterations increase with t");
  if (!(its[2] < cg.iterations)) out.fail("t=2 not below CG");
  if (std::abs(long(its[1]) - long(cg.iterations)) > 2) out.fail("t=1 differs from CG by more than 2");
  if (secs >= kRuntimeLimitSeconds) out.fail("too slow");
  out.detail = d.str() + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

Outcome solution_correctness() {
  Outcome out;
  Rng rng(7);
  std::vector<Problem> problems = {generate_problem("laplace2d:21x17"), generate_problem("laplace2d:20x25"),
                                   generate_problem("laplace2d9:22"), generate_problem("laplace1d:64")};
  // sizes large enough that width 8 never exhausts the space before convergence
  for (std::size_t n : {180, 256, 350, 512}) {
    Problem prob;
    prob.name = "random" + std::to_string(n);
    prob.a = testing_support::random_spd(n, 5, rng);
    prob.rhs.resize(n);
    for (auto& v : prob.rhs) v = testing_support::uniform(rng);
    problems.push_back(std::move(prob));
  }
  double worst_sol = 0, worst_drift = 0;
  for (const auto& prob : problems) {
    const auto dense = testing_support::to_dense(prob.a);
    const auto xs = testing_support::dense_solve(dense, prob.rhs);
    const double nb = testing_support::norm2(prob.rhs), nx = testing_support::norm2(xs);
    const DistributedMatrix a(prob.a, Topology(8, 4));
    for (std::size_t t : {1, 2, 4, 8}) {
      const auto rep = ecg_solve(a, prob.rhs, {}, t, {}, VirtualCluster(a.topology), [&](const EcgIterate& it) {
        if (it.iteration > kDriftIterations) return;
        const auto x = column_sum(gather(it.X, a.partition));
        const auto rsum = column_sum(gather(it.R, a.partition));
        const auto ax = testing_support::dense_matvec(dense, x);
        double diff = 0;
        for (std::size_t i = 0; i < x.size(); ++i) diff += std::pow(prob.rhs[i] - ax[i] - rsum[i], 2);
        worst_drift = std::max(worst_drift, std::sqrt(diff) / nb);
      });
      if (rep.status != SolveStatus::converged) {
        out.fail(prob.name + " t=" + std::to_string(t) + " " + to_string(rep.status));
        continue;
      }
      double err = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) err += std::pow(rep.x[i] - xs[i], 2);
      worst_sol = std::max(worst_sol, std::sqrt(err) / nx);
    }
  }
  if (worst_sol > kSolutionRelTol) out.fail("solution error");
  if (worst_drift > kDriftRelTol) out.fail("residual drift");
  std::ostringstream d;
  d << problems.size() << " problems x 4 widths, max rel error " << worst_sol << ", max drift " << worst_drift;
  out.detail = d.str() + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

Outcome scheme_delivery() {
  Outcome out;
  Rng rng(8);
  double worst = 0;
  for (const auto& inst : corpus()) {
    const DistributedMatrix a(inst.a, Topology(inst.p, inst.ppn));
    const VirtualCluster cluster(a.topology);
    const auto v = testing_support::random_block(a.n(), inst.t, rng);
    const auto dense = testing_support::to_dense(inst.a);
    const auto ref = testing_support::dense_multiply(dense, v);
    const DistBlockVector vd = scatter(v, a.partition);
    BlockVector first;
    std::vector<CommPlan> plans;
    for (Scheme s : kAllSchemes) plans.push_back(make_plan(s, a.pattern, inst.t));
    plans.push_back(plan_nodal_optimal(a.pattern, inst.t, 8, 1));
    for (const auto& plan : plans) {
      ExecutionTrace tr(a.topology, inst.t, plan.scheme);
      const BlockVector w = gather(spmbv(a, plan, vd, cluster, tr), a.partition);
      if (first.n_rows() == 0) first = w;
      if (!(w == first)) out.fail(std::string("scheme ") + to_string(plan.scheme) + " differs bitwise");
      for (std::size_t j = 0; j < inst.t; ++j)
        for (std::size_t i = 0; i < a.n(); ++i) {
          const double scale = testing_support::row_scale(dense, v, i, j);
          if (scale > 0) worst = std::max(worst, std::abs(w(i, j) - ref(i, j)) / scale);
        }
    }
  }
  if (worst > kSpmbvRelTol) out.fail("serial mismatch");
  std::ostringstream d;
  d << corpus().size() << " instances, max rel deviation " << worst;
  out.detail = d.str() + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

Outcome byte_equality() {
  Outcome out;
  std::size_t with_traffic = 0;
  for (const auto& inst : corpus()) {
    const DistributedMatrix a(inst.a, Topology(inst.p, inst.ppn));
    const auto two = plan_stats(plan_two_step(a.pattern, inst.t)).total_internode_bytes;
    const auto three = plan_stats(plan_three_step(a.pattern, inst.t)).total_internode_bytes;
    for (std::size_t threshold : {std::size_t(1), std::size_t(64), kDefaultThresholdBytes}) {
      const auto opt = plan_stats(plan_nodal_optimal(a.pattern, inst.t, 8, threshold)).total_internode_bytes;
      if (two != three || three != opt) out.fail("bytes differ");
    }
    with_traffic += three > 0;
  }
  out.detail = std::to_string(corpus().size()) + " instances (" + std::to_string(with_traffic) +
               " with inter-node traffic)" + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

Outcome message_bounds() {
  Outcome out;
  std::size_t at_upper = 0, checked = 0;
  for (const auto& inst : corpus()) {
    const DistributedMatrix a(inst.a, Topology(inst.p, inst.ppn));
    const auto& pat = a.pattern;
    const auto three = plan_stats(plan_three_step(pat, inst.t));
    const std::size_t lower = std::max(three.m_node_to_node, three_step_process_bound(pat));
    const std::size_t upper = std::max(max_destination_nodes(pat), inst.ppn);
    if (three.total_internode_bytes == 0) continue;
    ++checked;
    for (std::size_t threshold : {std::size_t(1), std::size_t(64), kDefaultThresholdBytes, std::size_t(1) << 40}) {
      const auto st = plan_stats(plan_nodal_optimal(pat, inst.t, 8, threshold));
      if (!(lower <= st.n_opt && st.n_opt <= upper))
        out.fail("bounds violated at threshold " + std::to_string(threshold));
    }
    const auto big = plan_stats(plan_nodal_optimal(pat, inst.t, 8, std::size_t(1) << 40));
    if (big.n_opt != three_step_process_bound(pat)) out.fail("sub-threshold n_opt != 3-step bound");
    const auto one_row = plan_stats(plan_nodal_optimal(pat, inst.t, 8, 1));
    if (one_row.n_opt != expected_one_row_n_opt(pat)) out.fail("1-row threshold n_opt != oracle");
    at_upper += one_row.n_opt == upper;
  }
  out.detail = std::to_string(checked) + " instances with inter-node traffic, 1-row threshold reaches the upper bound on " +
               std::to_string(at_upper) + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

Outcome collective_accounting() {
  Outcome out;
  std::size_t iterations = 0;
  const Problem prob = generate_problem("laplace2d:24");
  for (std::size_t t : {1, 2, 3, 4, 5, 8}) {
    const auto rep = ecg_on(prob, t);
    for (const auto& it : rep.per_iteration) {
      ++iterations;
      if (it.collectives.size() != 2 || it.collectives[0].floats != t * t || it.collectives[1].floats != 3 * t * t)
        out.fail("t=" + std::to_string(t));
    }
  }
  out.detail = std::to_string(iterations) + " iterations over t in {1,2,3,4,5,8}" + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

Outcome flop_accounting() {
  Outcome out;
  std::size_t checked = 0;
  // every case has integral n/p and nnz/p
  struct Case {
    const char* problem;
    std::size_t p, ppn;
  };
  for (const Case& c : {Case{"laplace2d:16", 8, 4}, Case{"laplace2d:16", 4, 2}, Case{"laplace1d:64", 2, 1},
                        Case{"laplace2d9:12", 4, 4}}) {
    const Problem prob = generate_problem(c.problem);
    const std::size_t n = prob.a.n_rows, nnz = prob.a.nnz();
    if (n % c.p != 0 || nnz % c.p != 0) {
      out.fail(std::string(c.problem) + " not integral");
      continue;
    }
    const DistributedMatrix a(prob.a, Topology(c.p, c.ppn));
    for (std::size_t t : {1, 2, 3, 4}) {
      const auto rep = ecg_solve(a, prob.rhs, {}, t, {}, VirtualCluster(a.topology));
      const double td = double(t), np = double(n / c.p), nnzp = double(nnz / c.p);
      for (const auto& it : rep.per_iteration) {
        KernelFlops mean;
        for (std::size_t r = 0; r < c.p; ++r) {
          const auto& f = it.flops_per_rank[r];
          const double nl = double(a.partition.local_rows(r)), zl = double(a.local_nnz(r));
          // spmbv once, 4 block inner products, 1 Cholesky, 2 triangular solves, 1 add, 3 axpy
          const bool exact = f[Kernel::spmbv] == 2 * zl * td && f[Kernel::inner_product] == 4 * (2 * nl * td * td) &&
                             f[Kernel::cholesky] == td * td * td / 6 && f[Kernel::tri_solve] == 2 * (td * td / 2) &&
                             f[Kernel::block_add] == 2 * nl * td && f[Kernel::block_axpy] == 3 * (2 * nl * td);
          if (!exact) out.fail(std::string(c.problem) + " rank " + std::to_string(r));
          mean += f;
          ++checked;
        }
        // rank-averaged counts against the closed forms at n/p, nnz/p
        const double P = double(c.p);
        if (mean[Kernel::spmbv] != P * 2 * nnzp * td || mean[Kernel::inner_product] != P * 8 * np * td * td ||
            mean[Kernel::block_add] != P * 2 * np * td || mean[Kernel::block_axpy] != P * 6 * np * td)
          out.fail(std::string(c.problem) + " aggregate");
      }
    }
  }
  out.detail = std::to_string(checked) + " rank-iterations" + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

Outcome model_properties() {
  Outcome out;
  Rng rng(11);
  for (std::size_t i = 0; i < kModelDraws; ++i) {
    MachineParams mp;
    mp.alpha = std::pow(10.0, testing_support::uniform(rng, -8, -4));
    mp.rate_injection = std::pow(10.0, testing_support::uniform(rng, 8, 11));
    mp.rate_process = std::pow(10.0, testing_support::uniform(rng, 8, 11));
    mp.ppn = double(testing_support::pick(rng, 1, 64));
    const double m = double(testing_support::pick(rng, 0, 200)), s = testing_support::uniform(rng, 0, 1e8);
    if (maxrate_time(m, s, mp) < postal_time(m, s, mp)) out.fail("maxrate below postal");
    mp.ppn = 1;
    mp.rate_injection = mp.rate_process;
    if (maxrate_time(m, s, mp) != postal_time(m, s, mp)) out.fail("degenerate case not exact");
  }
  MachineParams unit;
  unit.gamma = 1.0;
  const double value = ecg_iteration_model(0, 0, 1, 10, 100, 1, unit, P2PModel::postal).computation;
  const double hand = 4.0 * 100 + 8.0 * 10 + 0.5 + 1.0 / 6.0;
  if (std::abs(value - hand) > kEq10Tol || std::abs(value - 480.6667) > 5e-5) out.fail("computation term");
  std::ostringstream d;
  d << kModelDraws << " draws, computation term " << std::setprecision(10) << value;
  out.detail = d.str() + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

Outcome a_orthonormality() {
  Outcome out;
  const Problem prob = generate_problem("laplace2d:128");
  const DistributedMatrix a(prob.a, Topology(8, 4));
  std::ostringstream d;
  for (std::size_t t : {2, 4, 8}) {
    std::vector<double> dev;
    const auto rep = ecg_solve(a, prob.rhs, {}, t, {}, VirtualCluster(a.topology), [&](const EcgIterate& it) {
      const auto p = gather(it.P, a.partition), ap = gather(it.AP, a.partition);
      dev.push_back((gram_product(p, ap) - SmallSquare::identity(t)).frobenius());
    });
    if (rep.status != SolveStatus::converged) out.fail("t=" + std::to_string(t) + " did not converge");
    double worst = 0;
    const std::size_t upto = dev.size() > kOrthoSlack ? dev.size() - kOrthoSlack : 0;
    for (std::size_t k = 0; k < upto; ++k) worst = std::max(worst, dev[k]);
    if (worst > kOrthoTol) out.fail("t=" + std::to_string(t));
    d << "t" << t << ":" << worst << " ";
  }
  out.detail = d.str() + (out.pass ? "" : "(" + out.detail + ")");
  return out;
}

Outcome split_conservation() {
  Outcome out;
  Rng rng(13);
  for (std::size_t i = 0; i < kSplitVectors; ++i) {
    const std::size_t n = testing_support::pick(rng, 8, 300);
    std::vector<double> r(n);
    for (auto& v : r) v = testing_support::uniform(rng, -1e6, 1e6) * std::pow(10.0, testing_support::uniform(rng, -20, 20));
    const auto part = build_row_partition(n, testing_support::pick(rng, 1, 8));
    for (std::size_t t = 1; t <= 8; ++t)
      if (column_sum(split_residual(r, t, part)) != r) out.fail("vector " + std::to_string(i));
  }
  out.detail = std::to_string(kSplitVectors) + " vectors x t=1..8" + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

Outcome determinism() {
  Outcome out;
  RunConfig cfg;
  cfg.problem = "laplace2d:20";
  cfg.p = 8;
  cfg.ppn = 4;
  cfg.t = {1, 4};
  cfg.scheme = "all";
  const std::vector<std::pair<std::string, std::function<json(const RunConfig&)>>> runs = {
      {"solve", run_solve}, {"bench-spmbv", run_spmbv_bench}, {"model", run_model}, {"tune", run_tune}};
  for (const auto& [name, run] : runs) {
    std::string first;
    for (const char* threads : {"1", "3", "8", "1"}) {
      setenv("ECG_THREADS", threads, 1);
      const std::string bytes = run(cfg).dump(2);
      if (first.empty()) first = bytes;
      if (bytes != first) out.fail(name + " with ECG_THREADS=" + threads);
    }
  }
  unsetenv("ECG_THREADS");
  out.detail = "solve, bench-spmbv, model, tune under ECG_THREADS=1,3,8,1" + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"convergence ordering", convergence_ordering},
      {"solution correctness", solution_correctness},
      {"scheme delivery equivalence", scheme_delivery},
      {"inter-node byte equality", byte_equality},
      {"nodal-optimal message bounds", message_bounds},
      {"collective accounting", collective_accounting},
      {"flop accounting", flop_accounting},
      {"model properties", model_properties},
      {"A-orthonormality", a_orthonormality},
      {"splitting conservation", split_conservation},
      {"report determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
