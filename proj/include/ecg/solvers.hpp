#pragma once

// CG baseline and Enlarged CG over the virtual cluster.
//
// ECG per iteration:
//   AZ = A Z                                   (SpMBV, point-to-point)
//   Z^T AZ                                     (allreduce #1, t^2 floats)
//   C C^T = Z^T AZ                             (redundant on every rank)
//   P = Z C^-T, AP = AZ C^-T                   (no second SpMBV)
//   c = P^T R, d = AP^T AP, d_old = AP_old^T AP (allreduce #2, 3 t^2 floats)
//   X += P c, R -= AP c, Z = AP - P d - P_old d_old
// The norm of sum_i R_i rides along with allreduce #1 of the next pass, so
// convergence is detected without a third collective per iteration.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecg/comm_plan.hpp"
#include "ecg/core_linalg.hpp"
#include "ecg/partition.hpp"
#include "ecg/virtual_cluster.hpp"

namespace ecg {

// Contiguous splitting: column i carries r on subdomain i and zeros
// elsewhere. Subdomains are whole groups of ranks when t divides p,
// otherwise balanced row ranges.
inline BlockVector split_residual(std::span<const double> r, std::size_t t, const RowPartition& part) {
  const std::size_t n = r.size();
  if (t == 0) throw std::invalid_argument("split_residual: t must be at least 1");
  if (t > n) throw std::invalid_argument("split_residual: t larger than vector length");
  if (part.num_rows() != n) throw DimensionError("split_residual: partition does not match vector");

  std::vector<std::size_t> bounds(t + 1, 0);
  const std::size_t p = part.num_ranks();
  if (p % t == 0) {
    for (std::size_t i = 0; i <= t; ++i) bounds[i] = part.offsets[i * (p / t)];
  } else {
    bounds = build_row_partition(n, t).offsets;
  }
  BlockVector out(n, t);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t k = bounds[i]; k < bounds[i + 1]; ++k) out(k, i) = r[k];
  return out;
}

inline BlockVector split_residual(std::span<const double> r, std::size_t t) {
  return split_residual(r, t, build_row_partition(r.size(), 1));
}

// Per-iteration ECG flop count summed over the kernel table lines.
inline double iteration_flops(double n, double nnz, double p, std::size_t t) {
  if (t == 0) throw std::invalid_argument("iteration_flops: t must be at least 1");
  if (!(n > 0 && nnz > 0 && p > 0)) throw std::invalid_argument("iteration_flops: arguments must be positive");
  const double td = double(t), np = n / p, nnzp = nnz / p;
  return 2.0 * nnzp * td            // SpMBV
         + 2.0 * np * td * td       // block inner product
         + td * td * td / 6.0       // Cholesky
         + 2.0 * 0.5 * td * td      // triangular solves
         + 2.0 * np * td * td       // block inner product
         + 2.0 * np * td            // block vector addition
         + 2.0 * np * td;           // block axpy
}

struct SolveOptions {
  double tol = 1e-8;
  std::size_t maxit = 1000;
  bool relative = true;
  Scheme scheme = Scheme::standard;
  std::size_t threshold = kDefaultThresholdBytes;
  std::size_t bytes_per_float = 8;
};

enum class SolveStatus { converged, max_iterations, breakdown };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::breakdown: return "breakdown";
  }
  return "?";
}

struct IterationSummary {
  std::size_t messages = 0;
  std::size_t bytes_on_node = 0;
  std::size_t bytes_off_node = 0;
  std::vector<ReduceRecord> collectives;
  std::vector<KernelFlops> flops_per_rank;
};

inline IterationSummary summarize(const ExecutionTrace& tr) {
  return {tr.point_to_point_messages(), tr.bytes_on_node(), tr.bytes_off_node(), tr.collectives,
          tr.flops_per_rank};
}

struct SolveReport {
  std::string method;
  Scheme scheme = Scheme::standard;
  std::size_t t = 1;
  SolveStatus status = SolveStatus::max_iterations;
  std::size_t iterations = 0;
  double final_residual = 0.0;
  std::vector<double> residual_history;  // length iterations + 1
  IterationSummary setup;
  std::vector<IterationSummary> per_iteration;
  IterationSummary termination;  // work spent detecting convergence after the last update
  CommStats spmbv_stats;
  std::vector<double> x;
  std::string message;

  KernelFlops flops_total() const {
    KernelFlops total;
    for (const auto& it : per_iteration)
      for (const auto& f : it.flops_per_rank) total += f;
    return total;
  }
};

// Distributed state exposed to observers after each completed iteration.
struct EcgIterate {
  std::size_t iteration;
  const DistBlockVector& X;
  const DistBlockVector& R;
  const DistBlockVector& Z;
  const DistBlockVector& P;
  const DistBlockVector& AP;
};

using EcgObserver = std::function<void(const EcgIterate&)>;

namespace detail {

inline void check_solve_inputs(const DistributedMatrix& a, const std::vector<double>& b,
                               const std::vector<double>& x0) {
  if (b.size() != a.n()) throw DimensionError("solve: rhs length does not match matrix");
  if (!x0.empty() && x0.size() != a.n()) throw DimensionError("solve: initial guess length does not match matrix");
}

inline double local_dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
  return s;
}

}  // namespace detail

inline SolveReport cg_solve(const DistributedMatrix& a, const std::vector<double>& b, std::vector<double> x0,
                            const SolveOptions& opts, const VirtualCluster& cluster) {
  detail::check_solve_inputs(a, b, x0);
  const std::size_t p = a.topology.p, n = a.n();
  if (x0.empty()) x0.assign(n, 0.0);
  const auto& part = a.partition;

  SolveReport rep;
  rep.method = "cg";
  rep.scheme = opts.scheme;
  const CommPlan plan = make_plan(opts.scheme, a.pattern, 1, opts.bytes_per_float, opts.threshold);
  rep.spmbv_stats = plan_stats(plan);

  ExecutionTrace setup(a.topology, 1, opts.scheme);
  DistBlockVector x = scatter(x0, part), bd = scatter(b, part);
  DistBlockVector r = spmbv(a, plan, x, cluster, setup);
  std::vector<std::vector<double>> partial(p);
  cluster.for_each_rank([&](std::size_t k) {
    auto rk = r[k].col(0);
    const auto bk = bd[k].col(0);
    for (std::size_t i = 0; i < rk.size(); ++i) rk[i] = bk[i] - rk[i];
    partial[k] = {detail::local_dot(bk, bk), detail::local_dot(rk, rk)};
  });
  const auto norms = cluster.allreduce_sum(partial, &setup);
  rep.setup = summarize(setup);

  const double norm_b = std::sqrt(norms[0]);
  const double ref = (opts.relative && norm_b > 0.0) ? norm_b : 1.0;
  double rr = norms[1];
  rep.residual_history.push_back(std::sqrt(rr) / ref);
  rep.status = SolveStatus::converged;

  DistBlockVector dir = r;
  while (rep.residual_history.back() >= opts.tol) {
    if (rep.iterations >= opts.maxit) {
      rep.status = SolveStatus::max_iterations;
      break;
    }
    ExecutionTrace it(a.topology, 1, opts.scheme);
    const DistBlockVector ad = spmbv(a, plan, dir, cluster, it);
    cluster.for_each_rank([&](std::size_t k) { partial[k] = {detail::local_dot(dir[k].col(0), ad[k].col(0))}; });
    const double pap = cluster.allreduce_sum(partial, &it)[0];
    if (!(pap > 0.0)) {
      rep.status = SolveStatus::breakdown;
      rep.message = "nonpositive curvature p^T A p = " + std::to_string(pap);
      break;
    }
    const double alpha = rr / pap;
    cluster.for_each_rank([&](std::size_t k) {
      auto xk = x[k].col(0), rk = r[k].col(0);
      const auto dk = dir[k].col(0);
      const auto adk = ad[k].col(0);
      for (std::size_t i = 0; i < xk.size(); ++i) {
        xk[i] += alpha * dk[i];
        rk[i] -= alpha * adk[i];
      }
      partial[k] = {detail::local_dot(rk, rk)};
    });
    const double rr_new = cluster.allreduce_sum(partial, &it)[0];
    ++rep.iterations;
    rep.per_iteration.push_back(summarize(it));
    rep.residual_history.push_back(std::sqrt(rr_new) / ref);
    const double beta = rr_new / rr;
    rr = rr_new;
    cluster.for_each_rank([&](std::size_t k) {
      auto dk = dir[k].col(0);
      const auto rk = r[k].col(0);
      for (std::size_t i = 0; i < dk.size(); ++i) dk[i] = rk[i] + beta * dk[i];
    });
  }
  rep.final_residual = rep.residual_history.back();
  const BlockVector xg = gather(x, part);
  rep.x.assign(xg.col(0).begin(), xg.col(0).end());
  return rep;
}

inline SolveReport ecg_solve(const DistributedMatrix& a, const std::vector<double>& b, std::vector<double> x0,
                             std::size_t t, const SolveOptions& opts, const VirtualCluster& cluster,
                             const EcgObserver& observer = {}) {
  detail::check_solve_inputs(a, b, x0);
  const std::size_t p = a.topology.p, n = a.n();
  if (t == 0 || t > n) throw std::invalid_argument("ecg: need 1 <= t <= n");
  if (x0.empty()) x0.assign(n, 0.0);
  const auto& part = a.partition;

  SolveReport rep;
  rep.method = "ecg";
  rep.scheme = opts.scheme;
  rep.t = t;
  const CommPlan plan1 = make_plan(opts.scheme, a.pattern, 1, opts.bytes_per_float, opts.threshold);
  const CommPlan plan_t = make_plan(opts.scheme, a.pattern, t, opts.bytes_per_float, opts.threshold);
  rep.spmbv_stats = plan_stats(plan_t);

  // r0 = b - A x0, then R = T(r0, t), Z = R.
  ExecutionTrace setup(a.topology, 1, opts.scheme);
  const DistBlockVector bd = scatter(b, part);
  DistBlockVector r0 = spmbv(a, plan1, scatter(x0, part), cluster, setup);
  std::vector<std::vector<double>> partial(p);
  cluster.for_each_rank([&](std::size_t k) {
    auto rk = r0[k].col(0);
    const auto bk = bd[k].col(0);
    for (std::size_t i = 0; i < rk.size(); ++i) rk[i] = bk[i] - rk[i];
    partial[k] = {detail::local_dot(bk, bk), detail::local_dot(rk, rk)};
  });
  const auto norms = cluster.allreduce_sum(partial, &setup);
  rep.setup = summarize(setup);

  const double norm_b = std::sqrt(norms[0]);
  const double ref = (opts.relative && norm_b > 0.0) ? norm_b : 1.0;
  rep.residual_history.push_back(std::sqrt(norms[1]) / ref);
  rep.status = SolveStatus::converged;

  const BlockVector r0g = gather(r0, part);
  DistBlockVector R = scatter(split_residual(r0g.col(0), t, part), part);
  DistBlockVector Z = R;
  DistBlockVector X, P, AP, P_old, AP_old;
  for (std::size_t k = 0; k < p; ++k) {
    X.emplace_back(part.local_rows(k), t);
    P.emplace_back(part.local_rows(k), t);
    AP.emplace_back(part.local_rows(k), t);
  }
  P_old = P;
  AP_old = AP;

  if (rep.residual_history.back() >= opts.tol) {
    std::vector<std::vector<SmallSquare>> blocks(p);
    std::vector<SmallSquare> factor(p);
    for (;;) {
      ExecutionTrace it(a.topology, t, opts.scheme);
      const DistBlockVector AZ = spmbv(a, plan_t, Z, cluster, it);
      cluster.for_each_rank([&](std::size_t k) {
        blocks[k] = {gram_product(Z[k], AZ[k], &it.flops_per_rank[k])};
        const auto rho = column_sum(R[k]);
        partial[k] = {detail::local_dot(rho, rho)};
      });
      const auto first = cluster.fused_allreduce(blocks, partial, &it);

      if (rep.iterations > 0) {
        rep.residual_history.push_back(std::sqrt(std::max(0.0, first.extras[0])) / ref);
        if (rep.residual_history.back() < opts.tol) {
          rep.termination = summarize(it);
          break;
        }
      }
      if (rep.iterations >= opts.maxit) {
        rep.status = SolveStatus::max_iterations;
        rep.termination = summarize(it);
        break;
      }

      try {
        cluster.for_each_rank([&](std::size_t k) {
          factor[k] = cholesky(first.sums[0], kDefaultPivotTolerance, &it.flops_per_rank[k]);
        });
      } catch (const BreakdownError& e) {
        rep.status = SolveStatus::breakdown;
        rep.message = e.what();
        rep.termination = summarize(it);
        break;
      }

      std::swap(P_old, P);
      std::swap(AP_old, AP);
      cluster.for_each_rank([&](std::size_t k) {
        KernelFlops* fl = &it.flops_per_rank[k];
        P[k] = tri_solve_multi_rhs_transposed(Z[k], factor[k], fl);
        AP[k] = tri_solve_multi_rhs_transposed(AZ[k], factor[k], fl);
        blocks[k] = {gram_product(P[k], R[k], fl), gram_product(AP[k], AP[k], fl),
                     gram_product(AP_old[k], AP[k], fl)};
      });
      const auto second = cluster.fused_allreduce(blocks, {}, &it);
      const SmallSquare& c = second.sums[0];
      const SmallSquare& d = second.sums[1];
      const SmallSquare& d_old = second.sums[2];

      cluster.for_each_rank([&](std::size_t k) {
        KernelFlops* fl = &it.flops_per_rank[k];
        block_axpy_inplace(X[k], P[k], c, 1.0, fl, UpdateKind::add);
        block_axpy_inplace(R[k], AP[k], c, -1.0, fl);
        Z[k] = AP[k];
        block_axpy_inplace(Z[k], P[k], d, -1.0, fl);
        block_axpy_inplace(Z[k], P_old[k], d_old, -1.0, fl);
      });

      ++rep.iterations;
      rep.per_iteration.push_back(summarize(it));
      if (observer) observer({rep.iterations, X, R, Z, P, AP});
    }
  }

  rep.final_residual = rep.residual_history.back();
  const auto xs = column_sum(gather(X, part));
  rep.x = x0;
  for (std::size_t i = 0; i < n; ++i) rep.x[i] += xs[i];
  return rep;
}

}  // namespace ecg
