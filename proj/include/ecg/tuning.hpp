#pragma once

// Picks one communication scheme for all nodes by running a single SpMBV
// under each scheme and comparing modeled point-to-point times.

#include <cstddef>
#include <limits>
#include <vector>

#include "ecg/comm_plan.hpp"
#include "ecg/perf_models.hpp"
#include "ecg/virtual_cluster.hpp"

namespace ecg {

struct TuneEntry {
  Scheme scheme = Scheme::standard;
  CommStats stats;  // from the executed trace
  double modeled_seconds = 0.0;
};

struct TuneReport {
  Scheme choice = Scheme::standard;
  std::size_t t = 1;
  std::vector<TuneEntry> entries;  // in evaluation order
};

// Evaluation order doubles as the tie-break order.
inline constexpr Scheme kTuneOrder[] = {Scheme::standard, Scheme::three_step, Scheme::two_step,
                                        Scheme::nodal_optimal};

// mp.ppn is replaced by the topology's ppn. Without inter-node traffic every
// scheme moves the same on-node messages and standard is kept.
inline TuneReport tune_scheme(const DistributedMatrix& a, std::size_t t, const VirtualCluster& cluster,
                              MachineParams mp, std::size_t f = 8,
                              std::size_t threshold = kDefaultThresholdBytes) {
  mp.ppn = double(a.topology.ppn);
  TuneReport rep;
  rep.t = t;
  BlockVector ones(a.n(), t);
  ones.fill(1.0);
  const DistBlockVector v = scatter(ones, a.partition);

  double best = std::numeric_limits<double>::infinity();
  bool any_internode = false;
  for (Scheme s : kTuneOrder) {
    const CommPlan plan = make_plan(s, a.pattern, t, f, threshold);
    ExecutionTrace trace(a.topology, t, s);
    spmbv(a, plan, v, cluster, trace);
    TuneEntry e{s, trace.comm, model_for_scheme(s, trace.comm, t, mp)};
    any_internode = any_internode || trace.comm.total_internode_bytes > 0;
    if (e.modeled_seconds < best) {
      best = e.modeled_seconds;
      rep.choice = s;
    }
    rep.entries.push_back(e);
  }
  if (!any_internode) rep.choice = Scheme::standard;
  return rep;
}

}  // namespace ecg
