#pragma once

// Deterministic executor for p virtual ranks: phase-synchronous delivery of
// plan messages into per-rank mailboxes, the distributed SpMBV, fused
// allreduces, and exact traces of messages, bytes, collectives and flops.

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "ecg/comm_plan.hpp"
#include "ecg/core_linalg.hpp"
#include "ecg/partition.hpp"

namespace ecg {

class DeliveryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PhaseTrace {
  std::string name;
  std::size_t messages = 0;
  std::size_t bytes_on_node = 0;
  std::size_t bytes_off_node = 0;

  friend bool operator==(const PhaseTrace&, const PhaseTrace&) = default;
};

struct ReduceRecord {
  std::size_t floats = 0;            // matrix payload (t^2 or 3 t^2 in ECG)
  std::size_t piggyback_floats = 0;  // residual-norm partials riding along
  std::size_t participants = 0;

  friend bool operator==(const ReduceRecord&, const ReduceRecord&) = default;
};

struct ExecutionTrace {
  Scheme scheme = Scheme::standard;
  std::size_t p = 0;
  std::size_t ppn = 0;
  std::size_t t = 0;
  std::vector<PhaseTrace> phases;
  std::vector<ReduceRecord> collectives;
  std::vector<KernelFlops> flops_per_rank;
  CommStats comm;  // maxima over the messages actually moved

  ExecutionTrace() = default;
  ExecutionTrace(const Topology& topo, std::size_t width, Scheme s = Scheme::standard)
      : scheme(s), p(topo.p), ppn(topo.ppn), t(width), flops_per_rank(topo.p) {}

  std::size_t point_to_point_messages() const {
    std::size_t n = 0;
    for (const auto& ph : phases) n += ph.messages;
    return n;
  }
  std::size_t bytes_off_node() const {
    std::size_t n = 0;
    for (const auto& ph : phases) n += ph.bytes_off_node;
    return n;
  }
  std::size_t bytes_on_node() const {
    std::size_t n = 0;
    for (const auto& ph : phases) n += ph.bytes_on_node;
    return n;
  }
};

// Worker cap from ECG_THREADS; results never depend on it.
inline std::size_t threads_from_env() {
  if (const char* env = std::getenv("ECG_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return std::size_t(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

using DistBlockVector = std::vector<BlockVector>;

// Remote rows delivered to each rank, ascending by global row.
struct Delivery {
  std::vector<std::vector<std::size_t>> rows;
  std::vector<BlockVector> values;
};

struct ReduceResult {
  std::vector<SmallSquare> sums;
  std::vector<double> extras;
  ReduceRecord record;
};

class VirtualCluster {
 public:
  explicit VirtualCluster(Topology topo, std::size_t threads = threads_from_env())
      : topo_(topo), threads_(std::max<std::size_t>(1, threads)) {}

  const Topology& topology() const noexcept { return topo_; }
  std::size_t threads() const noexcept { return threads_; }

  // Runs fn(rank) for every rank. Ranks touch disjoint state only.
  template <class Fn>
  void for_each_rank(Fn&& fn) const {
    const std::size_t workers = std::min(threads_, topo_.p);
    if (workers <= 1) {
      for (std::size_t r = 0; r < topo_.p; ++r) fn(r);
      return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t r = w; r < topo_.p; r += workers) fn(r);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Moves plan messages phase by phase. A message may only carry rows its
  // sender owns or received in an earlier phase; each row reaches a rank at
  // most once. Afterwards every rank must hold all rows the pattern demands.
  Delivery execute_plan(const CommPlan& plan, const CommPattern& pattern, const std::vector<BlockVector>& owned,
                        ExecutionTrace& trace) const {
    const RowPartition& part = pattern.partition;
    const std::size_t p = topo_.p, t = plan.t;
    if (owned.size() != p || pattern.num_ranks() != p || !(plan.topology == topo_))
      throw DimensionError("execute_plan: rank count mismatch");
    for (std::size_t r = 0; r < p; ++r)
      if (owned[r].n_rows() != part.local_rows(r) || owned[r].t() != t)
        throw DimensionError("execute_plan: local block shape does not match plan");

    // mailbox[r]: row -> slot; values stored row-major, t per slot
    std::vector<std::unordered_map<std::size_t, std::size_t>> slot(p);
    std::vector<std::vector<double>> store(p);

    auto fetch = [&](std::size_t rank, std::size_t row, double* out) {
      if (part.owner(row) == rank) {
        const std::size_t local = row - part.begin(rank);
        for (std::size_t j = 0; j < t; ++j) out[j] = owned[rank](local, j);
        return;
      }
      auto it = slot[rank].find(row);
      if (it == slot[rank].end())
        throw DeliveryError("rank " + std::to_string(rank) + " forwards row " + std::to_string(row) +
                            " it does not hold");
      std::copy_n(store[rank].data() + it->second * t, t, out);
    };

    StatsAccumulator stats(topo_, t, plan.bytes_per_float);
    for (const auto& phase : plan.phases) {
      PhaseTrace pt{phase.name, 0, 0, 0};
      struct Staged {
        std::size_t dst;
        const std::vector<std::size_t>* rows;
        std::vector<double> values;
      };
      std::vector<Staged> staged;
      staged.reserve(phase.messages.size());
      for (const auto& msg : phase.messages) {
        if (msg.src == msg.dst) throw DeliveryError("plan contains a self message");
        Staged s{msg.dst, &msg.rows, std::vector<double>(msg.rows.size() * t)};
        for (std::size_t i = 0; i < msg.rows.size(); ++i) fetch(msg.src, msg.rows[i], s.values.data() + i * t);
        const std::size_t bytes = s.values.size() * plan.bytes_per_float;
        ++pt.messages;
        (topo_.same_node(msg.src, msg.dst) ? pt.bytes_on_node : pt.bytes_off_node) += bytes;
        stats.record(msg.src, msg.dst, bytes);
        staged.push_back(std::move(s));
      }
      for (auto& s : staged) {
        for (std::size_t i = 0; i < s.rows->size(); ++i) {
          const std::size_t row = (*s.rows)[i];
          if (part.owner(row) == s.dst || !slot[s.dst].emplace(row, slot[s.dst].size()).second)
            throw DeliveryError("row " + std::to_string(row) + " delivered twice to rank " + std::to_string(s.dst));
          store[s.dst].insert(store[s.dst].end(), s.values.begin() + std::ptrdiff_t(i * t),
                              s.values.begin() + std::ptrdiff_t((i + 1) * t));
        }
      }
      trace.phases.push_back(std::move(pt));
    }
    trace.comm = stats.finish();

    Delivery out;
    out.rows.resize(p);
    out.values.resize(p);
    for (std::size_t r = 0; r < p; ++r) {
      out.rows[r] = pattern.recv_rows(r);
      BlockVector buf(out.rows[r].size(), t);
      for (std::size_t i = 0; i < out.rows[r].size(); ++i) {
        auto it = slot[r].find(out.rows[r][i]);
        if (it == slot[r].end())
          throw DeliveryError("rank " + std::to_string(r) + " never received row " + std::to_string(out.rows[r][i]));
        for (std::size_t j = 0; j < t; ++j) buf(i, j) = store[r][it->second * t + j];
      }
      out.values[r] = std::move(buf);
    }
    return out;
  }

  // Elementwise sums over ranks, accumulated in rank order and replicated.
  // `counted` buffers form the recorded payload; `extras` ride along.
  ReduceResult fused_allreduce(const std::vector<std::vector<SmallSquare>>& counted,
                               const std::vector<std::vector<double>>& extras = {},
                               ExecutionTrace* trace = nullptr) const {
    if (counted.size() != topo_.p || (!extras.empty() && extras.size() != topo_.p))
      throw DimensionError("allreduce: every rank must contribute");
    ReduceResult res;
    res.sums = counted.front();
    if (!extras.empty()) res.extras = extras.front();
    for (std::size_t r = 1; r < topo_.p; ++r) {
      if (counted[r].size() != res.sums.size()) throw DimensionError("allreduce: nonconformant contributions");
      for (std::size_t b = 0; b < res.sums.size(); ++b) {
        if (counted[r][b].t() != res.sums[b].t()) throw DimensionError("allreduce: nonconformant contributions");
        auto dst = res.sums[b].data();
        auto src = counted[r][b].data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
      if (!extras.empty()) {
        if (extras[r].size() != res.extras.size()) throw DimensionError("allreduce: nonconformant contributions");
        for (std::size_t k = 0; k < res.extras.size(); ++k) res.extras[k] += extras[r][k];
      }
    }
    for (const auto& s : res.sums) res.record.floats += s.data().size();
    res.record.piggyback_floats = res.extras.size();
    res.record.participants = topo_.p;
    if (trace) trace->collectives.push_back(res.record);
    return res;
  }

  // Scalar variant used by CG and setup norms.
  std::vector<double> allreduce_sum(const std::vector<std::vector<double>>& partials,
                                    ExecutionTrace* trace = nullptr) const {
    if (partials.size() != topo_.p) throw DimensionError("allreduce: every rank must contribute");
    std::vector<double> sum = partials.front();
    for (std::size_t r = 1; r < topo_.p; ++r) {
      if (partials[r].size() != sum.size()) throw DimensionError("allreduce: nonconformant contributions");
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += partials[r][k];
    }
    if (trace) trace->collectives.push_back({sum.size(), 0, topo_.p});
    return sum;
  }

 private:
  Topology topo_;
  std::size_t threads_;
};

// Row-partitioned matrix with per-rank on/off-process blocks and its pattern.
struct DistributedMatrix {
  CsrMatrix global;
  RowPartition partition;
  Topology topology;
  CommPattern pattern;
  std::vector<LocalBlocks> blocks;

  DistributedMatrix(CsrMatrix a, RowPartition part, Topology topo)
      : global(std::move(a)), partition(std::move(part)), topology(topo),
        pattern(analyze_comm(global, partition, topology)) {
    blocks.reserve(topology.p);
    for (std::size_t r = 0; r < topology.p; ++r) blocks.push_back(split_local_blocks(global, partition, r));
  }

  DistributedMatrix(CsrMatrix a, Topology topo)
      : DistributedMatrix(a, build_row_partition(a.n_rows, topo.p), topo) {}

  std::size_t n() const noexcept { return global.n_rows; }
  std::size_t local_nnz(std::size_t r) const {
    return blocks[r].on_process.nnz() + blocks[r].off_process.nnz();
  }
};

inline DistBlockVector scatter(const BlockVector& v, const RowPartition& part) {
  DistBlockVector out;
  out.reserve(part.num_ranks());
  for (std::size_t r = 0; r < part.num_ranks(); ++r) {
    BlockVector local(part.local_rows(r), v.t());
    for (std::size_t j = 0; j < v.t(); ++j)
      for (std::size_t i = 0; i < local.n_rows(); ++i) local(i, j) = v(part.begin(r) + i, j);
    out.push_back(std::move(local));
  }
  return out;
}

inline DistBlockVector scatter(const std::vector<double>& v, const RowPartition& part) {
  BlockVector bv(v.size(), 1);
  std::copy(v.begin(), v.end(), bv.col(0).begin());
  return scatter(bv, part);
}

inline BlockVector gather(const DistBlockVector& parts, const RowPartition& partition) {
  const std::size_t t = parts.front().t();
  BlockVector out(partition.num_rows(), t);
  for (std::size_t r = 0; r < parts.size(); ++r)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t i = 0; i < parts[r].n_rows(); ++i) out(partition.begin(r) + i, j) = parts[r](i, j);
  return out;
}

// W = A V: halo exchange through `plan`, then on-process plus off-process products.
inline DistBlockVector spmbv(const DistributedMatrix& a, const CommPlan& plan, const DistBlockVector& v,
                             const VirtualCluster& cluster, ExecutionTrace& trace) {
  const Delivery recv = cluster.execute_plan(plan, a.pattern, v, trace);
  const std::size_t t = plan.t;
  DistBlockVector w(a.topology.p);
  cluster.for_each_rank([&](std::size_t r) {
    BlockVector out(a.partition.local_rows(r), t);
    csr_multiply(a.blocks[r].on_process, v[r], out);
    if (a.blocks[r].off_process.nnz() > 0) csr_multiply_add(a.blocks[r].off_process, recv.values[r], out);
    trace.flops_per_rank[r].charge(Kernel::spmbv, flops::spmbv(a.local_nnz(r), t));
    w[r] = std::move(out);
  });
  return w;
}

}  // namespace ecg
