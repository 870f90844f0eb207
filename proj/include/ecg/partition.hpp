#pragma once

// Row partitioning across virtual ranks, rank -> node grouping and the
// extraction of who needs which remote rows.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecg/core_linalg.hpp"

namespace ecg {

// p ranks grouped onto nodes in contiguous blocks of ppn.
struct Topology {
  std::size_t p = 1;
  std::size_t ppn = 1;

  Topology() = default;
  Topology(std::size_t ranks, std::size_t per_node) : p(ranks), ppn(per_node) {
    if (p == 0 || ppn == 0) throw std::invalid_argument("topology: p and ppn must be positive");
  }

  std::size_t node_of(std::size_t rank) const noexcept { return rank / ppn; }
  std::size_t local_index(std::size_t rank) const noexcept { return rank % ppn; }
  std::size_t num_nodes() const noexcept { return (p + ppn - 1) / ppn; }
  std::size_t first_rank(std::size_t node) const noexcept { return node * ppn; }
  // The last node may be partially filled when ppn does not divide p.
  std::size_t node_size(std::size_t node) const noexcept { return std::min(ppn, p - node * ppn); }
  std::size_t rank_of(std::size_t node, std::size_t local) const noexcept { return node * ppn + local; }
  bool same_node(std::size_t a, std::size_t b) const noexcept { return node_of(a) == node_of(b); }

  friend bool operator==(const Topology&, const Topology&) = default;
};

// Contiguous row ranges: rank r owns [offsets[r], offsets[r+1]).
struct RowPartition {
  std::vector<std::size_t> offsets{0};

  std::size_t num_ranks() const noexcept { return offsets.size() - 1; }
  std::size_t num_rows() const noexcept { return offsets.back(); }
  std::size_t begin(std::size_t rank) const { return offsets[rank]; }
  std::size_t end(std::size_t rank) const { return offsets[rank + 1]; }
  std::size_t local_rows(std::size_t rank) const { return offsets[rank + 1] - offsets[rank]; }

  std::size_t owner(std::size_t row) const {
    auto it = std::upper_bound(offsets.begin(), offsets.end(), row);
    return std::size_t(it - offsets.begin()) - 1;
  }

  friend bool operator==(const RowPartition&, const RowPartition&) = default;
};

// First n mod p ranks get ceil(n/p) rows, the rest floor(n/p).
inline RowPartition build_row_partition(std::size_t n, std::size_t p) {
  if (p == 0) throw std::invalid_argument("row partition: p must be positive");
  if (p > n) throw std::invalid_argument("row partition: more ranks (" + std::to_string(p) +
                                         ") than rows (" + std::to_string(n) + ")");
  RowPartition part;
  part.offsets.assign(p + 1, 0);
  const std::size_t base = n / p, extra = n % p;
  for (std::size_t r = 0; r < p; ++r) part.offsets[r + 1] = part.offsets[r] + base + (r < extra ? 1 : 0);
  return part;
}

// Contiguous ranges with approximately equal nonzero counts; every rank keeps at least one row.
inline RowPartition build_nnz_partition(const CsrMatrix& a, std::size_t p) {
  const std::size_t n = a.n_rows;
  if (p == 0 || p > n) throw std::invalid_argument("nnz partition: need 1 <= p <= n");
  RowPartition part;
  part.offsets.assign(p + 1, 0);
  part.offsets[p] = n;
  const double per_rank = double(a.nnz()) / double(p);
  std::size_t row = 0;
  for (std::size_t k = 1; k < p; ++k) {
    const double target = per_rank * double(k);
    while (row < n && double(a.row_offsets[row]) < target) ++row;
    const std::size_t lo = part.offsets[k - 1] + 1;
    const std::size_t hi = n - (p - k);
    part.offsets[k] = std::clamp(row, lo, hi);
    row = part.offsets[k];
  }
  return part;
}

// Symmetric reordering B = P A P^T with B(i, j) = A(perm[i], perm[j]).
inline CsrMatrix permute_symmetric(const CsrMatrix& a, const std::vector<std::size_t>& perm) {
  if (a.n_rows != a.n_cols || perm.size() != a.n_rows) throw DimensionError("permute: size mismatch");
  std::vector<std::size_t> inverse(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || inverse[perm[i]] != perm.size())
      throw std::invalid_argument("permute: not a permutation");
    inverse[perm[i]] = i;
  }
  std::vector<std::tuple<std::size_t, std::size_t, double>> entries;
  entries.reserve(a.nnz());
  for (std::size_t r = 0; r < a.n_rows; ++r)
    for (std::size_t k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k)
      entries.emplace_back(inverse[r], inverse[a.col_indices[k]], a.values[k]);
  return CsrMatrix::from_triplets(a.n_rows, a.n_cols, std::move(entries));
}

enum class Locality { on_process, on_node, off_node };

inline const char* to_string(Locality l) {
  switch (l) {
    case Locality::on_process: return "on_process";
    case Locality::on_node: return "on_node";
    case Locality::off_node: return "off_node";
  }
  return "?";
}

// Rows exchanged with one peer rank, ascending global indices.
struct RowBlock {
  std::size_t rank = 0;
  std::vector<std::size_t> rows;
  Locality locality = Locality::off_node;

  friend bool operator==(const RowBlock&, const RowBlock&) = default;
};

struct CommPattern {
  Topology topology;
  RowPartition partition;
  // recv[r]: blocks rank r needs, one per source rank, ascending by source.
  std::vector<std::vector<RowBlock>> recv;
  // send[s]: blocks rank s must provide, one per destination, ascending by destination.
  std::vector<std::vector<RowBlock>> send;

  std::size_t num_ranks() const noexcept { return recv.size(); }

  // All remote rows needed by rank r, ascending. Sources own contiguous
  // ascending ranges, so concatenation in source order is already sorted.
  std::vector<std::size_t> recv_rows(std::size_t r) const {
    std::vector<std::size_t> rows;
    for (const auto& b : recv[r]) rows.insert(rows.end(), b.rows.begin(), b.rows.end());
    return rows;
  }

  std::size_t total_required() const {
    std::size_t total = 0;
    for (const auto& blocks : recv)
      for (const auto& b : blocks) total += b.rows.size();
    return total;
  }
};

inline CommPattern analyze_comm(const CsrMatrix& a, const RowPartition& part, const Topology& topo) {
  if (a.n_rows != a.n_cols) throw DimensionError("analyze_comm: matrix must be square");
  if (part.num_rows() != a.n_rows) throw DimensionError("analyze_comm: partition does not cover matrix");
  if (part.num_ranks() != topo.p) throw DimensionError("analyze_comm: partition/topology rank mismatch");

  const std::size_t p = topo.p;
  CommPattern pat;
  pat.topology = topo;
  pat.partition = part;
  pat.recv.resize(p);
  pat.send.resize(p);

  std::vector<std::size_t> needed;
  for (std::size_t r = 0; r < p; ++r) {
    needed.clear();
    for (std::size_t row = part.begin(r); row < part.end(r); ++row)
      for (std::size_t k = a.row_offsets[row]; k < a.row_offsets[row + 1]; ++k) {
        const std::size_t c = a.col_indices[k];
        if (c < part.begin(r) || c >= part.end(r)) needed.push_back(c);
      }
    std::sort(needed.begin(), needed.end());
    needed.erase(std::unique(needed.begin(), needed.end()), needed.end());

    for (std::size_t c : needed) {
      const std::size_t owner = part.owner(c);
      if (pat.recv[r].empty() || pat.recv[r].back().rank != owner) {
        const Locality loc = topo.same_node(owner, r) ? Locality::on_node : Locality::off_node;
        pat.recv[r].push_back({owner, {}, loc});
      }
      pat.recv[r].back().rows.push_back(c);
    }
  }
  // Destinations are visited in ascending order, so each send list stays sorted.
  for (std::size_t r = 0; r < p; ++r)
    for (const auto& b : pat.recv[r]) pat.send[b.rank].push_back({r, b.rows, b.locality});
  return pat;
}

// A rank's rows split into the diagonal (on-process) block and the
// off-process block whose columns index the ascending receive buffer.
struct LocalBlocks {
  CsrMatrix on_process;
  CsrMatrix off_process;
  std::vector<std::size_t> remote_columns;  // global index of each off_process column
};

inline LocalBlocks split_local_blocks(const CsrMatrix& a, const RowPartition& part, std::size_t rank) {
  if (rank >= part.num_ranks()) throw std::out_of_range("split_local_blocks: invalid rank");
  const std::size_t lo = part.begin(rank), hi = part.end(rank), n_local = hi - lo;

  LocalBlocks blocks;
  for (std::size_t row = lo; row < hi; ++row)
    for (std::size_t k = a.row_offsets[row]; k < a.row_offsets[row + 1]; ++k) {
      const std::size_t c = a.col_indices[k];
      if (c < lo || c >= hi) blocks.remote_columns.push_back(c);
    }
  auto& remote = blocks.remote_columns;
  std::sort(remote.begin(), remote.end());
  remote.erase(std::unique(remote.begin(), remote.end()), remote.end());

  CsrMatrix on(n_local, n_local), off(n_local, remote.size());
  for (std::size_t row = lo; row < hi; ++row) {
    for (std::size_t k = a.row_offsets[row]; k < a.row_offsets[row + 1]; ++k) {
      const std::size_t c = a.col_indices[k];
      if (c >= lo && c < hi) {
        on.col_indices.push_back(c - lo);
        on.values.push_back(a.values[k]);
      } else {
        // Global columns are ascending within the row and so are their buffer slots.
        off.col_indices.push_back(std::size_t(std::lower_bound(remote.begin(), remote.end(), c) - remote.begin()));
        off.values.push_back(a.values[k]);
      }
    }
    on.row_offsets[row - lo + 1] = on.col_indices.size();
    off.row_offsets[row - lo + 1] = off.col_indices.size();
  }
  blocks.on_process = std::move(on);
  blocks.off_process = std::move(off);
  return blocks;
}

}  // namespace ecg
