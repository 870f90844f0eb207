#pragma once

// Phased point-to-point plans for the SpMBV halo exchange: standard,
// 2-step, 3-step and nodal-optimal, plus exact message/byte statistics.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecg/partition.hpp"

namespace ecg {

enum class Scheme { standard, two_step, three_step, nodal_optimal };

inline constexpr Scheme kAllSchemes[] = {Scheme::standard, Scheme::two_step, Scheme::three_step,
                                         Scheme::nodal_optimal};

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::standard: return "standard";
    case Scheme::two_step: return "2step";
    case Scheme::three_step: return "3step";
    case Scheme::nodal_optimal: return "optimal";
  }
  return "?";
}

inline std::optional<Scheme> parse_scheme(std::string_view name) {
  for (Scheme s : kAllSchemes)
    if (name == to_string(s)) return s;
  return std::nullopt;
}

// Eager-limit style cutoff between conglomerated and split payloads.
inline constexpr std::size_t kDefaultThresholdBytes = 8192;

struct Message {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::vector<std::size_t> rows;  // ascending global rows, t values each
  Locality locality = Locality::off_node;

  friend bool operator==(const Message&, const Message&) = default;
};

struct Phase {
  std::string name;
  std::vector<Message> messages;
};

struct CommPlan {
  Scheme scheme = Scheme::standard;
  Topology topology;
  std::size_t t = 1;
  std::size_t bytes_per_float = 8;
  std::vector<Phase> phases;

  std::size_t bytes(const Message& m) const { return m.rows.size() * t * bytes_per_float; }

  std::size_t message_count() const {
    std::size_t n = 0;
    for (const auto& ph : phases) n += ph.messages.size();
    return n;
  }
};

namespace detail {

using PairRows = std::map<std::pair<std::size_t, std::size_t>, std::set<std::size_t>>;

inline std::vector<Message> to_messages(const PairRows& pairs, const Topology& topo) {
  std::vector<Message> out;
  out.reserve(pairs.size());
  for (const auto& [key, rows] : pairs) {
    if (rows.empty()) continue;
    const Locality loc = topo.same_node(key.first, key.second) ? Locality::on_node : Locality::off_node;
    out.push_back({key.first, key.second, {rows.begin(), rows.end()}, loc});
  }
  return out;
}

// One inter-node message: sender on the source node, receiver on the destination node.
struct Buffer {
  std::size_t sender = 0;
  std::size_t receiver = 0;
  std::vector<std::size_t> rows;
};

// Assembles [gather], inter-node, redistribute phases around a set of buffers.
// Rows needed on-node travel directly from their owner during redistribution.
inline CommPlan assemble(const CommPattern& pat, Scheme scheme, std::size_t t, std::size_t f,
                         std::vector<Buffer> buffers, bool with_gather) {
  const Topology& topo = pat.topology;
  const RowPartition& part = pat.partition;
  CommPlan plan{scheme, topo, t, f, {}};

  std::sort(buffers.begin(), buffers.end(), [](const Buffer& a, const Buffer& b) {
    return std::tie(a.sender, a.receiver, a.rows) < std::tie(b.sender, b.receiver, b.rows);
  });

  // Rows a gathering rank already holds need no second on-node delivery.
  std::vector<std::set<std::size_t>> gathered(topo.p);
  if (with_gather) {
    PairRows gather;
    for (const auto& buf : buffers)
      for (std::size_t row : buf.rows) {
        const std::size_t owner = part.owner(row);
        if (owner != buf.sender) {
          gather[{owner, buf.sender}].insert(row);
          gathered[buf.sender].insert(row);
        }
      }
    plan.phases.push_back({"gather", to_messages(gather, topo)});
  }

  Phase inter{"inter_node", {}};
  // holder[(dest node, row)] = rank on the destination node receiving that row
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> holder;
  for (const auto& buf : buffers) {
    if (buf.rows.empty()) continue;
    inter.messages.push_back({buf.sender, buf.receiver, buf.rows, Locality::off_node});
    const std::size_t dnode = topo.node_of(buf.receiver);
    for (std::size_t row : buf.rows) holder[{dnode, row}] = buf.receiver;
  }
  plan.phases.push_back(std::move(inter));

  PairRows redistribute;
  for (std::size_t d = 0; d < pat.num_ranks(); ++d) {
    const std::size_t dnode = topo.node_of(d);
    for (const auto& blk : pat.recv[d]) {
      if (blk.locality == Locality::on_node) {
        for (std::size_t row : blk.rows)
          if (!gathered[d].contains(row)) redistribute[{blk.rank, d}].insert(row);
        continue;
      }
      for (std::size_t row : blk.rows) {
        const std::size_t h = holder.at({dnode, row});
        if (h != d) redistribute[{h, d}].insert(row);
      }
    }
  }
  plan.phases.push_back({"redistribute", to_messages(redistribute, topo)});
  return plan;
}

}  // namespace detail

// Deduplicated off-node payload per (source node, destination node): every
// row owned on the source node that some rank of the destination node needs.
inline std::vector<std::map<std::size_t, std::vector<std::size_t>>> node_payloads(const CommPattern& pat) {
  const Topology& topo = pat.topology;
  std::vector<std::map<std::size_t, std::set<std::size_t>>> acc(topo.num_nodes());
  for (std::size_t s = 0; s < pat.num_ranks(); ++s)
    for (const auto& blk : pat.send[s])
      if (blk.locality == Locality::off_node)
        acc[topo.node_of(s)][topo.node_of(blk.rank)].insert(blk.rows.begin(), blk.rows.end());

  std::vector<std::map<std::size_t, std::vector<std::size_t>>> out(acc.size());
  for (std::size_t n = 0; n < acc.size(); ++n)
    for (const auto& [dnode, rows] : acc[n]) out[n][dnode] = {rows.begin(), rows.end()};
  return out;
}

// Largest number of distinct destination nodes any single rank must reach.
inline std::size_t max_destination_nodes(const CommPattern& pat) {
  std::size_t best = 0;
  for (std::size_t s = 0; s < pat.num_ranks(); ++s) {
    std::set<std::size_t> nodes;
    for (const auto& blk : pat.send[s])
      if (blk.locality == Locality::off_node) nodes.insert(pat.topology.node_of(blk.rank));
    best = std::max(best, nodes.size());
  }
  return best;
}

// Per-rank inter-node message count of a balanced one-buffer-per-node-pair
// exchange: max over nodes of ceil(destination nodes / ranks on node).
inline std::size_t three_step_process_bound(const CommPattern& pat) {
  const auto payloads = node_payloads(pat);
  std::size_t best = 0;
  for (std::size_t n = 0; n < payloads.size(); ++n) {
    const std::size_t k = pat.topology.node_size(n);
    best = std::max(best, (payloads[n].size() + k - 1) / k);
  }
  return best;
}

inline CommPlan plan_standard(const CommPattern& pat, std::size_t t, std::size_t f = 8) {
  CommPlan plan{Scheme::standard, pat.topology, t, f, {}};
  Phase phase{"direct", {}};
  for (std::size_t s = 0; s < pat.num_ranks(); ++s)
    for (const auto& blk : pat.send[s]) phase.messages.push_back({s, blk.rank, blk.rows, blk.locality});
  plan.phases.push_back(std::move(phase));
  return plan;
}

// The rank with local index (destination node mod ranks-on-node) gathers
// that node's buffer and sends it to the same local index on the destination.
inline CommPlan plan_three_step(const CommPattern& pat, std::size_t t, std::size_t f = 8) {
  const Topology& topo = pat.topology;
  std::vector<detail::Buffer> buffers;
  const auto payloads = node_payloads(pat);
  for (std::size_t snode = 0; snode < payloads.size(); ++snode)
    for (const auto& [dnode, rows] : payloads[snode]) {
      const std::size_t local = dnode % topo.node_size(snode);
      const std::size_t sender = topo.rank_of(snode, local);
      const std::size_t receiver = topo.rank_of(dnode, local % topo.node_size(dnode));
      buffers.push_back({sender, receiver, rows});
    }
  return detail::assemble(pat, Scheme::three_step, t, f, std::move(buffers), true);
}

// Each rank sends its own rows needed anywhere on a destination node to
// the rank with the same local index there.
inline CommPlan plan_two_step(const CommPattern& pat, std::size_t t, std::size_t f = 8) {
  const Topology& topo = pat.topology;
  std::vector<detail::Buffer> buffers;
  for (std::size_t s = 0; s < pat.num_ranks(); ++s) {
    std::map<std::size_t, std::set<std::size_t>> per_node;
    for (const auto& blk : pat.send[s])
      if (blk.locality == Locality::off_node)
        per_node[topo.node_of(blk.rank)].insert(blk.rows.begin(), blk.rows.end());
    for (const auto& [dnode, rows] : per_node) {
      const std::size_t receiver = topo.rank_of(dnode, topo.local_index(s) % topo.node_size(dnode));
      buffers.push_back({s, receiver, {rows.begin(), rows.end()}});
    }
  }
  auto plan = detail::assemble(pat, Scheme::two_step, t, f, std::move(buffers), false);
  return plan;
}

// Per source node: payloads at or below the threshold travel as one buffer
// per destination node; larger payloads are cut into whole-row chunks of at
// most threshold bytes, spread over at most node-size ranks. The per-node
// chunk budget is capped at node_size * max(m_proc->node, ppn) so that no
// rank injects more than that many messages. Chunks are assigned largest
// first to the rank with the fewest messages so far (ties: lowest local index).
inline CommPlan plan_nodal_optimal(const CommPattern& pat, std::size_t t, std::size_t f = 8,
                                   std::size_t threshold = kDefaultThresholdBytes) {
  if (threshold == 0) throw std::invalid_argument("nodal-optimal: threshold must be positive");
  const Topology& topo = pat.topology;
  const std::size_t row_bytes = t * f;
  const std::size_t rows_per_chunk = std::max<std::size_t>(1, threshold / row_bytes);
  const std::size_t cap = std::max(max_destination_nodes(pat), topo.ppn);

  std::vector<detail::Buffer> buffers;
  const auto payloads = node_payloads(pat);
  for (std::size_t snode = 0; snode < payloads.size(); ++snode) {
    const std::size_t k = topo.node_size(snode);

    struct Payload {
      std::size_t dnode;
      const std::vector<std::size_t>* rows;
    };
    std::vector<Payload> order;
    for (const auto& [dnode, rows] : payloads[snode]) order.push_back({dnode, &rows});
    std::stable_sort(order.begin(), order.end(),
                     [](const Payload& a, const Payload& b) { return a.rows->size() > b.rows->size(); });

    struct Chunk {
      std::size_t dnode;
      std::vector<std::size_t> rows;
    };
    std::vector<Chunk> chunks;
    std::size_t spare = k * cap - order.size();
    for (const auto& pl : order) {
      const std::size_t nrows = pl.rows->size();
      std::size_t pieces = 1;
      if (nrows * row_bytes > threshold) {
        pieces = (nrows + rows_per_chunk - 1) / rows_per_chunk;
        pieces = std::min({pieces, k, nrows, 1 + spare});
      }
      spare -= pieces - 1;
      const std::size_t base = nrows / pieces, extra = nrows % pieces;
      std::size_t at = 0;
      for (std::size_t c = 0; c < pieces; ++c) {
        const std::size_t len = base + (c < extra ? 1 : 0);
        chunks.push_back({pl.dnode, {pl.rows->begin() + std::ptrdiff_t(at), pl.rows->begin() + std::ptrdiff_t(at + len)}});
        at += len;
      }
    }
    std::stable_sort(chunks.begin(), chunks.end(),
                     [](const Chunk& a, const Chunk& b) { return a.rows.size() > b.rows.size(); });

    std::vector<std::size_t> load(k, 0);
    for (auto& ch : chunks) {
      const std::size_t local = std::size_t(std::min_element(load.begin(), load.end()) - load.begin());
      ++load[local];
      const std::size_t sender = topo.rank_of(snode, local);
      const std::size_t receiver = topo.rank_of(ch.dnode, local % topo.node_size(ch.dnode));
      buffers.push_back({sender, receiver, std::move(ch.rows)});
    }
  }
  return detail::assemble(pat, Scheme::nodal_optimal, t, f, std::move(buffers), true);
}

inline CommPlan make_plan(Scheme scheme, const CommPattern& pat, std::size_t t, std::size_t f = 8,
                          std::size_t threshold = kDefaultThresholdBytes) {
  switch (scheme) {
    case Scheme::standard: return plan_standard(pat, t, f);
    case Scheme::two_step: return plan_two_step(pat, t, f);
    case Scheme::three_step: return plan_three_step(pat, t, f);
    case Scheme::nodal_optimal: return plan_nodal_optimal(pat, t, f, threshold);
  }
  throw std::invalid_argument("unknown scheme");
}

// Message and byte maxima of a plan (all byte fields are at the plan's width).
struct CommStats {
  std::size_t m = 0;                 // max messages sent by a rank, all phases
  std::size_t s = 0;                 // max bytes sent by a rank, all phases
  std::size_t s_proc = 0;            // max inter-node bytes sent by a rank
  std::size_t s_node = 0;            // max inter-node bytes injected by a node
  std::size_t m_proc_to_node = 0;    // max distinct destination nodes of a rank
  std::size_t m_node_to_node = 0;    // max inter-node messages between an ordered node pair
  std::size_t s_node_to_node = 0;    // max inter-node bytes between an ordered node pair
  std::size_t n_opt = 0;             // max inter-node messages injected by a rank
  std::size_t total_internode_bytes = 0;
  std::size_t total_onnode_bytes = 0;
  std::size_t total_messages = 0;
  std::size_t width = 1;
  std::size_t bytes_per_float = 8;
  std::size_t ppn = 1;

  friend bool operator==(const CommStats&, const CommStats&) = default;
};

// Accumulates stats from a stream of (src, dst, bytes) sends.
class StatsAccumulator {
 public:
  StatsAccumulator(const Topology& topo, std::size_t width, std::size_t f)
      : topo_(topo), width_(width), f_(f), msgs_(topo.p, 0), bytes_(topo.p, 0), inter_bytes_(topo.p, 0),
        inter_msgs_(topo.p, 0), dest_nodes_(topo.p), node_bytes_(topo.num_nodes(), 0) {}

  void record(std::size_t src, std::size_t dst, std::size_t bytes) {
    ++msgs_[src];
    bytes_[src] += bytes;
    ++total_messages_;
    if (topo_.same_node(src, dst)) {
      total_onnode_ += bytes;
      return;
    }
    const std::size_t sn = topo_.node_of(src), dn = topo_.node_of(dst);
    inter_bytes_[src] += bytes;
    ++inter_msgs_[src];
    dest_nodes_[src].insert(dn);
    node_bytes_[sn] += bytes;
    auto& pair = pairs_[{sn, dn}];
    ++pair.first;
    pair.second += bytes;
    total_internode_ += bytes;
  }

  CommStats finish() const {
    CommStats st;
    auto mx = [](const auto& v) { return v.empty() ? std::size_t{0} : *std::max_element(v.begin(), v.end()); };
    st.m = mx(msgs_);
    st.s = mx(bytes_);
    st.s_proc = mx(inter_bytes_);
    st.s_node = mx(node_bytes_);
    st.n_opt = mx(inter_msgs_);
    for (const auto& d : dest_nodes_) st.m_proc_to_node = std::max(st.m_proc_to_node, d.size());
    for (const auto& [key, v] : pairs_) {
      st.m_node_to_node = std::max(st.m_node_to_node, v.first);
      st.s_node_to_node = std::max(st.s_node_to_node, v.second);
    }
    st.total_internode_bytes = total_internode_;
    st.total_onnode_bytes = total_onnode_;
    st.total_messages = total_messages_;
    st.width = width_;
    st.bytes_per_float = f_;
    st.ppn = topo_.ppn;
    return st;
  }

 private:
  Topology topo_;
  std::size_t width_, f_;
  std::vector<std::size_t> msgs_, bytes_, inter_bytes_, inter_msgs_;
  std::vector<std::set<std::size_t>> dest_nodes_;
  std::vector<std::size_t> node_bytes_;
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, std::size_t>> pairs_;
  std::size_t total_internode_ = 0, total_onnode_ = 0, total_messages_ = 0;
};

inline CommStats plan_stats(const CommPlan& plan) {
  StatsAccumulator acc(plan.topology, plan.t, plan.bytes_per_float);
  for (const auto& ph : plan.phases)
    for (const auto& msg : ph.messages) acc.record(msg.src, msg.dst, plan.bytes(msg));
  return acc.finish();
}

}  // namespace ecg
