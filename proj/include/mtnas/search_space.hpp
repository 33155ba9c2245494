#pragma once

#include "mtnas/numerics.hpp"

#include <cstdint>
#include <vector>

namespace mtnas {

enum class QueryPolicy { prev_layer_only, prev_layer_plus_root, root_only };
enum class GateMode { softmax_gate, mean_pool };

struct SpaceConfig {
  int L = 2;       // sub-network layers
  int H = 4;       // sub-networks per layer
  int T = 2;       // tasks
  int d_v = 64;    // sub-network output width
  int d_root = 64; // root feature width
  QueryPolicy query_policy = QueryPolicy::prev_layer_plus_root;
  GateMode gate_mode = GateMode::softmax_gate;

  void validate() const;
};

// A block sits before a layer-(l+1) sub-network (layer = l+1, 2..L) or
// before a task head. Layer-1 sub-networks consume the root feature
// directly and have no block.
struct BlockId {
  enum class Kind { inter_layer, task };
  Kind kind = Kind::task;
  int layer = 0;     // target layer, inter_layer only
  int position = 0;  // sub-network index or task index

  friend bool operator==(const BlockId&, const BlockId&) = default;
};

// One local sharing route: which previous-layer outputs feed the gate as
// values (nonempty bitmask over 0..H-1) and which query candidate it uses.
struct LocalRoute {
  std::uint32_t value_mask = 0;
  int query_source = 0;

  int subset_size() const;
  std::vector<int> subset_indices() const;

  friend bool operator==(const LocalRoute&, const LocalRoute&) = default;
};

struct Subspace {
  BlockId block;
  std::vector<LocalRoute> routes;  // canonical order: mask ascending, query ascending
};

// One local-route index per block, canonical BlockId order: inter_layer
// blocks layer-major then position, then task blocks by task index.
struct RouteVector {
  std::vector<int> u;

  friend bool operator==(const RouteVector&, const RouteVector&) = default;
};

// Number of query candidates |Q|: indices 0..H-1 address previous-layer
// outputs; under prev_layer_plus_root index H is the root feature; under
// root_only the single index 0 is the root feature.
int query_count(const SpaceConfig& cfg);
bool query_is_root(const SpaceConfig& cfg, int query_source);

int block_count(const SpaceConfig& cfg);  // (L-1)*H + T
std::vector<BlockId> enumerate_blocks(const SpaceConfig& cfg);
int block_index(const SpaceConfig& cfg, const BlockId& block);

int local_route_count(const SpaceConfig& cfg);  // (2^H - 1) * |Q|, same for every block
LocalRoute decode_route(const SpaceConfig& cfg, int index);
int encode_route(const SpaceConfig& cfg, const LocalRoute& route);

Subspace enumerate_subspace(const SpaceConfig& cfg, const BlockId& block);

struct SpaceSize {
  unsigned long long value = 0;
  bool saturated = false;  // product overflowed 64 bits
};
SpaceSize route_space_size(const SpaceConfig& cfg);

enum class ReferenceRoute { share_bottom_like, mmoe_like };

// share_bottom_like: every block takes value subset {0} (one chained
// column; singleton gates are exact identities). mmoe_like: inter-layer
// block at position j takes {j} (straight-through experts), task blocks
// take the full subset {0..H-1}.
RouteVector reference_route(ReferenceRoute name, const SpaceConfig& cfg);

void validate_route(const SpaceConfig& cfg, const RouteVector& u);

}  // namespace mtnas
