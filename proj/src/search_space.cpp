#include "mtnas/search_space.hpp"

#include <bit>
#include <climits>

namespace mtnas {

void SpaceConfig::validate() const {
  if (L < 1 || H < 1 || T < 1 || d_v < 1 || d_root < 1) {
    throw shape_error("SpaceConfig: L, H, T, d_v, d_root must all be >= 1");
  }
  if (H > 20) throw shape_error("SpaceConfig: H > 20 is not enumerable");
}

int LocalRoute::subset_size() const {
  return std::popcount(value_mask);
}

std::vector<int> LocalRoute::subset_indices() const {
  std::vector<int> idx;
  for (int j = 0; j < 32; ++j) {
    if (value_mask & (1u << j)) idx.push_back(j);
  }
  return idx;
}

int query_count(const SpaceConfig& cfg) {
  switch (cfg.query_policy) {
    case QueryPolicy::prev_layer_only: return cfg.H;
    case QueryPolicy::prev_layer_plus_root: return cfg.H + 1;
    case QueryPolicy::root_only: return 1;
  }
  throw shape_error("query_count: unknown policy");
}

bool query_is_root(const SpaceConfig& cfg, int query_source) {
  switch (cfg.query_policy) {
    case QueryPolicy::prev_layer_only: return false;
    case QueryPolicy::prev_layer_plus_root: return query_source == cfg.H;
    case QueryPolicy::root_only: return true;
  }
  throw shape_error("query_is_root: unknown policy");
}

int block_count(const SpaceConfig& cfg) {
  return (cfg.L - 1) * cfg.H + cfg.T;
}

std::vector<BlockId> enumerate_blocks(const SpaceConfig& cfg) {
  std::vector<BlockId> blocks;
  blocks.reserve(static_cast<std::size_t>(block_count(cfg)));
  for (int layer = 2; layer <= cfg.L; ++layer) {
    for (int j = 0; j < cfg.H; ++j) {
      blocks.push_back({BlockId::Kind::inter_layer, layer, j});
    }
  }
  for (int t = 0; t < cfg.T; ++t) {
    blocks.push_back({BlockId::Kind::task, 0, t});
  }
  return blocks;
}

int block_index(const SpaceConfig& cfg, const BlockId& block) {
  if (block.kind == BlockId::Kind::inter_layer) {
    if (block.layer < 2 || block.layer > cfg.L || block.position < 0 ||
        block.position >= cfg.H) {
      throw shape_error("block_index: invalid inter_layer block");
    }
    return (block.layer - 2) * cfg.H + block.position;
  }
  if (block.position < 0 || block.position >= cfg.T) {
    throw shape_error("block_index: invalid task block");
  }
  return (cfg.L - 1) * cfg.H + block.position;
}

int local_route_count(const SpaceConfig& cfg) {
  return ((1 << cfg.H) - 1) * query_count(cfg);
}

LocalRoute decode_route(const SpaceConfig& cfg, int index) {
  const int nq = query_count(cfg);
  if (index < 0 || index >= local_route_count(cfg)) {
    throw shape_error("decode_route: index out of range");
  }
  LocalRoute r;
  r.value_mask = static_cast<std::uint32_t>(index / nq + 1);
  r.query_source = index % nq;
  return r;
}

int encode_route(const SpaceConfig& cfg, const LocalRoute& route) {
  const int nq = query_count(cfg);
  if (route.value_mask == 0 || route.value_mask > ((1u << cfg.H) - 1)) {
    throw shape_error("encode_route: value subset out of range");
  }
  if (route.query_source < 0 || route.query_source >= nq) {
    throw shape_error("encode_route: query source out of range");
  }
  return static_cast<int>(route.value_mask - 1) * nq + route.query_source;
}

Subspace enumerate_subspace(const SpaceConfig& cfg, const BlockId& block) {
  cfg.validate();
  block_index(cfg, block);  // rejects invalid ids
  Subspace sub;
  sub.block = block;
  const int n = local_route_count(cfg);
  sub.routes.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) sub.routes.push_back(decode_route(cfg, k));
  return sub;
}

SpaceSize route_space_size(const SpaceConfig& cfg) {
  SpaceSize size;
  size.value = 1;
  const unsigned long long per_block =
      static_cast<unsigned long long>(local_route_count(cfg));
  for (int i = 0; i < block_count(cfg); ++i) {
    if (size.value > ULLONG_MAX / per_block) {
      size.value = ULLONG_MAX;
      size.saturated = true;
      return size;
    }
    size.value *= per_block;
  }
  return size;
}

RouteVector reference_route(ReferenceRoute name, const SpaceConfig& cfg) {
  cfg.validate();
  RouteVector route;
  for (const BlockId& block : enumerate_blocks(cfg)) {
    LocalRoute r;
    r.query_source = 0;
    if (name == ReferenceRoute::share_bottom_like) {
      r.value_mask = 1u;
    } else {
      if (block.kind == BlockId::Kind::inter_layer) {
        r.value_mask = 1u << block.position;
      } else {
        r.value_mask = (1u << cfg.H) - 1;
      }
    }
    route.u.push_back(encode_route(cfg, r));
  }
  return route;
}

void validate_route(const SpaceConfig& cfg, const RouteVector& u) {
  if (static_cast<int>(u.u.size()) != block_count(cfg)) {
    throw shape_error("validate_route: wrong block count");
  }
  const int n = local_route_count(cfg);
  for (int k : u.u) {
    if (k < 0 || k >= n) throw shape_error("validate_route: route index out of range");
  }
}

}  // namespace mtnas
