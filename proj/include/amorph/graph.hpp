#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace amorph {

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  auto operator<=>(const Edge&) const = default;
};

enum class TopologyScheme { morphology, star, line, full };

std::string_view to_string(TopologyScheme scheme);
TopologyScheme parse_topology(std::string_view name);

/// Labelled directed graph over limbs. Node `root` is the torso.
///
/// Edges are kept sorted and unique. Physically connected limbs carry both
/// directions. The constructor enforces: no self loops, every endpoint and the
/// root are valid node indices, one type label per node.
class MorphGraph {
 public:
  MorphGraph(std::size_t node_count, std::vector<std::string> node_types, std::vector<Edge> edges,
             std::size_t root = 0);

  std::size_t node_count() const noexcept { return node_count_; }
  std::size_t root() const noexcept { return root_; }
  const std::vector<std::string>& node_types() const noexcept { return node_types_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  bool has_edge(std::size_t from, std::size_t to) const;
  /// Senders k with an edge k -> node, ascending.
  std::vector<std::size_t> in_neighbors(std::size_t node) const;
  /// Neighbours in the undirected skeleton, ascending.
  std::vector<std::size_t> undirected_neighbors(std::size_t node) const;
  bool is_connected() const;

  bool operator==(const MorphGraph&) const = default;

 private:
  std::size_t node_count_;
  std::vector<std::string> node_types_;
  std::vector<Edge> edges_;
  std::size_t root_;
};

/// Dense 0/1 matrix, row-major; entry(i, j) == 1 iff edge i -> j.
struct AdjacencyMatrix {
  std::size_t n = 0;
  std::vector<std::uint8_t> entries;

  std::uint8_t operator()(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
  bool operator==(const AdjacencyMatrix&) const = default;
};

/// parent[i] is empty only for the root.
using ParentArray = std::vector<std::optional<std::size_t>>;

/// Torso (node 0) followed by `n_links` links along a path.
MorphGraph build_chain_morphology(std::size_t n_links);

/// Rewires the edge set of `graph` according to `scheme`. Labels and root are kept.
MorphGraph make_topology(const MorphGraph& graph, TopologyScheme scheme);

/// Parent array rooted at graph.root(); throws StructuralError on cycles or
/// disconnected skeletons.
ParentArray validate_tree(const MorphGraph& graph);

/// Children of every node given a parent array, each list ascending.
std::vector<std::vector<std::size_t>> children_of(const ParentArray& parents);

/// Largest child count over all nodes of a tree.
std::size_t max_fan_out(const ParentArray& parents);

AdjacencyMatrix adjacency(const MorphGraph& graph);

// Fixture format, one directive per line:
//   nodes <n> | root <i> | type <i> <name> | edge <i> <j>
// Blank lines and lines starting with '#' are ignored.
MorphGraph parse_graph(std::istream& in);
MorphGraph load_graph_file(const std::filesystem::path& path);
void write_graph(std::ostream& out, const MorphGraph& graph);

}  // namespace amorph
