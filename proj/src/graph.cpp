#include "amorph/graph.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <queue>
#include <sstream>

#include "amorph/errors.hpp"

namespace amorph {

std::string_view to_string(TopologyScheme scheme) {
  switch (scheme) {
    case TopologyScheme::morphology: return "morphology";
    case TopologyScheme::star: return "star";
    case TopologyScheme::line: return "line";
    case TopologyScheme::full: return "full";
  }
  return "?";
}

TopologyScheme parse_topology(std::string_view name) {
  if (name == "morphology") return TopologyScheme::morphology;
  if (name == "star") return TopologyScheme::star;
  if (name == "line") return TopologyScheme::line;
  if (name == "full") return TopologyScheme::full;
  throw std::invalid_argument("unknown topology '" + std::string(name) + "'");
}

MorphGraph::MorphGraph(std::size_t node_count, std::vector<std::string> node_types,
                       std::vector<Edge> edges, std::size_t root)
    : node_count_(node_count), node_types_(std::move(node_types)), edges_(std::move(edges)), root_(root) {
  if (node_count_ == 0) throw std::invalid_argument("graph needs at least one node");
  if (node_types_.size() != node_count_) {
    throw std::invalid_argument("expected " + std::to_string(node_count_) + " node types, got " +
                                std::to_string(node_types_.size()));
  }
  if (root_ >= node_count_) throw std::invalid_argument("root " + std::to_string(root_) + " out of range");
  for (const Edge& e : edges_) {
    if (e.from >= node_count_ || e.to >= node_count_) {
      throw std::invalid_argument("edge (" + std::to_string(e.from) + "," + std::to_string(e.to) +
                                  ") out of range");
    }
    if (e.from == e.to) throw std::invalid_argument("self-loop on node " + std::to_string(e.from));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

bool MorphGraph::has_edge(std::size_t from, std::size_t to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

std::vector<std::size_t> MorphGraph::in_neighbors(std::size_t node) const {
  std::vector<std::size_t> out;
  for (const Edge& e : edges_) {
    if (e.to == node) out.push_back(e.from);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> MorphGraph::undirected_neighbors(std::size_t node) const {
  std::vector<std::size_t> out;
  for (const Edge& e : edges_) {
    if (e.from == node) out.push_back(e.to);
    if (e.to == node) out.push_back(e.from);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool MorphGraph::is_connected() const {
  std::vector<bool> seen(node_count_, false);
  std::vector<std::size_t> stack{root_};
  seen[root_] = true;
  std::size_t visited = 1;
  while (!stack.empty()) {
    std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t u : undirected_neighbors(v)) {
      if (!seen[u]) {
        seen[u] = true;
        ++visited;
        stack.push_back(u);
      }
    }
  }
  return visited == node_count_;
}

MorphGraph build_chain_morphology(std::size_t n_links) {
  if (n_links == 0) throw std::invalid_argument("chain needs at least one link");
  std::vector<std::string> types(n_links + 1, "link");
  types[0] = "torso";
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < n_links; ++k) {
    edges.push_back({k, k + 1});
    edges.push_back({k + 1, k});
  }
  return MorphGraph(n_links + 1, std::move(types), std::move(edges), 0);
}

namespace {

std::vector<std::size_t> dfs_order(const MorphGraph& graph) {
  std::vector<bool> seen(graph.node_count(), false);
  std::vector<std::size_t> order;
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    seen[v] = true;
    order.push_back(v);
    for (std::size_t u : graph.undirected_neighbors(v)) {
      if (!seen[u]) visit(u);
    }
  };
  visit(graph.root());
  return order;
}

}  // namespace

MorphGraph make_topology(const MorphGraph& graph, TopologyScheme scheme) {
  const std::size_t n = graph.node_count();
  const std::size_t root = graph.root();
  std::vector<Edge> edges;
  switch (scheme) {
    case TopologyScheme::morphology:
      if (!graph.is_connected()) throw StructuralError("morphology graph is not connected");
      return graph;
    case TopologyScheme::star:
      for (std::size_t k = 0; k < n; ++k) {
        if (k == root) continue;
        edges.push_back({root, k});
        edges.push_back({k, root});
      }
      break;
    case TopologyScheme::line: {
      if (n < 2) throw std::invalid_argument("line topology needs at least two nodes");
      if (!graph.is_connected()) throw StructuralError("line topology needs a connected graph");
      const auto order = dfs_order(graph);
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        edges.push_back({order[k], order[k + 1]});
        edges.push_back({order[k + 1], order[k]});
      }
      break;
    }
    case TopologyScheme::full:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j) edges.push_back({i, j});
        }
      }
      break;
  }
  return MorphGraph(n, graph.node_types(), std::move(edges), root);
}

ParentArray validate_tree(const MorphGraph& graph) {
  const std::size_t n = graph.node_count();
  ParentArray parents(n);
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  frontier.push(graph.root());
  seen[graph.root()] = true;
  while (!frontier.empty()) {
    const std::size_t v = frontier.front();
    frontier.pop();
    for (std::size_t u : graph.undirected_neighbors(v)) {
      if (parents[v] && *parents[v] == u) continue;
      if (seen[u]) {
        throw StructuralError("not a tree: cycle through nodes " + std::to_string(v) + " and " +
                              std::to_string(u));
      }
      seen[u] = true;
      parents[u] = v;
      frontier.push(u);
    }
  }
  std::string unreachable;
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) unreachable += (unreachable.empty() ? "" : ",") + std::to_string(i);
  }
  if (!unreachable.empty()) {
    throw StructuralError("not a tree: nodes {" + unreachable + "} are disconnected from root " +
                          std::to_string(graph.root()));
  }
  return parents;
}

std::vector<std::vector<std::size_t>> children_of(const ParentArray& parents) {
  std::vector<std::vector<std::size_t>> children(parents.size());
  for (std::size_t i = 0; i < parents.size(); ++i) {
    if (parents[i]) children[*parents[i]].push_back(i);
  }
  return children;
}

std::size_t max_fan_out(const ParentArray& parents) {
  std::size_t best = 0;
  for (const auto& c : children_of(parents)) best = std::max(best, c.size());
  return best;
}

AdjacencyMatrix adjacency(const MorphGraph& graph) {
  AdjacencyMatrix adj{graph.node_count(), std::vector<std::uint8_t>(graph.node_count() * graph.node_count(), 0)};
  for (const Edge& e : graph.edges()) adj.entries[e.from * adj.n + e.to] = 1;
  return adj;
}

MorphGraph parse_graph(std::istream& in) {
  std::optional<std::size_t> nodes;
  std::size_t root = 0;
  std::vector<std::pair<std::size_t, std::string>> types;
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    auto read_index = [&](const char* what) {
      long long v = -1;
      if (!(ls >> v) || v < 0) throw ParseError(std::string("expected ") + what, lineno);
      return static_cast<std::size_t>(v);
    };
    if (key == "nodes") {
      nodes = read_index("node count");
    } else if (key == "root") {
      root = read_index("root index");
    } else if (key == "type") {
      std::size_t i = read_index("node index");
      std::string name;
      if (!(ls >> name)) throw ParseError("expected type name", lineno);
      types.emplace_back(i, name);
    } else if (key == "edge") {
      std::size_t a = read_index("edge source");
      std::size_t b = read_index("edge target");
      edges.push_back({a, b});
    } else {
      throw ParseError("unknown directive '" + key + "'", lineno);
    }
    std::string extra;
    if (ls >> extra) throw ParseError("trailing token '" + extra + "'", lineno);
  }
  if (!nodes) throw ParseError("missing 'nodes' directive");
  std::vector<std::string> names(*nodes, "link");
  if (root < *nodes) names[root] = "torso";
  for (auto& [i, name] : types) {
    if (i >= *nodes) throw ParseError("type index " + std::to_string(i) + " out of range");
    names[i] = name;
  }
  try {
    return MorphGraph(*nodes, std::move(names), std::move(edges), root);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
}

MorphGraph load_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file " + path.string());
  return parse_graph(in);
}

void write_graph(std::ostream& out, const MorphGraph& graph) {
  out << "nodes " << graph.node_count() << "\n";
  out << "root " << graph.root() << "\n";
  for (std::size_t i = 0; i < graph.node_count(); ++i) out << "type " << i << " " << graph.node_types()[i] << "\n";
  for (const Edge& e : graph.edges()) out << "edge " << e.from << " " << e.to << "\n";
}

}  // namespace amorph
