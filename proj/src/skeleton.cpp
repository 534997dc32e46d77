#include "hgfrenet/skeleton.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hgfrenet/error.hpp"

namespace hgf::skeleton {

namespace {

JointPair ordered(JointPair p) { return p.first < p.second ? p : JointPair{p.second, p.first}; }

std::string pair_str(const JointPair& p) {
  return "(" + std::to_string(p.first) + "," + std::to_string(p.second) + ")";
}

void check_pairs(const std::vector<JointPair>& pairs, std::size_t n, const char* what) {
  std::set<JointPair> seen;
  for (const auto& p : pairs) {
    if (p.first >= n || p.second >= n) {
      throw StructuralError(std::string(what) + " " + pair_str(p) + " references a joint outside [0," +
                            std::to_string(n) + ")");
    }
    if (p.first == p.second) throw StructuralError(std::string(what) + " " + pair_str(p) + " is a self-loop");
    if (!seen.insert(ordered(p)).second) {
      throw StructuralError(std::string("duplicate ") + what + " " + pair_str(p));
    }
  }
}

std::vector<std::vector<std::size_t>> neighbours(const SkeletonGraph& g) {
  std::vector<std::vector<std::size_t>> adj(g.joint_count);
  for (const auto& [a, b] : g.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

}  // namespace

void validate(const SkeletonGraph& graph) {
  const std::size_t n = graph.joint_count;
  if (n == 0) throw StructuralError("skeleton has no joints");
  if (graph.root >= n) throw StructuralError("root joint " + std::to_string(graph.root) + " out of range");
  if (!graph.joint_names.empty() && graph.joint_names.size() != n) {
    throw StructuralError("joint_names has " + std::to_string(graph.joint_names.size()) +
                          " entries for " + std::to_string(n) + " joints");
  }
  check_pairs(graph.edges, n, "edge");
  check_pairs(graph.symmetric_pairs, n, "symmetric pair");
  std::set<JointPair> edge_set;
  for (const auto& e : graph.edges) edge_set.insert(ordered(e));
  for (const auto& p : graph.symmetric_pairs) {
    if (edge_set.count(ordered(p))) {
      throw StructuralError("symmetric pair " + pair_str(p) + " is also a bone edge");
    }
  }
  if (graph.edges.size() != n - 1) {
    throw StructuralError("a kinematic tree over " + std::to_string(n) + " joints needs " +
                          std::to_string(n - 1) + " edges, got " + std::to_string(graph.edges.size()));
  }
  (void)shortest_path_hops(graph);  // throws when disconnected
}

SkeletonGraph h36m_skeleton() {
  SkeletonGraph g;
  g.joint_count = 17;
  g.joint_names = {"pelvis",     "r_hip",      "r_knee",  "r_ankle",   "l_hip",    "l_knee",
                   "l_ankle",    "spine",      "thorax",  "neck",      "head",     "l_shoulder",
                   "l_elbow",    "l_wrist",    "r_shoulder", "r_elbow", "r_wrist"};
  g.edges = {{0, 1},  {1, 2},  {2, 3},  {0, 4},   {4, 5},   {5, 6},   {0, 7},   {7, 8},
             {8, 9},  {9, 10}, {8, 11}, {11, 12}, {12, 13}, {8, 14},  {14, 15}, {15, 16}};
  g.symmetric_pairs = {{1, 4}, {2, 5}, {3, 6}, {11, 14}, {12, 15}, {13, 16}};
  g.root = 0;
  return g;
}

SkeletonGraph skeleton_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("skeleton JSON: ") + e.what());
  }
  SkeletonGraph g;
  try {
    g.joint_names = j.at("joints").get<std::vector<std::string>>();
    g.joint_count = g.joint_names.size();
    for (const auto& e : j.at("edges")) g.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    if (j.contains("symmetric_pairs")) {
      for (const auto& e : j.at("symmetric_pairs")) {
        g.symmetric_pairs.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
      }
    }
    g.root = j.value("root", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("skeleton JSON: ") + e.what());
  }
  validate(g);
  return g;
}

SkeletonGraph load_skeleton(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open skeleton file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return skeleton_from_json_text(ss.str());
}

std::string skeleton_to_json_text(const SkeletonGraph& graph) {
  nlohmann::json j;
  std::vector<std::string> names = graph.joint_names;
  if (names.empty()) {
    for (std::size_t i = 0; i < graph.joint_count; ++i) names.push_back("j" + std::to_string(i));
  }
  j["joints"] = names;
  j["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : graph.edges) j["edges"].push_back({a, b});
  j["symmetric_pairs"] = nlohmann::json::array();
  for (const auto& [a, b] : graph.symmetric_pairs) j["symmetric_pairs"].push_back({a, b});
  j["root"] = graph.root;
  return j.dump(2);
}

int HopMatrix::diameter() const { return *std::max_element(values_.begin(), values_.end()); }

HopMatrix shortest_path_hops(const SkeletonGraph& graph) {
  const std::size_t n = graph.joint_count;
  check_pairs(graph.edges, n, "edge");
  const auto adj = neighbours(graph);
  std::vector<int> dist(n * n, -1);
  for (std::size_t s = 0; s < n; ++s) {
    int* row = dist.data() + s * n;
    std::queue<std::size_t> q;
    row[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (auto v : adj[u]) {
        if (row[v] < 0) {
          row[v] = row[u] + 1;
          q.push(v);
        }
      }
    }
    std::vector<std::size_t> unreachable;
    for (std::size_t v = 0; v < n; ++v) {
      if (row[v] < 0) unreachable.push_back(v);
    }
    if (!unreachable.empty()) {
      std::string list;
      for (auto v : unreachable) list += (list.empty() ? "" : ",") + std::to_string(v);
      throw StructuralError("skeleton is disconnected: joints {" + list +
                            "} are unreachable from joint " + std::to_string(s));
    }
  }
  return HopMatrix(n, std::move(dist));
}

Tensor khop_adjacency(const HopMatrix& hops, int k) {
  if (k < 1) throw ConfigError("k-hop adjacency needs k >= 1, got " + std::to_string(k));
  const std::size_t n = hops.size();
  Tensor a(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = hops(i, j) == k ? 1.0 : 0.0;
  }
  return a;
}

Tensor symmetric_matrix(const SkeletonGraph& graph) {
  const std::size_t n = graph.joint_count;
  check_pairs(graph.symmetric_pairs, n, "symmetric pair");
  Tensor a(Shape{n, n});
  for (const auto& [i, j] : graph.symmetric_pairs) {
    a[i * n + j] = 1.0;
    a[j * n + i] = 1.0;
  }
  return a;
}

Tensor hybrid_skeleton_matrix(const SkeletonGraph& graph, int hops,
                              const std::vector<double>& hop_weights) {
  if (hops < 1) throw ConfigError("hop count K must be >= 1, got " + std::to_string(hops));
  if (hop_weights.size() != static_cast<std::size_t>(hops)) {
    throw ConfigError("expected " + std::to_string(hops) + " hop weights, got " +
                      std::to_string(hop_weights.size()));
  }
  for (double w : hop_weights) {
    if (!(w > 0.0 && w <= 1.0)) throw ConfigError("hop weights must lie in (0, 1]");
  }
  const HopMatrix d = shortest_path_hops(graph);
  const std::size_t n = graph.joint_count;
  Tensor out(Shape{n, n});
  for (int k = 1; k <= hops; ++k) {
    const Tensor ak = khop_adjacency(d, k);
    const double w = hop_weights[static_cast<std::size_t>(k - 1)];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * ak[i];
  }
  const double sym_weight = hop_weights.back() / 2.0;
  const Tensor sym = symmetric_matrix(graph);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sym_weight * sym[i];
  return out;
}

HybridAdjacency make_hybrid_adjacency(const SkeletonGraph& graph, int hops,
                                      const std::vector<double>& hop_weights,
                                      bool row_normalize) {
  HybridAdjacency h;
  h.skeletal = hybrid_skeleton_matrix(graph, hops, hop_weights);
  h.hop_weights = hop_weights;
  h.sym_weight = hop_weights.back() / 2.0;
  if (row_normalize) {
    const std::size_t n = graph.joint_count;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += h.skeletal[i * n + j];
      if (s > 0.0) {
        for (std::size_t j = 0; j < n; ++j) h.skeletal[i * n + j] /= s;
      }
    }
  }
  return h;
}

SkeletonGraph permute_joints(const SkeletonGraph& graph, const std::vector<std::size_t>& perm) {
  if (perm.size() != graph.joint_count) throw ConfigError("permutation size does not match joint count");
  SkeletonGraph g;
  g.joint_count = graph.joint_count;
  for (const auto& [a, b] : graph.edges) g.edges.emplace_back(perm[a], perm[b]);
  for (const auto& [a, b] : graph.symmetric_pairs) g.symmetric_pairs.emplace_back(perm[a], perm[b]);
  if (!graph.joint_names.empty()) {
    g.joint_names.resize(graph.joint_count);
    for (std::size_t i = 0; i < graph.joint_count; ++i) g.joint_names[perm[i]] = graph.joint_names[i];
  }
  g.root = perm[graph.root];
  return g;
}

}  // namespace hgf::skeleton
