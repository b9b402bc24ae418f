#include "emkrylov/tree.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "emkrylov/error.hpp"
#include "emkrylov/random.hpp"

namespace emkrylov {

namespace {

constexpr std::array<std::string_view, 13> kParamNames = {
    "diffusivity_base", "bulk_modulus",      "atomic_volume",
    "boltzmann",        "temperature",       "electron_charge",
    "resistivity_cu",   "effective_charge",  "resistivity_ta",
    "barrier_thickness", "void_thickness",   "critical_stress",
    "critical_void_volume",
};

double* param_slot(MaterialParams& m, std::string_view name) {
  if (name == "diffusivity_base") return &m.diffusivity_base;
  if (name == "bulk_modulus") return &m.bulk_modulus;
  if (name == "atomic_volume") return &m.atomic_volume;
  if (name == "boltzmann") return &m.boltzmann;
  if (name == "temperature") return &m.temperature;
  if (name == "electron_charge") return &m.electron_charge;
  if (name == "resistivity_cu") return &m.resistivity_cu;
  if (name == "effective_charge") return &m.effective_charge;
  if (name == "resistivity_ta") return &m.resistivity_ta;
  if (name == "barrier_thickness") return &m.barrier_thickness;
  if (name == "void_thickness") return &m.void_thickness;
  if (name == "critical_stress") return &m.critical_stress;
  return nullptr;
}

// Disjoint-set forest used for cycle and connectivity checks.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

void MaterialParams::validate() const {
  for (std::string_view name : kParamNames) {
    const auto value = get(name);
    if (!value) continue;  // only critical_void_volume may be absent
    if (!std::isfinite(*value) || *value <= 0.0) {
      throw ParameterError("material parameter '" + std::string(name) +
                           "' must be finite and positive");
    }
  }
}

std::span<const std::string_view> MaterialParams::names() { return kParamNames; }

bool MaterialParams::set(std::string_view name, double value) {
  if (name == "critical_void_volume") {
    critical_void_volume = value;
    return true;
  }
  double* slot = param_slot(*this, name);
  if (slot == nullptr) return false;
  *slot = value;
  return true;
}

std::optional<double> MaterialParams::get(std::string_view name) const {
  if (name == "critical_void_volume") return critical_void_volume;
  double* slot = param_slot(const_cast<MaterialParams&>(*this), name);
  if (slot == nullptr) return std::nullopt;
  return *slot;
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::terminal: return "terminal";
    case NodeKind::interior: return "interior";
    case NodeKind::junction: return "junction";
  }
  return "terminal";
}

std::optional<NodeKind> node_kind_from_string(std::string_view text) {
  if (text == "terminal") return NodeKind::terminal;
  if (text == "interior") return NodeKind::interior;
  if (text == "junction") return NodeKind::junction;
  return std::nullopt;
}

NodeKind node_kind_for_degree(std::size_t degree) {
  if (degree <= 1) return NodeKind::terminal;
  if (degree == 2) return NodeKind::interior;
  return NodeKind::junction;
}

InterconnectTree::InterconnectTree(std::vector<TreeNode> nodes,
                                   std::vector<Segment> segments,
                                   MaterialParams materials)
    : nodes_(std::move(nodes)),
      segments_(std::move(segments)),
      materials_(std::move(materials)) {
  materials_.validate();
  if (segments_.empty()) throw SemanticError("tree has no segments");

  std::sort(nodes_.begin(), nodes_.end(),
            [](const TreeNode& a, const TreeNode& b) { return a.id < b.id; });
  std::sort(segments_.begin(), segments_.end(),
            [](const Segment& a, const Segment& b) { return a.id < b.id; });

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (i > 0 && nodes_[i].id == nodes_[i - 1].id) {
      throw SemanticError("duplicate node id " + std::to_string(nodes_[i].id));
    }
    if (nodes_[i].id != static_cast<int>(i)) {
      throw SemanticError("node ids must be dense from 0; missing id " +
                          std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i > 0 && segments_[i].id == segments_[i - 1].id) {
      throw SemanticError("duplicate segment id " +
                          std::to_string(segments_[i].id));
    }
    if (segments_[i].id != static_cast<int>(i)) {
      throw SemanticError("segment ids must be dense from 0; missing id " +
                          std::to_string(i));
    }
  }

  const auto n_nodes = static_cast<int>(nodes_.size());
  std::vector<std::size_t> degree(nodes_.size(), 0);
  UnionFind components(nodes_.size());
  double min_length = INFINITY;
  for (const Segment& s : segments_) {
    const std::string tag = "segment " + std::to_string(s.id);
    if (s.node_a < 0 || s.node_a >= n_nodes) {
      throw SemanticError(tag + " references dangling node id " +
                          std::to_string(s.node_a));
    }
    if (s.node_b < 0 || s.node_b >= n_nodes) {
      throw SemanticError(tag + " references dangling node id " +
                          std::to_string(s.node_b));
    }
    if (s.node_a == s.node_b) throw SemanticError(tag + " is a self-loop");
    for (double g : {s.length, s.width, s.height}) {
      if (!std::isfinite(g) || g <= 0.0) {
        throw SemanticError(tag + " has nonpositive geometry");
      }
    }
    if (!std::isfinite(s.current_density)) {
      throw SemanticError(tag + " has non-finite current density");
    }
    const Point& pa = nodes_[static_cast<std::size_t>(s.node_a)].position;
    const Point& pb = nodes_[static_cast<std::size_t>(s.node_b)].position;
    if (std::abs(std::hypot(pb.x - pa.x, pb.y - pa.y) - s.length) > 1e-9) {
      throw SemanticError(tag + " length disagrees with node positions");
    }
    if (!components.unite(static_cast<std::size_t>(s.node_a),
                          static_cast<std::size_t>(s.node_b))) {
      throw SemanticError(tag + " closes a cycle");
    }
    ++degree[static_cast<std::size_t>(s.node_a)];
    ++degree[static_cast<std::size_t>(s.node_b)];
    min_length = std::min(min_length, s.length);
  }
  if (segments_.size() + 1 != nodes_.size()) {
    throw SemanticError("graph is disconnected (" +
                        std::to_string(nodes_.size()) + " nodes, " +
                        std::to_string(segments_.size()) + " segments)");
  }

  for (const TreeNode& node : nodes_) {
    const std::size_t d = degree[static_cast<std::size_t>(node.id)];
    if (node.kind != node_kind_for_degree(d)) {
      throw SemanticError("node " + std::to_string(node.id) + " declared " +
                          std::string(to_string(node.kind)) + " but has degree " +
                          std::to_string(d));
    }
  }

  incident_offsets_.assign(nodes_.size() + 1, 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    incident_offsets_[i + 1] = incident_offsets_[i] + degree[i];
  }
  incident_.assign(incident_offsets_.back(), 0);
  std::vector<std::size_t> fill(incident_offsets_.begin(),
                                incident_offsets_.end() - 1);
  for (const Segment& s : segments_) {
    incident_[fill[static_cast<std::size_t>(s.node_a)]++] = s.id;
    incident_[fill[static_cast<std::size_t>(s.node_b)]++] = s.id;
  }

  if (materials_.void_thickness > min_length / 100.0) {
    warnings_.push_back(
        "void thickness exceeds 1% of the shortest segment length");
  }
}

std::span<const int> InterconnectTree::incident(int node) const {
  const auto i = static_cast<std::size_t>(node);
  return {incident_.data() + incident_offsets_[i],
          incident_offsets_[i + 1] - incident_offsets_[i]};
}

InterconnectTree InterconnectTree::with_materials(
    const MaterialParams& materials) const {
  return InterconnectTree(nodes_, segments_, materials);
}

TreeStats tree_stats(const InterconnectTree& tree) {
  TreeStats stats;
  stats.n_nodes = tree.node_count();
  stats.n_segments = tree.segment_count();
  double total = 0.0;
  for (const Segment& s : tree.segments()) total += s.length;
  stats.l_avg = total / static_cast<double>(stats.n_segments);

  // Distances from `root` by iterative DFS; returns the farthest node.
  std::vector<double> dist(tree.node_count());
  auto sweep = [&](int root) {
    std::fill(dist.begin(), dist.end(), -1.0);
    std::vector<int> stack{root};
    dist[static_cast<std::size_t>(root)] = 0.0;
    int far = root;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      if (dist[static_cast<std::size_t>(u)] > dist[static_cast<std::size_t>(far)]) far = u;
      for (int sid : tree.incident(u)) {
        const Segment& s = tree.segments()[static_cast<std::size_t>(sid)];
        const int v = s.node_a == u ? s.node_b : s.node_a;
        if (dist[static_cast<std::size_t>(v)] >= 0.0) continue;
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + s.length;
        stack.push_back(v);
      }
    }
    return far;
  };
  const int end_a = sweep(0);
  const int end_b = sweep(end_a);
  stats.l_max = dist[static_cast<std::size_t>(end_b)];
  return stats;
}

void GeneratorRanges::validate() const {
  auto check = [](const Range& r, std::string_view name, bool allow_negative) {
    if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.min > r.max) {
      throw ParameterError("invalid " + std::string(name) + " range");
    }
    if (!allow_negative && r.min <= 0.0) {
      throw ParameterError(std::string(name) + " range must be positive");
    }
  };
  check(length, "length", false);
  check(width, "width", false);
  check(height, "height", false);
  check(current_density, "current density", !random_sign);
  if (random_sign && current_density.min < 0.0) {
    throw ParameterError("current density magnitude range must be nonnegative");
  }
}

InterconnectTree generate_synthetic_tree(std::size_t n_segments,
                                         std::uint64_t seed,
                                         const GeneratorRanges& ranges,
                                         Topology topology,
                                         const MaterialParams& materials) {
  if (n_segments == 0) throw ParameterError("n_segments must be at least 1");
  ranges.validate();

  PortableRng rng(seed);
  std::vector<TreeNode> nodes(n_segments + 1);
  std::vector<Segment> segments(n_segments);
  std::vector<std::size_t> degree(n_segments + 1, 0);
  nodes[0].id = 0;

  for (std::size_t i = 0; i < n_segments; ++i) {
    const std::size_t parent =
        topology == Topology::chain ? i : static_cast<std::size_t>(rng.below(i + 1));
    Segment& s = segments[i];
    s.id = static_cast<int>(i);
    s.node_a = static_cast<int>(parent);
    s.node_b = static_cast<int>(i + 1);
    s.length = rng.uniform(ranges.length.min, ranges.length.max);
    s.width = rng.uniform(ranges.width.min, ranges.width.max);
    s.height = rng.uniform(ranges.height.min, ranges.height.max);
    double j = rng.uniform(ranges.current_density.min, ranges.current_density.max);
    if (ranges.random_sign && rng.coin()) j = -j;
    s.current_density = j;

    const double angle = topology == Topology::chain
                             ? 0.0
                             : rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Point& p = nodes[parent].position;
    TreeNode& child = nodes[i + 1];
    child.id = static_cast<int>(i + 1);
    child.position = {p.x + s.length * std::cos(angle),
                      p.y + s.length * std::sin(angle)};
    // Store the length implied by the rounded positions so the file-level
    // consistency check always holds.
    s.length = std::hypot(child.position.x - p.x, child.position.y - p.y);
    ++degree[parent];
    ++degree[i + 1];
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes[i].kind = node_kind_for_degree(degree[i]);
  }
  return InterconnectTree(std::move(nodes), std::move(segments), materials);
}

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

namespace {

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size() || line[i] == '#') break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' &&
           line[i] != '#') {
      ++i;
    }
    tokens.push_back({line.substr(start, i - start), start + 1});
  }
  return tokens;
}

double parse_number(const Token& token, std::size_t line) {
  double value = 0.0;
  const char* first = token.text.data();
  const char* last = first + token.text.size();
  if (!token.text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(line, token.column,
                     "expected a number, got '" + std::string(token.text) + "'");
  }
  return value;
}

int parse_id(const Token& token, std::size_t line) {
  int value = 0;
  const char* first = token.text.data();
  const char* last = first + token.text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(line, token.column,
                     "expected an integer id, got '" + std::string(token.text) + "'");
  }
  return value;
}

}  // namespace

InterconnectTree parse_tree(std::string_view text) {
  std::vector<TreeNode> nodes;
  std::vector<Segment> segments;
  MaterialParams materials;
  std::vector<int> seen_nodes;
  std::vector<int> seen_segments;
  bool header_seen = false;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const std::vector<Token> tokens = tokenize(line);
    if (tokens.empty()) {
      if (eol == text.size()) break;
      continue;
    }
    const std::string_view keyword = tokens[0].text;
    auto expect_count = [&](std::size_t count) {
      if (tokens.size() != count) {
        const std::size_t column =
            tokens.size() > count ? tokens[count].column : line.size() + 1;
        throw ParseError(line_no, column,
                         "'" + std::string(keyword) + "' expects " +
                             std::to_string(count - 1) + " fields");
      }
    };

    if (!header_seen) {
      if (keyword != "emtree" || tokens.size() != 2 || tokens[1].text != "v1") {
        throw ParseError(line_no, tokens[0].column, "expected header 'emtree v1'");
      }
      header_seen = true;
    } else if (keyword == "node") {
      expect_count(5);
      TreeNode node;
      node.id = parse_id(tokens[1], line_no);
      node.position = {parse_number(tokens[2], line_no), parse_number(tokens[3], line_no)};
      const auto kind = node_kind_from_string(tokens[4].text);
      if (!kind) {
        throw ParseError(line_no, tokens[4].column,
                         "unknown node kind '" + std::string(tokens[4].text) + "'");
      }
      node.kind = *kind;
      if (std::find(seen_nodes.begin(), seen_nodes.end(), node.id) != seen_nodes.end()) {
        throw SemanticError("duplicate node id " + std::to_string(node.id));
      }
      seen_nodes.push_back(node.id);
      nodes.push_back(node);
    } else if (keyword == "seg") {
      expect_count(8);
      Segment s;
      s.id = parse_id(tokens[1], line_no);
      s.node_a = parse_id(tokens[2], line_no);
      s.node_b = parse_id(tokens[3], line_no);
      s.length = parse_number(tokens[4], line_no);
      s.width = parse_number(tokens[5], line_no);
      s.height = parse_number(tokens[6], line_no);
      s.current_density = parse_number(tokens[7], line_no);
      if (std::find(seen_segments.begin(), seen_segments.end(), s.id) !=
          seen_segments.end()) {
        throw SemanticError("duplicate segment id " + std::to_string(s.id));
      }
      seen_segments.push_back(s.id);
      segments.push_back(s);
    } else if (keyword == "param") {
      expect_count(3);
      const double value = parse_number(tokens[2], line_no);
      if (!materials.set(tokens[1].text, value)) {
        throw ParseError(line_no, tokens[1].column,
                         "unknown parameter '" + std::string(tokens[1].text) + "'");
      }
    } else {
      throw ParseError(line_no, tokens[0].column,
                       "unknown record '" + std::string(keyword) + "'");
    }
    if (eol == text.size()) break;
  }
  if (!header_seen) throw ParseError(1, 1, "missing header 'emtree v1'");
  return InterconnectTree(std::move(nodes), std::move(segments), materials);
}

std::string serialize_tree(const InterconnectTree& tree) {
  std::string out = "emtree v1\n";
  const MaterialParams& m = tree.materials();
  for (std::string_view name : MaterialParams::names()) {
    const auto value = m.get(name);
    if (!value) continue;
    out += "param ";
    out += name;
    out += ' ';
    out += format_double(*value);
    out += '\n';
  }
  for (const TreeNode& n : tree.nodes()) {
    out += "node " + std::to_string(n.id) + ' ' + format_double(n.position.x) + ' ' +
           format_double(n.position.y) + ' ' + std::string(to_string(n.kind)) + '\n';
  }
  for (const Segment& s : tree.segments()) {
    out += "seg " + std::to_string(s.id) + ' ' + std::to_string(s.node_a) + ' ' +
           std::to_string(s.node_b) + ' ' + format_double(s.length) + ' ' +
           format_double(s.width) + ' ' + format_double(s.height) + ' ' +
           format_double(s.current_density) + '\n';
  }
  return out;
}

InterconnectTree read_tree_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open tree file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_tree(buffer.str());
}

void write_tree_file(const InterconnectTree& tree, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write tree file '" + path + "'");
  out << serialize_tree(tree);
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace emkrylov
