#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emkrylov {

/// Physical constants and process parameters shared by every segment of a
/// tree. SI units throughout.
struct MaterialParams {
  double diffusivity_base = 1.0e-15;       // D_a, m^2/s
  double bulk_modulus = 1.0e11;            // B, Pa
  double atomic_volume = 1.18e-29;         // Omega, m^3
  double boltzmann = 1.380649e-23;         // k_B, J/K
  double temperature = 373.0;              // T, K
  double electron_charge = 1.602176634e-19;  // e, C
  double resistivity_cu = 2.25e-8;         // rho, Ohm m
  double effective_charge = 1.0;           // Z*
  double resistivity_ta = 2.0e-6;          // rho_Ta, Ohm m
  double barrier_thickness = 5.0e-9;       // h_Ta, m
  double void_thickness = 1.0e-9;          // delta, m
  double critical_stress = 1.0e8;          // sigma_crit, Pa
  // V_crit in m^3; when unset the voided segment's W^2 H is used.
  std::optional<double> critical_void_volume;

  /// Throws ParameterError if any value is nonpositive or non-finite.
  void validate() const;

  /// Names accepted by `param` lines, in canonical serialization order.
  static std::span<const std::string_view> names();
  /// Returns false for an unknown name.
  bool set(std::string_view name, double value);
  std::optional<double> get(std::string_view name) const;

  bool operator==(const MaterialParams&) const = default;
};

enum class NodeKind { terminal, interior, junction };

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> node_kind_from_string(std::string_view text);
/// Kind implied by the number of incident segments.
NodeKind node_kind_for_degree(std::size_t degree);

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct TreeNode {
  int id = 0;
  Point position;
  NodeKind kind = NodeKind::terminal;
  bool operator==(const TreeNode&) const = default;
};

/// One straight wire piece. Current density is signed along node_a -> node_b.
struct Segment {
  int id = 0;
  int node_a = 0;
  int node_b = 0;
  double length = 0.0;           // m
  double width = 0.0;            // m
  double height = 0.0;           // m
  double current_density = 0.0;  // A/m^2
  bool operator==(const Segment&) const = default;
};

/// Validated, immutable interconnect tree. Construction enforces dense ids,
/// positive geometry, node kinds consistent with degree, and that the graph
/// is a connected tree.
class InterconnectTree {
 public:
  InterconnectTree(std::vector<TreeNode> nodes, std::vector<Segment> segments,
                   MaterialParams materials = {});

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  const MaterialParams& materials() const noexcept { return materials_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t segment_count() const noexcept { return segments_.size(); }

  /// Segment ids incident to `node`, ascending.
  std::span<const int> incident(int node) const;

  /// Non-fatal diagnostics gathered during validation.
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  /// Copy with a different material set (re-validated).
  InterconnectTree with_materials(const MaterialParams& materials) const;

  bool operator==(const InterconnectTree& other) const {
    return nodes_ == other.nodes_ && segments_ == other.segments_ &&
           materials_ == other.materials_;
  }

 private:
  std::vector<TreeNode> nodes_;
  std::vector<Segment> segments_;
  MaterialParams materials_;
  std::vector<std::size_t> incident_offsets_;
  std::vector<int> incident_;
  std::vector<std::string> warnings_;
};

struct TreeStats {
  double l_avg = 0.0;  // mean segment length, m
  double l_max = 0.0;  // weighted diameter, m
  std::size_t n_segments = 0;
  std::size_t n_nodes = 0;
};

/// Weighted diameter via two farthest-node sweeps.
TreeStats tree_stats(const InterconnectTree& tree);

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct GeneratorRanges {
  Range length{10e-6, 100e-6};
  Range width{0.1e-6, 1.0e-6};
  Range height{0.2e-6, 0.2e-6};
  // Interpreted as a magnitude range when random_sign is set.
  Range current_density{1e9, 5e10};
  bool random_sign = true;

  void validate() const;
};

enum class Topology {
  random,  // each new segment hangs off a uniformly chosen existing node
  chain,   // straight multi-segment wire
};

InterconnectTree generate_synthetic_tree(std::size_t n_segments,
                                         std::uint64_t seed,
                                         const GeneratorRanges& ranges = {},
                                         Topology topology = Topology::random,
                                         const MaterialParams& materials = {});

/// Parses the `emtree v1` text format. Throws ParseError on malformed lines
/// and SemanticError when the described graph is not a valid tree.
InterconnectTree parse_tree(std::string_view text);

/// Canonical text form: header, every material parameter, nodes by id,
/// segments by id, floats with 17 significant digits.
std::string serialize_tree(const InterconnectTree& tree);

InterconnectTree read_tree_file(const std::string& path);
void write_tree_file(const InterconnectTree& tree, const std::string& path);

/// Shortest round-trip-exact decimal form ("%.17g").
std::string format_double(double value);

}  // namespace emkrylov
