#include "emkrylov/discretization.hpp"

#include <cmath>
#include <ostream>

#include "emkrylov/error.hpp"
#include "emkrylov/linalg.hpp"

namespace emkrylov {

double diffusivity(const Segment& /*segment*/, const MaterialParams& mat) {
  return mat.diffusivity_base * mat.bulk_modulus * mat.atomic_volume /
         (mat.boltzmann * mat.temperature);
}

double drive_force(const Segment& segment, const MaterialParams& mat) {
  return mat.electron_charge * mat.resistivity_cu * segment.current_density *
         mat.effective_charge / mat.atomic_volume;
}

LtiSystem assemble_nucleation(const InterconnectTree& tree, int points_per_segment) {
  if (points_per_segment < 2) {
    throw ParameterError("each segment needs at least 2 grid points");
  }
  const MaterialParams& mat = tree.materials();
  const auto& segments = tree.segments();
  const std::size_t n_nodes = tree.node_count();
  const auto interior_per_segment = static_cast<std::size_t>(points_per_segment - 2);
  const std::size_t n = n_nodes + segments.size() * interior_per_segment;

  LtiSystem sys;
  sys.n_tree_nodes = n_nodes;
  sys.phase = Phase::nucleation;
  sys.singular = true;
  sys.node_map.resize(n);
  sys.dx.resize(segments.size());
  sys.kappa.resize(segments.size());
  sys.area.resize(segments.size());
  sys.segment_points.resize(segments.size());
  sys.control_volume = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  sys.u.resize(static_cast<Eigen::Index>(segments.size()));
  sys.x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));

  for (std::size_t v = 0; v < n_nodes; ++v) {
    const int sid = tree.incident(static_cast<int>(v)).front();
    const Segment& s = segments[static_cast<std::size_t>(sid)];
    sys.node_map[v] = {sid, s.node_a == static_cast<int>(v) ? 0.0 : s.length,
                       static_cast<int>(v)};
  }

  // Grid indices and control volumes first; the stencil needs the volumes.
  std::size_t next = n_nodes;
  for (const Segment& s : segments) {
    const auto e = static_cast<std::size_t>(s.id);
    const double dx = s.length / static_cast<double>(points_per_segment - 1);
    const double area = s.width * s.height;
    sys.dx[e] = dx;
    sys.kappa[e] = diffusivity(s, mat);
    sys.area[e] = area;
    sys.u[static_cast<Eigen::Index>(e)] = drive_force(s, mat);
    auto& pts = sys.segment_points[e];
    pts.reserve(static_cast<std::size_t>(points_per_segment));
    pts.push_back(s.node_a);
    for (std::size_t j = 1; j + 1 < static_cast<std::size_t>(points_per_segment); ++j) {
      sys.node_map[next] = {s.id, dx * static_cast<double>(j), -1};
      sys.control_volume[static_cast<Eigen::Index>(next)] = area * dx;
      pts.push_back(static_cast<int>(next++));
    }
    pts.push_back(s.node_b);
    sys.control_volume[s.node_a] += 0.5 * area * dx;
    sys.control_volume[s.node_b] += 0.5 * area * dx;
  }

  // Finite-volume form of the second-order stencil. Each face between
  // neighbouring points carries conductance area*kappa/dx; dividing by the
  // control volume gives kappa/dx^2 inside a segment and the ghost-node
  // eliminated boundary and junction rows at tree nodes.
  std::vector<Eigen::Triplet<double>> a_entries;
  std::vector<Eigen::Triplet<double>> b_entries;
  a_entries.reserve(4 * n);
  b_entries.reserve(2 * segments.size());
  const auto& vol = sys.control_volume;
  for (const Segment& s : segments) {
    const auto e = static_cast<std::size_t>(s.id);
    const double conductance = s.width * s.height * sys.kappa[e] / sys.dx[e];
    const auto& pts = sys.segment_points[e];
    for (std::size_t j = 0; j + 1 < pts.size(); ++j) {
      const int p = pts[j];
      const int q = pts[j + 1];
      a_entries.emplace_back(p, p, -conductance / vol[p]);
      a_entries.emplace_back(p, q, conductance / vol[p]);
      a_entries.emplace_back(q, q, -conductance / vol[q]);
      a_entries.emplace_back(q, p, conductance / vol[q]);
    }
    // Drive force enters through the end faces: +flux at node_a, - at node_b.
    const double drive = s.width * s.height * sys.kappa[e];
    b_entries.emplace_back(s.node_a, s.id, drive / vol[s.node_a]);
    b_entries.emplace_back(s.node_b, s.id, -drive / vol[s.node_b]);
  }

  const auto n_index = static_cast<Eigen::Index>(n);
  sys.A.resize(n_index, n_index);
  sys.A.setFromTriplets(a_entries.begin(), a_entries.end());
  sys.A.makeCompressed();
  sys.B.resize(n_index, static_cast<Eigen::Index>(segments.size()));
  sys.B.setFromTriplets(b_entries.begin(), b_entries.end());
  sys.B.makeCompressed();
  sys.plan = analyze_pattern(sys.A);
  return sys;
}

int voided_segment(const LtiSystem& sys, int index) {
  const GridPoint& gp = sys.node_map[static_cast<std::size_t>(index)];
  if (gp.tree_node < 0) return gp.segment;
  int best = -1;
  double best_drive = -1.0;
  for (std::size_t e = 0; e < sys.segment_points.size(); ++e) {
    const auto& pts = sys.segment_points[e];
    if (pts.front() != index && pts.back() != index) continue;
    const double drive = std::abs(sys.u[static_cast<Eigen::Index>(e)]);
    if (drive > best_drive) {
      best_drive = drive;
      best = static_cast<int>(e);
    }
  }
  return best;
}

LtiSystem assemble_postvoid(const LtiSystem& base, int void_index,
                            const MaterialParams& mat,
                            const Eigen::VectorXd& stress_at_tnuc) {
  if (base.phase != Phase::nucleation) {
    throw ParameterError("post-void assembly needs a nucleation-phase system");
  }
  if (void_index < 0 || void_index >= base.size()) {
    throw ParameterError("void grid index " + std::to_string(void_index) +
                         " is out of range");
  }
  if (stress_at_tnuc.size() != base.size()) {
    throw ParameterError("initial stress vector has the wrong length");
  }

  LtiSystem sys = base;
  sys.phase = Phase::post_void;
  sys.singular = false;
  sys.void_index = void_index;
  sys.x0 = stress_at_tnuc;

  // Ghost-node elimination of d(sigma)/dx = sigma/delta at the void surface:
  // the surface flux area*kappa*sigma/delta becomes a sink on the diagonal
  // and replaces the drive-force boundary flux at that row.
  const auto seg = static_cast<std::size_t>(voided_segment(base, void_index));
  const double sink = base.area[seg] * base.kappa[seg] /
                      (mat.void_thickness * base.control_volume[void_index]);
  sys.A.coeffRef(void_index, void_index) -= sink;
  sys.A.makeCompressed();

  for (Eigen::Index col = 0; col < sys.B.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(sys.B, col); it; ++it) {
      if (it.row() == void_index) it.valueRef() = 0.0;
    }
  }
  sys.B.prune(0.0);
  return sys;
}

std::vector<int> segments_at(const LtiSystem& sys, const InterconnectTree& tree,
                             int index) {
  const GridPoint& gp = sys.node_map.at(static_cast<std::size_t>(index));
  if (gp.tree_node < 0) return {gp.segment};
  const auto span = tree.incident(gp.tree_node);
  return {span.begin(), span.end()};
}

void write_triplets(std::ostream& out, const SparseMatrix& matrix) {
  out << "% " << matrix.rows() << ' ' << matrix.cols() << ' ' << matrix.nonZeros()
      << '\n';
  for (Eigen::Index col = 0; col < matrix.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(matrix, col); it; ++it) {
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << format_double(it.value())
          << '\n';
    }
  }
}

}  // namespace emkrylov
