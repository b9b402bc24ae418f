#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "emkrylov/em_engine.hpp"
#include "emkrylov/tree.hpp"

namespace emkrylov {

/// 100 |x - y| / (|x| + eps), percent.
double percentage_error(double reference, double candidate, double eps = 1e-30);

struct Candidate {
  int q = 4;
  double eta_nuc = 1.0;
  double eta_post = 1.0;
  bool operator==(const Candidate&) const = default;
};

struct TunerConfig {
  std::vector<int> orders{3, 4, 5, 6};
  double eta_min = 0.1;
  double eta_max = 20.0;
  std::vector<double> steps{5.0, 1.0, 0.5, 0.1};  // coarse to fine
  int max_iterations = 20;
  double stop_tol = 1e-3;  // percentage points
  double epsilon = 1e-30;
  double penalty = 1e6;    // J of a run that fails to nucleate
  Candidate start{4, 1.0, 1.0};
  std::size_t threads = 1;  // concurrent candidate evaluations

  /// Throws ParameterError on an empty order set, inverted bounds, or a step
  /// list that is not strictly decreasing and positive.
  void validate() const;
};

/// Metrics of the fine-grid FDM run the tuner aims at.
struct Reference {
  double t_nuc = 0.0;
  double delta_r = 0.0;
};

/// Throws SearchError when the reference run did not nucleate.
Reference reference_from(const SimulationResult& result);

struct Evaluation {
  Candidate candidate;
  double j = 0.0;
  double pe_nuc = 0.0;
  double pe_post = 0.0;
  bool nucleated = false;
};

/// J = PE(t_nuc) + PE(Delta R_final) of one simulation against the reference,
/// or the penalty when the candidate never nucleates.
Evaluation score(const Candidate& candidate, const SimulationResult& result,
                 const Reference& reference, const TunerConfig& config);

/// Runs `base` with the candidate's (q, eta_nuc, eta_post) and scores it.
Evaluation objective(const Candidate& candidate, const InterconnectTree& tree,
                     const SimulationConfig& base, const Reference& reference,
                     const TunerConfig& config);

struct TunerResult {
  Candidate best;
  double j = 0.0;
  std::vector<double> trace;  // J* at the end of each iteration
  int iterations = 0;
  std::size_t evaluations = 0;  // distinct candidates simulated
  std::size_t cache_hits = 0;
  std::vector<Evaluation> log;  // every distinct evaluation, in order
};

using Evaluator = std::function<Evaluation(const Candidate&)>;

/// Coordinate descent over q, then eta_nuc, then eta_post, accepting only
/// strict improvements. Throws SearchError if no evaluated candidate
/// nucleated.
TunerResult coordinate_descent(const TunerConfig& config, const Evaluator& evaluate);

/// Convenience overload scoring simulations of `tree` with `base` settings.
TunerResult coordinate_descent(const TunerConfig& config, const InterconnectTree& tree,
                               const SimulationConfig& base, const Reference& reference);

}  // namespace emkrylov
