#include "emkrylov/tuner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <thread>
#include <tuple>

#include "emkrylov/error.hpp"

namespace emkrylov {

double percentage_error(double reference, double candidate, double eps) {
  if (!(eps > 0.0)) throw ParameterError("percentage error regularizer must be positive");
  return 100.0 * std::abs(reference - candidate) / (std::abs(reference) + eps);
}

void TunerConfig::validate() const {
  if (orders.empty()) throw ParameterError("tuner order set is empty");
  for (const int q : orders) {
    if (q < 1) throw ParameterError("tuner orders must be >= 1");
  }
  if (!(eta_min > 0.0) || !(eta_min < eta_max)) {
    throw ParameterError("tuner needs 0 < eta_min < eta_max");
  }
  if (steps.empty()) throw ParameterError("tuner step list is empty");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i] > 0.0) || (i > 0 && !(steps[i] < steps[i - 1]))) {
      throw ParameterError("tuner steps must be positive and strictly decreasing");
    }
  }
  if (max_iterations < 1) throw ParameterError("tuner needs at least one iteration");
  if (!(stop_tol >= 0.0)) throw ParameterError("tuner stop tolerance must be >= 0");
  if (!(epsilon > 0.0)) throw ParameterError("tuner epsilon must be positive");
  if (start.eta_nuc < eta_min || start.eta_nuc > eta_max || start.eta_post < eta_min ||
      start.eta_post > eta_max) {
    throw ParameterError("tuner start point lies outside the eta bounds");
  }
}

Reference reference_from(const SimulationResult& result) {
  if (!result.t_nuc) throw SearchError("reference run did not nucleate");
  Reference ref;
  ref.t_nuc = *result.t_nuc;
  ref.delta_r = result.final_delta_r().value_or(0.0);
  return ref;
}

Evaluation score(const Candidate& candidate, const SimulationResult& result,
                 const Reference& reference, const TunerConfig& config) {
  Evaluation ev;
  ev.candidate = candidate;
  if (!result.t_nuc) {
    ev.j = config.penalty;
    return ev;
  }
  ev.nucleated = true;
  ev.pe_nuc = percentage_error(reference.t_nuc, *result.t_nuc, config.epsilon);
  ev.pe_post = percentage_error(reference.delta_r, result.final_delta_r().value_or(0.0),
                                config.epsilon);
  ev.j = ev.pe_nuc + ev.pe_post;
  if (!std::isfinite(ev.j)) ev.j = config.penalty;
  return ev;
}

Evaluation objective(const Candidate& candidate, const InterconnectTree& tree,
                     const SimulationConfig& base, const Reference& reference,
                     const TunerConfig& config) {
  SimulationConfig cfg = base;
  cfg.q = candidate.q;
  cfg.eta_nuc = candidate.eta_nuc;
  cfg.eta_post = candidate.eta_post;
  try {
    return score(candidate, simulate_two_phase(tree, cfg), reference, config);
  } catch (const NumericalError&) {
    Evaluation ev;
    ev.candidate = candidate;
    ev.j = config.penalty;
    return ev;
  }
}

namespace {

// Snap to 1e-9 so that sums of decimal steps hit the same cache key.
double snap(double eta) { return std::round(eta * 1e9) / 1e9; }

class Search {
 public:
  Search(const TunerConfig& config, const Evaluator& evaluate, TunerResult& result)
      : config_(config), evaluate_(evaluate), result_(result) {}

  // Evaluates the uncached candidates of `batch`, concurrently when allowed.
  void prefetch(const std::vector<Candidate>& batch) {
    std::vector<Candidate> todo;
    for (const Candidate& c : batch) {
      if (!cache_.count(key(c)) &&
          std::find(todo.begin(), todo.end(), c) == todo.end()) {
        todo.push_back(c);
      }
    }
    if (todo.size() < 2 || config_.threads < 2) return;
    std::vector<Evaluation> out(todo.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < todo.size(); i = next++) out[i] = evaluate_(todo[i]);
    };
    std::vector<std::thread> pool;
    const std::size_t n = std::min(config_.threads, todo.size());
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    for (const Evaluation& ev : out) store(ev);
  }

  double operator()(const Candidate& c) {
    const auto it = cache_.find(key(c));
    if (it != cache_.end()) {
      ++result_.cache_hits;
      return it->second.j;
    }
    return store(evaluate_(c)).j;
  }

 private:
  using Key = std::tuple<int, double, double>;
  static Key key(const Candidate& c) { return {c.q, c.eta_nuc, c.eta_post}; }

  const Evaluation& store(Evaluation ev) {
    ++result_.evaluations;
    result_.log.push_back(ev);
    return cache_.emplace(key(ev.candidate), std::move(ev)).first->second;
  }

  const TunerConfig& config_;
  const Evaluator& evaluate_;
  TunerResult& result_;
  std::map<Key, Evaluation> cache_;
};

}  // namespace

TunerResult coordinate_descent(const TunerConfig& config, const Evaluator& evaluate) {
  config.validate();
  TunerResult result;
  Search J(config, evaluate, result);
  auto clip = [&](double eta) { return snap(std::clamp(eta, config.eta_min, config.eta_max)); };

  Candidate cur = config.start;
  cur.eta_nuc = snap(cur.eta_nuc);
  cur.eta_post = snap(cur.eta_post);
  double best = J(cur);

  // Step search along one shift factor; first strict improvement wins.
  auto step_search = [&](double Candidate::*eta) {
    std::vector<Candidate> trials;
    for (const double s : config.steps) {
      for (const double d : {1.0, -1.0}) {
        Candidate c = cur;
        c.*eta = clip(cur.*eta + d * s);
        trials.push_back(c);
      }
    }
    J.prefetch(trials);
    for (const Candidate& c : trials) {
      const double j = J(c);
      if (j < best) {
        cur = c;
        best = j;
        return;
      }
    }
  };

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    const double prev = best;
    result.iterations = iter;

    std::vector<Candidate> orders;
    for (const int q : config.orders) orders.push_back(Candidate{q, cur.eta_nuc, cur.eta_post});
    J.prefetch(orders);
    for (const Candidate& c : orders) {
      const double j = J(c);
      if (j < best) {
        cur.q = c.q;
        best = j;
      }
    }

    step_search(&Candidate::eta_nuc);
    step_search(&Candidate::eta_post);

    result.trace.push_back(best);
    if (prev - best < config.stop_tol) break;
  }

  bool any = false;
  for (const Evaluation& ev : result.log) any = any || ev.nucleated;
  if (!any) throw SearchError("no evaluated configuration nucleated");
  result.best = cur;
  result.j = best;
  return result;
}

TunerResult coordinate_descent(const TunerConfig& config, const InterconnectTree& tree,
                               const SimulationConfig& base, const Reference& reference) {
  const Evaluator eval = [&](const Candidate& c) {
    return objective(c, tree, base, reference, config);
  };
  return coordinate_descent(config, eval);
}

}  // namespace emkrylov
