#pragma once

// Reference implementations written independently of the library code and
// used only as test oracles.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace kolflow::oracle {

using Edge = std::pair<std::string, std::string>;

struct RandomGraph {
  std::vector<std::string> nodes;
  std::vector<Edge> edges;
};

/// Random DAG: node names are shuffled so that lexicographic order carries no
/// hint of the hidden topological order used to orient edges.
inline RandomGraph random_dag(std::mt19937_64 &rng, std::size_t max_nodes) {
  std::uniform_int_distribution<std::size_t> count(1, max_nodes);
  const std::size_t n = count(rng);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(std::string(1, static_cast<char>('a' + i)));
  std::shuffle(names.begin(), names.end(), rng);
  std::bernoulli_distribution has_edge(std::uniform_real_distribution<double>(0.1, 0.7)(rng));
  RandomGraph g;
  g.nodes = names;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (has_edge(rng)) g.edges.emplace_back(names[i], names[j]);
  std::shuffle(g.nodes.begin(), g.nodes.end(), rng);
  std::shuffle(g.edges.begin(), g.edges.end(), rng);
  return g;
}

inline bool respects(const std::vector<std::string> &order, const std::vector<Edge> &edges) {
  auto pos = [&](const std::string &id) { return std::find(order.begin(), order.end(), id) - order.begin(); };
  for (const auto &[from, to] : edges)
    if (pos(from) >= pos(to)) return false;
  return true;
}

/// Every valid order, by exhaustive permutation in lexicographic sequence.
inline std::vector<std::vector<std::string>> all_valid_orders(std::vector<std::string> nodes,
                                                              const std::vector<Edge> &edges) {
  std::sort(nodes.begin(), nodes.end());
  std::vector<std::vector<std::string>> out;
  do {
    if (respects(nodes, edges)) out.push_back(nodes);
  } while (std::next_permutation(nodes.begin(), nodes.end()));
  return out;
}

/// True when the directed graph has a cycle (Floyd–Warshall reachability).
inline bool has_cycle(const std::vector<std::string> &nodes, const std::vector<Edge> &edges) {
  const std::size_t n = nodes.size();
  auto idx = [&](const std::string &id) {
    return static_cast<std::size_t>(std::find(nodes.begin(), nodes.end(), id) - nodes.begin());
  };
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (const auto &[a, b] : edges) reach[idx(a)][idx(b)] = true;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;
  for (std::size_t i = 0; i < n; ++i)
    if (reach[i][i]) return true;
  return false;
}

/// Bitwise FNV-1a 32 straight from the published constants.
inline std::uint32_t fnv1a32(const std::string &text) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : text) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

struct Similarity {
  double s, theta, tx, ty;
};

inline std::pair<double, double> apply(const Similarity &t, double x, double y) {
  const double c = std::cos(t.theta), sn = std::sin(t.theta);
  return {t.s * (c * x - sn * y) + t.tx, t.s * (sn * x + c * y) + t.ty};
}

inline double residual(const Similarity &t, const std::vector<std::array<double, 2>> &src,
                       const std::vector<std::array<double, 2>> &dst) {
  double r = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto [x, y] = apply(t, src[i][0], src[i][1]);
    r += (x - dst[i][0]) * (x - dst[i][0]) + (y - dst[i][1]) * (y - dst[i][1]);
  }
  return r;
}

/// Derivative-free least-squares fit: a coarse grid over (log s, θ) with the
/// translation solved exactly for each candidate, then compass search on all
/// four parameters with shrinking steps.
inline Similarity brute_force_similarity(const std::vector<std::array<double, 2>> &src,
                                         const std::vector<std::array<double, 2>> &dst) {
  const double n = static_cast<double>(src.size());
  auto best_translation = [&](double s, double theta) {
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto [x, y] = apply({s, theta, 0, 0}, src[i][0], src[i][1]);
      sx += dst[i][0] - x;
      sy += dst[i][1] - y;
    }
    return Similarity{s, theta, sx / n, sy / n};
  };
  const double pi = std::acos(-1.0);
  Similarity best = best_translation(1, 0);
  double best_r = residual(best, src, dst);
  for (int i = 0; i <= 40; ++i) {
    const double s = std::exp(std::log(0.1) + (std::log(10.0) - std::log(0.1)) * i / 40.0);
    for (int k = 0; k < 180; ++k) {
      const auto cand = best_translation(s, -pi + 2 * pi * k / 180.0);
      const double r = residual(cand, src, dst);
      if (r < best_r) {
        best = cand;
        best_r = r;
      }
    }
  }
  std::array<double, 4> step{0.05, 0.05, 1.0, 1.0};
  for (int iter = 0; iter < 200000 && step[0] > 1e-13; ++iter) {
    bool improved = false;
    for (int d = 0; d < 4; ++d)
      for (double sign : {1.0, -1.0}) {
        Similarity cand = best;
        double *p[4] = {&cand.s, &cand.theta, &cand.tx, &cand.ty};
        *p[d] += sign * step[static_cast<std::size_t>(d)] * (d == 0 ? best.s : 1.0);
        if (cand.s <= 0) continue;
        if (d < 2) cand = best_translation(cand.s, cand.theta);
        const double r = residual(cand, src, dst);
        if (r < best_r) {
          best = cand;
          best_r = r;
          improved = true;
        }
      }
    if (!improved)
      for (auto &st : step) st *= 0.5;
  }
  return best;
}

} // namespace kolflow::oracle
