#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

namespace oracle {

namespace {
const int kDx[9] = {0, 0, -1, 1, 1, -1, 1, -1, 0};
const int kDy[9] = {1, -1, 0, 0, 1, 1, -1, -1, 0};
}  // namespace

Board board_from(const svt::env::GridworldConfig& cfg) {
  Board b;
  b.w = cfg.width;
  b.h = cfg.height;
  b.wall.assign(b.cells(), 0);
  b.goal.assign(b.cells(), 0.0);
  b.is_goal.assign(b.cells(), 0);
  for (const auto& c : cfg.walls) b.wall[c.y * b.w + c.x] = 1;
  for (const auto& [c, r] : cfg.goal_rewards) {
    b.goal[c.y * b.w + c.x] = r;
    b.is_goal[c.y * b.w + c.x] = 1;
  }
  b.slip = cfg.slip_prob;
  b.max_steps = cfg.max_steps;
  return b;
}

int dest(const Board& b, int cell, int move) {
  const int x = cell % b.w + kDx[move];
  const int y = cell / b.w + kDy[move];
  if (x < 0 || y < 0 || x >= b.w || y >= b.h) return cell;
  const int c = y * b.w + x;
  return b.wall[c] ? cell : c;
}

std::vector<std::pair<int, double>> blue_dist(const Board& b, int cell, int intent) {
  const int target = dest(b, cell, intent);
  std::vector<int> others;
  for (int m = 0; m < 9; ++m) {
    const int d = dest(b, cell, m);
    if (d != target && std::find(others.begin(), others.end(), d) == others.end()) {
      others.push_back(d);
    }
  }
  std::vector<std::pair<int, double>> out;
  if (others.empty() || b.slip == 0.0) {
    out.emplace_back(target, 1.0);
    return out;
  }
  out.emplace_back(target, 1.0 - b.slip);
  for (int d : others) out.emplace_back(d, b.slip / others.size());
  return out;
}

std::vector<int> starts(const Board& b) {
  std::vector<int> s;
  for (int c = 0; c < b.cells(); ++c) {
    if (b.free(c) && !b.is_goal[c]) s.push_back(c);
  }
  return s;
}

std::vector<double> system_values(const Board& b, double collision_reward, bool adversary,
                                  double gamma, double tol) {
  const int n = b.cells();
  const int slots = adversary ? n : 1;
  std::vector<double> v(static_cast<std::size_t>(n) * slots, 0.0);
  for (int it = 0; it < 1000000; ++it) {
    std::vector<double> nv(v.size(), 0.0);
    double delta = 0.0;
    for (int bl = 0; bl < n; ++bl) {
      if (!b.free(bl) || b.is_goal[bl]) continue;
      for (int o = 0; o < slots; ++o) {
        if (adversary && (!b.free(o) || o == bl)) continue;
        double best = -1e300;
        for (int a = 0; a < 9; ++a) {
          double q = 0.0;
          for (const auto& [bn, p] : blue_dist(b, bl, a)) {
            if (!adversary) {
              q += p * (b.is_goal[bn] ? b.goal[bn] : gamma * v[bn]);
              continue;
            }
            for (int x = 0; x < 9; ++x) {
              const int on = dest(b, o, x);
              double r;
              if (on == bn) {
                r = collision_reward;
              } else if (b.is_goal[bn]) {
                r = b.goal[bn];
              } else {
                r = gamma * v[static_cast<std::size_t>(bn) * n + on];
              }
              q += p * r / 9.0;
            }
          }
          best = std::max(best, q);
        }
        const std::size_t j = static_cast<std::size_t>(bl) * slots + o;
        nv[j] = best;
        delta = std::max(delta, std::abs(nv[j] - v[j]));
      }
    }
    v.swap(nv);
    if (delta < tol) break;
  }
  return v;
}

namespace {

bool live(const Board& b, int bl, int o) { return b.free(bl) && b.free(o) && !b.is_goal[bl] && bl != o; }

template <class Next>
double adversary_q(const Board& b, const SystemPolicy& pi, int bl, int o, int x, Next next) {
  double q = 0.0;
  const int on = dest(b, o, x);
  for (const auto& [bn, p] : blue_dist(b, bl, pi(bl, o))) {
    if (bn == on) {
      q += p;
    } else if (!b.is_goal[bn]) {
      q += p * next(bn, on);
    }
  }
  return q;
}

double average_over_starts(const Board& b, const std::vector<double>& f) {
  const auto s = starts(b);
  double sum = 0.0;
  int count = 0;
  for (int bl : s) {
    for (int o : s) {
      if (bl == o) continue;
      sum += f[static_cast<std::size_t>(bl) * b.cells() + o];
      ++count;
    }
  }
  return sum / count;
}

}  // namespace

AdversarySolution adversary_optimal(const Board& b, const SystemPolicy& pi, double gamma,
                                    double tol) {
  const int n = b.cells();
  AdversarySolution s;
  s.values.assign(static_cast<std::size_t>(n) * n, 0.0);
  s.policy.assign(s.values.size(), 8);
  for (int it = 0; it < 1000000; ++it) {
    double delta = 0.0;
    std::vector<double> nv(s.values.size(), 0.0);
    for (int bl = 0; bl < n; ++bl) {
      for (int o = 0; o < n; ++o) {
        if (!live(b, bl, o)) continue;
        double best = -1.0;
        int arg = 0;
        for (int x = 0; x < 9; ++x) {
          const double q = adversary_q(b, pi, bl, o, x, [&](int bn, int on) {
            return gamma * s.values[static_cast<std::size_t>(bn) * n + on];
          });
          if (q > best) {
            best = q;
            arg = x;
          }
        }
        const std::size_t j = static_cast<std::size_t>(bl) * n + o;
        nv[j] = best;
        s.policy[j] = arg;
        delta = std::max(delta, std::abs(nv[j] - s.values[j]));
      }
    }
    s.values.swap(nv);
    if (delta < tol) break;
  }
  return s;
}

double failure_probability(const Board& b, const SystemPolicy& pi, const std::vector<int>& adv,
                           int horizon) {
  const int n = b.cells();
  std::vector<double> f(static_cast<std::size_t>(n) * n, 0.0);
  for (int t = 0; t < horizon; ++t) {
    std::vector<double> nf(f.size(), 0.0);
    for (int bl = 0; bl < n; ++bl) {
      for (int o = 0; o < n; ++o) {
        if (!live(b, bl, o)) continue;
        const std::size_t j = static_cast<std::size_t>(bl) * n + o;
        nf[j] = adversary_q(b, pi, bl, o, adv[j], [&](int bn, int on) {
          return f[static_cast<std::size_t>(bn) * n + on];
        });
      }
    }
    f.swap(nf);
  }
  return average_over_starts(b, f);
}

double best_failure_probability(const Board& b, const SystemPolicy& pi, int horizon) {
  const int n = b.cells();
  std::vector<double> f(static_cast<std::size_t>(n) * n, 0.0);
  for (int t = 0; t < horizon; ++t) {
    std::vector<double> nf(f.size(), 0.0);
    for (int bl = 0; bl < n; ++bl) {
      for (int o = 0; o < n; ++o) {
        if (!live(b, bl, o)) continue;
        double best = 0.0;
        for (int x = 0; x < 9; ++x) {
          best = std::max(best, adversary_q(b, pi, bl, o, x, [&](int bn, int on) {
                            return f[static_cast<std::size_t>(bn) * n + on];
                          }));
        }
        nf[static_cast<std::size_t>(bl) * n + o] = best;
      }
    }
    f.swap(nf);
  }
  return average_over_starts(b, f);
}

double chi_square_pvalue(const std::vector<long>& counts, const std::vector<double>& probs) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), 0L));
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = n * probs[i];
    stat += (counts[i] - e) * (counts[i] - e) / e;
  }
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace oracle
