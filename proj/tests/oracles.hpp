#pragma once

// Reference computations for the tests. These deliberately avoid the
// library's enumeration, subset-sum tables and mask encodings so they can
// check them independently.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

namespace oracle {

using Vec = std::vector<int>;

inline double choose(int n, int r) {
  if (r < 0 || r > n) return 0.0;
  double c = 1.0;
  for (int i = 1; i <= r; ++i) c = c * (n - r + i) / i;
  return c;
}

// P(value = l) when u defectives sit among `size` items and `left` of them are counted.
inline double hypergeometric_pmf(int size, int left, int u, int l) {
  return choose(left, l) * choose(size - left, u - l) / choose(size, u);
}

inline void box_rec(const Vec& u, Vec& cur, std::size_t i, std::vector<Vec>& out) {
  if (i == u.size()) {
    out.push_back(cur);
    return;
  }
  for (int v = 0; v <= u[i]; ++v) {
    cur.push_back(v);
    box_rec(u, cur, i + 1, out);
    cur.pop_back();
  }
}

inline std::vector<Vec> box(const Vec& u) {
  std::vector<Vec> out;
  Vec cur;
  box_rec(u, cur, 0, out);
  return out;
}

inline int dot(const Vec& a, const Vec& b) {
  int s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Rec {
  Vec mask;
  int answer;
};

inline std::vector<Vec> feasible(const Vec& u, const std::vector<Rec>& hist) {
  std::vector<Vec> out;
  for (const auto& v : box(u)) {
    bool ok = true;
    for (const auto& r : hist) ok = ok && dot(v, r.mask) == r.answer;
    if (ok) out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Nonzero binary masks of length d in lexicographic order.
inline std::vector<Vec> nonzero_masks(std::size_t d) {
  std::vector<Vec> all = box(Vec(d, 1));
  all.erase(all.begin());
  return all;
}

inline double answer_entropy(const std::vector<Vec>& fs, const Vec& mask) {
  std::map<int, int> c;
  for (const auto& v : fs) ++c[dot(v, mask)];
  double h = 0.0;
  for (auto [a, n] : c) {
    const double p = static_cast<double>(n) / fs.size();
    h -= p * std::log2(p);
  }
  return h;
}

inline double answer_variance(const std::vector<Vec>& fs, const Vec& mask) {
  double m = 0.0, m2 = 0.0;
  for (const auto& v : fs) {
    const double a = dot(v, mask);
    m += a;
    m2 += a * a;
  }
  m /= fs.size();
  return m2 / fs.size() - m * m;
}

inline Vec argmax_mask(const std::vector<Vec>& fs, const std::function<double(const std::vector<Vec>&, const Vec&)>& score) {
  Vec best;
  double bs = -1.0;
  for (const auto& m : nonzero_masks(fs.front().size())) {
    const double s = score(fs, m);
    if (s > bs + 1e-9) {
      bs = s;
      best = m;
    }
  }
  return best;
}

inline Vec entropy_argmax(const std::vector<Vec>& fs) { return argmax_mask(fs, answer_entropy); }
inline Vec variance_argmax(const std::vector<Vec>& fs) { return argmax_mask(fs, answer_variance); }

using Chooser = std::function<Vec(const std::vector<Vec>&)>;

// Expected episode length of a deterministic chooser when the hidden vector
// is drawn from `weight` restricted to the feasible set.
inline double expected_length(const std::vector<Vec>& fs, const std::function<double(const Vec&)>& weight,
                              const Chooser& choose_mask) {
  if (fs.size() <= 1) return 0.0;
  const Vec m = choose_mask(fs);
  std::map<int, std::vector<Vec>> split;
  std::map<int, double> w;
  double total = 0.0;
  for (const auto& v : fs) {
    split[dot(v, m)].push_back(v);
    w[dot(v, m)] += weight(v);
    total += weight(v);
  }
  double e = 1.0;
  for (auto& [a, part] : split) e += w[a] / total * expected_length(part, weight, choose_mask);
  return e;
}

// Exact per-stage expectation under the standalone model: k defectives thrown
// uniformly into k slots, zero slots dropped, coordinate i ~ Binomial(u_i, 1/2).
inline double standalone_expectation(int k, const Chooser& choose_mask) {
  double e = 0.0;
  const double total = std::pow(static_cast<double>(k), k);
  // enumerate compositions of k into k ordered parts with multinomial weight
  std::function<void(int, int, Vec&, double)> rec = [&](int slot, int left, Vec& u, double ways) {
    if (slot == k - 1) {
      u.push_back(left);
      Vec live;
      for (int x : u)
        if (x > 0) live.push_back(x);
      auto weight = [&](const Vec& v) {
        double p = 1.0;
        for (std::size_t i = 0; i < v.size(); ++i) p *= choose(live[i], v[i]) / std::pow(2.0, live[i]);
        return p;
      };
      e += ways / total * expected_length(box(live), weight, choose_mask);
      u.pop_back();
      return;
    }
    for (int c = 0; c <= left; ++c) {
      u.push_back(c);
      rec(slot + 1, left - c, u, ways * choose(left, c));
      u.pop_back();
    }
  };
  Vec u;
  rec(0, k, u, 1.0);
  return e;
}

}  // namespace oracle
