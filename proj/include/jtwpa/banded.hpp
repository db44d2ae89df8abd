#pragma once

// Banded LU with partial pivoting and a reverse Cuthill-McKee ordering.
//
// Circuit matrices built from ladder networks are narrow-banded once the
// unknowns are ordered along the ladder, so a dense band factorization beats
// general sparse LU by a wide margin for the sizes used here.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <queue>
#include <stdexcept>
#include <vector>

namespace jtwpa::linalg {

template <typename T>
inline double magnitude(const T& v) {
  return std::abs(v);
}

/// Row-stored band matrix with room for the fill produced by row pivoting.
/// Row i holds columns [i - kl, i + kl + ku].
template <typename T>
class BandMatrix {
 public:
  BandMatrix() = default;
  BandMatrix(std::size_t n, std::size_t kl, std::size_t ku)
      : n_(n), kl_(kl), ku_(ku), width_(2 * kl + ku + 1), data_(n * width_, T{}) {}

  std::size_t size() const { return n_; }
  std::size_t lower() const { return kl_; }
  std::size_t upper() const { return ku_; }

  void set_zero() { std::fill(data_.begin(), data_.end(), T{}); }

  bool in_band(std::size_t i, std::size_t j) const {
    return j + kl_ >= i && j <= i + ku_;
  }

  /// Accumulates into A(i, j); (i, j) must lie inside the declared band.
  void add(std::size_t i, std::size_t j, const T& v) { ref(i, j) += v; }

  T get(std::size_t i, std::size_t j) const {
    if (j + kl_ < i || j > i + kl_ + ku_) return T{};
    return data_[i * width_ + (j + kl_ - i)];
  }

  T& ref(std::size_t i, std::size_t j) { return data_[i * width_ + (j + kl_ - i)]; }
  const T& cref(std::size_t i, std::size_t j) const { return data_[i * width_ + (j + kl_ - i)]; }

 private:
  std::size_t n_ = 0, kl_ = 0, ku_ = 0, width_ = 0;
  std::vector<T> data_;
};

template <typename T>
class BandedLU {
 public:
  /// Factorizes in place. Returns false on an exactly singular pivot.
  bool factorize(BandMatrix<T>& a) {
    a_ = &a;
    const std::size_t n = a.size();
    const std::size_t kl = a.lower();
    const std::size_t kmax = kl + a.upper();
    pivots_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t rlast = std::min(n - 1, i + kl);
      std::size_t p = i;
      double best = magnitude(a.ref(i, i));
      for (std::size_t r = i + 1; r <= rlast; ++r) {
        const double m = magnitude(a.ref(r, i));
        if (m > best) {
          best = m;
          p = r;
        }
      }
      pivots_[i] = p;
      if (best == 0.0) return false;
      const std::size_t clast = std::min(n - 1, i + kmax);
      const std::size_t len = clast - i;  // columns i+1 .. clast
      if (p != i) {
        T* ri = &a.ref(i, i);
        T* rp = &a.ref(p, i);
        for (std::size_t j = 0; j <= len; ++j) std::swap(ri[j], rp[j]);
      }
      const T inv = T(1) / a.ref(i, i);
      const T* pivot_row = &a.ref(i, i) + 1;
      for (std::size_t r = i + 1; r <= rlast; ++r) {
        T& lri = a.ref(r, i);
        if (lri == T{}) continue;
        lri *= inv;
        const T m = lri;
        T* row = &lri + 1;
        for (std::size_t j = 0; j < len; ++j) row[j] -= m * pivot_row[j];
      }
    }
    return true;
  }

  /// Solves A x = b using the last factorization; b is overwritten with x.
  void solve(std::vector<T>& b) const {
    const BandMatrix<T>& a = *a_;
    const std::size_t n = a.size();
    const std::size_t kl = a.lower();
    const std::size_t kmax = kl + a.upper();
    for (std::size_t i = 0; i < n; ++i) {
      if (pivots_[i] != i) std::swap(b[i], b[pivots_[i]]);
      const std::size_t rlast = std::min(n - 1, i + kl);
      const T bi = b[i];
      if (bi == T{}) continue;
      for (std::size_t r = i + 1; r <= rlast; ++r) b[r] -= a.cref(r, i) * bi;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      T s = b[ii];
      const std::size_t clast = std::min(n - 1, ii + kmax);
      const T* row = &a.cref(ii, ii);
      for (std::size_t j = 1; j + ii <= clast; ++j) s -= row[j] * b[ii + j];
      b[ii] = s / row[0];
    }
  }

 private:
  const BandMatrix<T>* a_ = nullptr;
  std::vector<std::size_t> pivots_;
};

/// Reverse Cuthill-McKee permutation of an undirected graph given as
/// adjacency lists. Returns perm with perm[old] = new.
inline std::vector<std::size_t> reverse_cuthill_mckee(
    const std::vector<std::vector<std::size_t>>& adj) {
  const std::size_t n = adj.size();
  std::vector<std::size_t> order;
  order.reserve(n);
  std::vector<char> seen(n, 0);
  auto degree = [&](std::size_t v) { return adj[v].size(); };

  for (std::size_t start0 = 0; start0 < n; ++start0) {
    if (seen[start0]) continue;
    // Pseudo-peripheral start: repeat BFS from the farthest minimum-degree node.
    std::size_t start = start0;
    for (int sweep = 0; sweep < 4; ++sweep) {
      std::vector<int> level(n, -1);
      std::queue<std::size_t> q;
      q.push(start);
      level[start] = 0;
      std::size_t far = start;
      while (!q.empty()) {
        const std::size_t v = q.front();
        q.pop();
        if (level[v] > level[far] || (level[v] == level[far] && degree(v) < degree(far)))
          far = v;
        for (std::size_t w : adj[v])
          if (level[w] < 0) {
            level[w] = level[v] + 1;
            q.push(w);
          }
      }
      if (far == start) break;
      start = far;
    }
    std::queue<std::size_t> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      order.push_back(v);
      std::vector<std::size_t> nb;
      for (std::size_t w : adj[v])
        if (!seen[w]) {
          seen[w] = 1;
          nb.push_back(w);
        }
      std::stable_sort(nb.begin(), nb.end(),
                       [&](std::size_t x, std::size_t y) { return degree(x) < degree(y); });
      for (std::size_t w : nb) q.push(w);
    }
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < n; ++k) perm[order[k]] = n - 1 - k;
  return perm;
}

/// Half bandwidth of a symmetric pattern under permutation `perm`.
inline std::size_t bandwidth(const std::vector<std::vector<std::size_t>>& adj,
                             const std::vector<std::size_t>& perm) {
  std::size_t bw = 0;
  for (std::size_t v = 0; v < adj.size(); ++v)
    for (std::size_t w : adj[v]) {
      const std::size_t a = perm[v], b = perm[w];
      bw = std::max(bw, a > b ? a - b : b - a);
    }
  return bw;
}

}  // namespace jtwpa::linalg
