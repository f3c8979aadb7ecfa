#pragma once

// Naive reference implementations of the suite metrics. Plain loops and
// std::vector only; nothing here calls into the library except the Matrix
// container, so agreement with the library is a meaningful check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "delta_audit/matrix.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline Rows rows_of(const delta_audit::Matrix& m) {
  Rows out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline double l1(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += std::fabs(x);
  return s;
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

inline std::vector<double> delta(const Rows& a, const Rows& b) {
  std::vector<double> flat;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) flat.push_back(b[i][j] - a[i][j]);
  return flat;
}

inline Rows delta_rows(const Rows& a, const Rows& b) {
  Rows out = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[i][j] = b[i][j] - a[i][j];
  return out;
}

inline double mag(const Rows& d) {
  std::vector<double> norms;
  for (const auto& r : d) norms.push_back(l1(r));
  return mean(norms);
}

// Indices of the K largest values; equal values rank the lower index first.
inline std::vector<std::size_t> topk(const std::vector<double>& v, std::size_t K) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      const bool swap = v[idx[b]] > v[idx[a]] || (v[idx[b]] == v[idx[a]] && idx[b] < idx[a]);
      if (swap) std::swap(idx[a], idx[b]);
    }
  idx.resize(std::min(K, idx.size()));
  return idx;
}

inline std::optional<double> topk_share(const Rows& d, std::size_t K) {
  std::vector<double> shares;
  for (const auto& r : d) {
    const double n = l1(r);
    if (n == 0) continue;
    std::vector<double> s;
    for (double x : r) s.push_back(std::fabs(x) / n);
    double t = 0;
    for (auto j : topk(s, K)) t += s[j];
    shares.push_back(t);
  }
  if (shares.empty()) return std::nullopt;
  return mean(shares);
}

inline std::optional<double> entropy(const Rows& d) {
  std::vector<double> hs;
  for (const auto& r : d) {
    const double n = l1(r);
    if (n == 0) continue;
    double h = 0;
    for (double x : r) {
      const double s = std::fabs(x) / n;
      if (s > 0) h -= s * std::log(s);
    }
    hs.push_back(h);
  }
  if (hs.empty()) return std::nullopt;
  return mean(hs);
}

inline double overlap(const Rows& a, const Rows& b, std::size_t K) {
  std::vector<double> per;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::vector<double> aa, bb;
    for (double x : a[i]) aa.push_back(std::fabs(x));
    for (double x : b[i]) bb.push_back(std::fabs(x));
    const auto ta = topk(aa, K), tb = topk(bb, K);
    std::set<std::size_t> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end()), u = sa;
    u.insert(sb.begin(), sb.end());
    std::size_t inter = 0;
    for (auto j : sa) inter += sb.count(j);
    per.push_back(u.empty() ? 1.0 : static_cast<double>(inter) / u.size());
  }
  return mean(per);
}

inline double jsd_vec(const std::vector<double>& p, const std::vector<double>& q) {
  double kl_p = 0, kl_q = 0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double m = (p[j] + q[j]) / 2;
    if (p[j] > 0) kl_p += p[j] * std::log(p[j] / m);
    if (q[j] > 0) kl_q += q[j] * std::log(q[j] / m);
  }
  return 0.5 * kl_p + 0.5 * kl_q;
}

inline double jsd(const Rows& a, const Rows& b) {
  std::vector<double> per;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double na = l1(a[i]), nb = l1(b[i]);
    if (na == 0 && nb == 0) {
      per.push_back(0);
    } else if (na == 0 || nb == 0) {
      per.push_back(std::log(2.0));
    } else {
      std::vector<double> p, q;
      for (double x : a[i]) p.push_back(std::fabs(x) / na);
      for (double x : b[i]) q.push_back(std::fabs(x) / nb);
      per.push_back(jsd_vec(p, q));
    }
  }
  return mean(per);
}

inline double dce(const Rows& d, const std::vector<double>& df) {
  std::vector<double> gaps;
  for (std::size_t i = 0; i < d.size(); ++i) {
    long double s = 0;
    for (double x : d[i]) s += x;
    gaps.push_back(std::fabs(static_cast<double>(s) - df[i]));
  }
  return mean(gaps);
}

inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const double mx = mean(x), my = mean(y);
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

inline std::optional<double> bac(const Rows& d, const std::vector<double>& df) {
  std::vector<double> m, b;
  for (std::size_t i = 0; i < d.size(); ++i) {
    m.push_back(l1(d[i]));
    b.push_back(std::fabs(df[i]));
  }
  return pearson(m, b);
}

inline std::optional<double> codf(const Rows& d, const std::vector<std::size_t>& top,
                                  const std::vector<std::size_t>& cohort) {
  if (cohort.empty()) return std::nullopt;
  std::vector<double> shares;
  for (auto i : cohort) {
    const double n = l1(d[i]);
    double s = 0;
    if (n > 0)
      for (auto j : top) s += std::fabs(d[i][j]) / n;
    shares.push_back(s);
  }
  return mean(shares);
}

}  // namespace oracle
