#include "pedal/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "pedal/corpus.h"
#include "pedal/error.h"
#include "pedal/text.h"

namespace pedal::metrics {

TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::u32string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(text::encode_utf8(current));
      current.clear();
    }
  };
  for (char32_t c : text::decode_utf8(text)) {
    if (text::is_space(c)) {
      flush();
    } else if (text::is_punct(c)) {
      flush();
      tokens.push_back(text::encode_utf8(std::u32string(1, c)));
    } else {
      current.push_back(text::to_lower(c));
    }
  }
  flush();
  return tokens;
}

namespace {

// Edit distance with an early exit: returns a value >= limit as soon as every
// cell of a row reaches limit (row minima never decrease).
std::size_t bounded_distance(std::span<const int> a, std::span<const int> b, std::size_t limit,
                             std::vector<std::size_t>& row) {
  const std::size_t m = b.size();
  row.resize(m + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    std::size_t row_min = row[0];
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
      row_min = std::min(row_min, row[j]);
    }
    if (row_min >= limit) return limit;
  }
  return row[m];
}

EditBreakdown alignment_breakdown(std::span<const int> hyp, std::span<const int> ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j) + 1, at(i, j - 1) + 1, at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? 0 : 1)});

  EditBreakdown out;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const std::size_t sub = hyp[i - 1] == ref[j - 1] ? 0 : 1;
      if (at(i, j) == at(i - 1, j - 1) + sub) {
        out.substitutions += sub;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  return out;
}

struct Shift {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t dest = 0;
};

// Moves the block [start, start+length) so that it begins at index dest of
// the sequence with the block taken out.
void apply_shift(std::span<const int> in, const Shift& s, std::vector<int>& out) {
  out.clear();
  std::vector<int> rest;
  rest.reserve(in.size());
  rest.insert(rest.end(), in.begin(), in.begin() + s.start);
  rest.insert(rest.end(), in.begin() + s.start + s.length, in.end());
  out.insert(out.end(), rest.begin(), rest.begin() + s.dest);
  out.insert(out.end(), in.begin() + s.start, in.begin() + s.start + s.length);
  out.insert(out.end(), rest.begin() + s.dest, rest.end());
}

}  // namespace

std::size_t edit_distance(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> row;
  return bounded_distance(a, b, std::numeric_limits<std::size_t>::max(), row);
}

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::unordered_map<std::string_view, int> ids;
  auto intern = [&](std::span<const std::string> s) {
    std::vector<int> out;
    out.reserve(s.size());
    for (const auto& t : s) out.push_back(ids.try_emplace(t, static_cast<int>(ids.size())).first->second);
    return out;
  };
  const auto x = intern(a);
  const auto y = intern(b);
  return edit_distance(std::span<const int>(x), std::span<const int>(y));
}

TerResult ter(std::span<const int> hypothesis, std::span<const int> reference) {
  if (reference.empty()) throw Error("TER is undefined for an empty reference");

  std::vector<int> current(hypothesis.begin(), hypothesis.end());
  std::vector<std::size_t> row;
  std::size_t distance = bounded_distance(current, reference, std::numeric_limits<std::size_t>::max(), row);
  std::size_t shifts = 0;

  std::vector<int> candidate;
  std::vector<std::size_t> matches;
  while (distance > 0) {
    const std::size_t n = current.size();
    std::size_t best = distance;
    Shift best_shift;
    for (std::size_t start = 0; start < n; ++start) {
      matches.clear();
      for (std::size_t p = 0; p < reference.size(); ++p)
        if (reference[p] == current[start]) matches.push_back(p);
      for (std::size_t len = 1; len <= kMaxShiftLength && start + len <= n; ++len) {
        if (len > 1) {
          std::erase_if(matches, [&](std::size_t p) {
            return p + len > reference.size() || reference[p + len - 1] != current[start + len - 1];
          });
        }
        if (matches.empty()) break;
        for (std::size_t dest = 0; dest + len <= n; ++dest) {
          if (dest == start) continue;
          const Shift s{start, len, dest};
          apply_shift(current, s, candidate);
          const std::size_t d = bounded_distance(candidate, reference, best, row);
          if (d < best) {
            best = d;
            best_shift = s;
          }
        }
      }
    }
    if (best >= distance) break;
    apply_shift(std::vector<int>(current), best_shift, current);
    distance = best;
    ++shifts;
  }

  TerResult result;
  result.breakdown = alignment_breakdown(current, reference);
  result.breakdown.shifts = shifts;
  result.edits = result.breakdown.total();
  result.ref_length = reference.size();
  result.score = static_cast<double>(result.edits) / static_cast<double>(result.ref_length);
  return result;
}

TerResult ter(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  std::unordered_map<std::string_view, int> ids;
  auto intern = [&](std::span<const std::string> s) {
    std::vector<int> out;
    out.reserve(s.size());
    for (const auto& t : s) out.push_back(ids.try_emplace(t, static_cast<int>(ids.size())).first->second);
    return out;
  };
  const auto h = intern(hypothesis);
  const auto r = intern(reference);
  return ter(std::span<const int>(h), std::span<const int>(r));
}

double post_edit_ter(std::string_view hypothesis, std::string_view edited) {
  const auto hyp = tokenize(hypothesis);
  const auto ref = tokenize(edited);
  if (ref.empty()) return hyp.empty() ? 0.0 : 1.0;
  return ter(hyp, ref).score;
}

double segment_quality(std::string_view current_text, std::string_view reference) {
  const auto ref = tokenize(reference);
  const double score = ter(tokenize(current_text), ref).score;
  return std::max(0.0, 100.0 * (1.0 - score));
}

double mean_quality(std::span<const double> per_segment) {
  if (per_segment.empty()) throw Error("corpus quality of an empty corpus");
  double sum = 0.0;
  for (double q : per_segment) sum += q;
  return sum / static_cast<double>(per_segment.size());
}

double corpus_quality(const Corpus& corpus) {
  std::vector<double> per_segment;
  per_segment.reserve(corpus.size());
  for (const auto& seg : corpus.segments()) {
    if (!seg.reference) throw Error("segment " + std::to_string(seg.id) + " has no reference");
    per_segment.push_back(segment_quality(seg.current_text(), *seg.reference));
  }
  return mean_quality(per_segment);
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && xs[order[j]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size()) throw Error("pearson: length mismatch");
  if (n < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace {

// Counts strict inversions while merge-sorting v.
std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return inv;
}

std::uint64_t tied_pairs(std::span<const double> sorted) {
  std::uint64_t ties = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const std::uint64_t t = j - i;
    ties += t * (t - 1) / 2;
    i = j;
  }
  return ties;
}

}  // namespace

std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size()) throw Error("kendall: length mismatch");
  if (n < 2) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
  });

  // Pairs tied on x, and tied on both.
  std::uint64_t x_ties = 0, joint_ties = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    const std::uint64_t t = j - i;
    x_ties += t * (t - 1) / 2;
    for (std::size_t a = i; a < j;) {
      std::size_t b = a + 1;
      while (b < j && y[order[b]] == y[order[a]]) ++b;
      const std::uint64_t u = b - a;
      joint_ties += u * (u - 1) / 2;
      a = b;
    }
    i = j;
  }

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::uint64_t discordant = count_inversions(ys, buf, 0, n);
  const std::uint64_t y_ties = tied_pairs(ys);

  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const double denom_x = static_cast<double>(total - x_ties);
  const double denom_y = static_cast<double>(total - y_ties);
  if (denom_x == 0.0 || denom_y == 0.0) return std::nullopt;
  const double numerator = static_cast<double>(total) - static_cast<double>(x_ties) - static_cast<double>(y_ties) +
                           static_cast<double>(joint_ties) - 2.0 * static_cast<double>(discordant);
  return std::clamp(numerator / std::sqrt(denom_x * denom_y), -1.0, 1.0);
}

EvalStats eval_stats(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw Error("eval_stats: predictions and targets differ in length");
  if (predictions.empty()) throw Error("eval_stats: no samples");
  EvalStats s;
  s.n = predictions.size();
  double abs_sum = 0, sq_sum = 0;
  for (std::size_t i = 0; i < s.n; ++i) {
    const double e = predictions[i] - targets[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  s.mae = abs_sum / static_cast<double>(s.n);
  s.mse = sq_sum / static_cast<double>(s.n);
  s.pearson_r = pearson(predictions, targets);
  s.spearman_rho = spearman(predictions, targets);
  s.kendall_tau = kendall_tau_b(predictions, targets);
  return s;
}

}  // namespace pedal::metrics
