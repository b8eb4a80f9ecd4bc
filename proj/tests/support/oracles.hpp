#pragma once

// Independent reference implementations the library is checked against.
// Each one follows the textbook definition directly and shares no code with
// the implementation under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mtc/rng.hpp"
#include "mtc/tensor.hpp"

namespace oracle {

// ---------------------------------------------------------------- gradients

struct GradReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "tensor[index]"
};

/// Central differences on every element of `params`. `loss` must rebuild the
/// graph from the current parameter values each call. Step = 1e-5 * max(1,
/// |x|); error = |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
/// The floor keeps float64 roundoff (about 1e-11) on exactly-zero gradients
/// from reading as a relative error.
inline GradReport gradcheck(const std::function<mtc::nn::Tensor<double>()>& loss,
                            std::vector<mtc::nn::Tensor<double>> params, std::vector<std::string> names = {}) {
  for (auto& p : params) p.zero_grad();
  mtc::nn::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradReport rep;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& v = params[t].values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x = v[i];
      const double h = 1e-5 * std::max(1.0, std::abs(x));
      v[i] = x + h;
      const double up = loss().item();
      v[i] = x - h;
      const double down = loss().item();
      v[i] = x;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[t][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      ++rep.checked;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst = (t < names.size() ? names[t] : "param" + std::to_string(t)) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------- BPE

/// Splits UTF-8 into codepoint strings (valid input assumed).
inline std::vector<std::string> chars_of(const std::string& s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    const std::size_t n = c < 0x80 ? 1 : c < 0xE0 ? 2 : c < 0xF0 ? 3 : 4;
    out.push_back(s.substr(i, n));
    i += n;
  }
  return out;
}

/// Words of a corpus line: split on ASCII whitespace and on the separator
/// U+241F, which is dropped.
inline std::vector<std::string> words_of(const std::string& line) {
  const std::string sep = "\xE2\x90\x9F";
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < line.size();) {
    if (std::string(" \t\n\r\f\v").find(line[i]) != std::string::npos) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
      ++i;
    } else if (line.compare(i, sep.size(), sep) == 0) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
      i += sep.size();
    } else {
      cur += line[i++];
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Recount-everything BPE. Returns the merge list.
inline std::vector<std::pair<std::string, std::string>> bpe_merges(const std::vector<std::string>& lines,
                                                                   std::size_t vocab_size,
                                                                   std::size_t min_frequency = 2) {
  std::vector<std::vector<std::string>> corpus;  // one entry per word occurrence
  std::set<std::string> vocab = {"<pad>", "<unk>", "<sep>", "</w>"};
  for (const auto& l : lines) {
    for (const auto& w : words_of(l)) {
      auto cs = chars_of(w);
      vocab.insert(cs.begin(), cs.end());
      cs.push_back("</w>");
      corpus.push_back(cs);
    }
  }
  std::vector<std::pair<std::string, std::string>> merges;
  while (vocab.size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& w : corpus)
      for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w[i], w[i + 1]}];
    // std::map iterates in (left, right) order, so the first maximum is the
    // tie-break winner.
    std::pair<std::string, std::string> best;
    std::size_t best_n = 0;
    for (const auto& [p, n] : counts)
      if (n > best_n) {
        best = p;
        best_n = n;
      }
    if (best_n < std::max<std::size_t>(min_frequency, 1)) break;
    merges.push_back(best);
    vocab.insert(best.first + best.second);
    for (auto& w : corpus) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == best.first && w[i + 1] == best.second) {
          next.push_back(best.first + best.second);
          ++i;
        } else {
          next.push_back(w[i]);
        }
      }
      w = next;
    }
  }
  return merges;
}

/// Random corpus over at most 5 letters and at most 30 characters, as a
/// few lines of space-separated words. Small alphabets make ties common.
inline std::vector<std::string> random_bpe_corpus(mtc::Rng& rng) {
  const std::size_t letters = 1 + rng.below(5);
  const std::size_t total = 1 + rng.below(30);
  std::vector<std::string> lines(1);
  for (std::size_t i = 0; i < total; ++i) {
    const auto r = rng.below(letters + 2);
    if (r == letters && !lines.back().empty()) lines.back() += ' ';
    else if (r == letters + 1 && !lines.back().empty()) lines.emplace_back();
    else lines.back() += static_cast<char>('a' + rng.below(letters));
  }
  if (lines.back().find_first_not_of(' ') == std::string::npos) lines.back() += 'a';
  return lines;
}

/// Segments one word by replaying `merges` in order.
inline std::vector<std::string> bpe_segment(const std::string& word,
                                            const std::vector<std::pair<std::string, std::string>>& merges) {
  auto w = chars_of(word);
  w.push_back("</w>");
  for (const auto& [l, r] : merges) {
    std::vector<std::string> next;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (i + 1 < w.size() && w[i] == l && w[i + 1] == r) {
        next.push_back(l + r);
        ++i;
      } else {
        next.push_back(w[i]);
      }
    }
    w = next;
  }
  return w;
}

// ---------------------------------------------------------------- metrics

struct ClassScores {
  double precision, recall, f1;
  std::size_t support;
};

struct MetricsRef {
  std::vector<ClassScores> per_class;
  double accuracy, weighted_p, weighted_r, weighted_f1, macro_p, macro_r, macro_f1;
};

/// Builds the full K x K confusion matrix and reads every score off it.
inline MetricsRef metrics_from_confusion(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold,
                                         std::size_t K) {
  std::vector<std::vector<std::size_t>> cm(K, std::vector<std::size_t>(K, 0));  // cm[gold][pred]
  for (std::size_t i = 0; i < pred.size(); ++i) ++cm[gold[i]][pred[i]];
  MetricsRef r{};
  const double n = static_cast<double>(pred.size());
  std::size_t diag = 0, supported = 0;
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < K; ++j) {
      row += cm[k][j];
      col += cm[j][k];
    }
    diag += cm[k][k];
    const double p = col ? double(cm[k][k]) / double(col) : 0.0;
    const double rc = row ? double(cm[k][k]) / double(row) : 0.0;
    const double f = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
    r.per_class.push_back({p, rc, f, row});
    r.weighted_p += p * double(row) / n;
    r.weighted_r += rc * double(row) / n;
    r.weighted_f1 += f * double(row) / n;
    if (row) {
      ++supported;
      r.macro_p += p;
      r.macro_r += rc;
      r.macro_f1 += f;
    }
  }
  r.accuracy = double(diag) / n;
  r.macro_p /= double(supported);
  r.macro_r /= double(supported);
  r.macro_f1 /= double(supported);
  return r;
}

// ---------------------------------------------------------------- optimizers

/// Plain Adam (no weight decay), textbook form, double precision.
struct AdamRef {
  double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::size_t t = 0;

  void step(std::vector<double>& theta, const std::vector<double>& g, double lr) {
    if (m.empty()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, double(t)));
      const double vh = v[i] / (1 - std::pow(b2, double(t)));
      theta[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

/// Element-wise arithmetic mean of stored snapshots.
inline std::vector<double> mean_of(const std::vector<std::vector<double>>& snaps) {
  std::vector<double> out(snaps.at(0).size(), 0.0);
  for (const auto& s : snaps)
    for (std::size_t i = 0; i < s.size(); ++i) out[i] += s[i];
  for (auto& x : out) x /= double(snaps.size());
  return out;
}

}  // namespace oracle
