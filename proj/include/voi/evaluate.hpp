#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "voi/common.hpp"
#include "voi/scene.hpp"

namespace voi::eval {

// ---------------------------------------------------------------------------
// Popular vote

struct Vote {
  int cls = 0;
  std::optional<double> confidence;  // probability of the voted class, learned path only
};

struct FixationAnnotation {
  long long fixation_id = 0;
  int cls = -1;  // -1: nothing to vote on (e.g. no covered scan points)
  std::vector<std::size_t> histogram;  // votes per class index
  double confidence = std::nan("");    // mean confidence of the winning votes
  std::size_t count = 0;

  std::size_t winner_votes() const { return cls < 0 ? 0 : histogram[std::size_t(cls)]; }
};

/// Majority class. Ties: higher summed confidence (only when every vote carries one), then
/// VOI classes before the two defaults, then the lower index.
inline FixationAnnotation popular_vote(const std::vector<Vote>& votes, const ClassCatalog& catalog,
                                       long long fixation_id = 0) {
  if (votes.empty()) throw Error("fixation " + std::to_string(fixation_id) + " has no votes");
  const std::size_t k = catalog.size();
  FixationAnnotation a;
  a.fixation_id = fixation_id;
  a.histogram.assign(k, 0);
  std::vector<double> conf_sum(k, 0.0);
  bool all_conf = true;
  for (const auto& v : votes) {
    if (!catalog.valid(v.cls)) throw Error("vote for class index " + std::to_string(v.cls) + " outside catalog");
    ++a.histogram[std::size_t(v.cls)];
    if (v.confidence) conf_sum[std::size_t(v.cls)] += *v.confidence;
    else all_conf = false;
  }
  a.count = votes.size();
  auto better = [&](std::size_t c, std::size_t best) {
    if (a.histogram[c] != a.histogram[best]) return a.histogram[c] > a.histogram[best];
    if (all_conf && conf_sum[c] != conf_sum[best]) return conf_sum[c] > conf_sum[best];
    const bool dc = catalog.is_default(int(c)), db = catalog.is_default(int(best));
    if (dc != db) return !dc;
    return c < best;
  };
  std::size_t best = 0;
  for (std::size_t c = 1; c < k; ++c)
    if (better(c, best)) best = c;
  a.cls = int(best);
  if (all_conf) a.confidence = conf_sum[best] / double(a.histogram[best]);
  return a;
}

// ---------------------------------------------------------------------------
// Annotation files

inline constexpr std::string_view kAnnotationColumns =
    "fixation_id,class_name,class_index,votes_total,votes_winner,confidence";
inline constexpr std::string_view kUnannotated = "unannotated";

inline std::string annotations_text(const std::vector<FixationAnnotation>& anns, const ClassCatalog& catalog,
                                    const std::string& provenance = {}) {
  std::string out;
  if (!provenance.empty()) out += provenance + "\n";
  out += std::string(kAnnotationColumns) + "\n";
  for (const auto& a : anns) {
    out += std::to_string(a.fixation_id) + ",";
    out += (a.cls < 0 ? std::string(kUnannotated) : catalog.name(a.cls)) + ",";
    out += std::to_string(a.cls) + "," + std::to_string(a.count) + "," + std::to_string(a.winner_votes()) + ",";
    out += std::isnan(a.confidence) ? "nan" : fmt_real(a.confidence);
    out += "\n";
  }
  return out;
}

/// Reads fixation_id and class columns from annotation output. Unannotated rows map to -1.
inline std::map<long long, int> parse_annotations(std::string_view text, const ClassCatalog& catalog) {
  const auto t = parse_csv(text);
  const auto cid = t.column("fixation_id"), cname = t.column("class_name");
  std::map<long long, int> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto line = t.row_lines[r];
    const auto id = parse_int(t.rows[r][cid], line);
    const auto& name = t.rows[r][cname];
    int cls = -1;
    if (name != kUnannotated) {
      try {
        cls = catalog.index_of(name);
      } catch (const Error& e) {
        throw ParseError(line, e.what());
      }
    }
    if (!out.emplace(id, cls).second) throw ParseError(line, "duplicate fixation id " + std::to_string(id));
  }
  return out;
}

/// Ground truth: fixation events with an extra `class` column holding a class name.
inline std::map<long long, int> parse_truth(std::string_view text, const ClassCatalog& catalog) {
  const auto t = parse_csv(text);
  const auto cid = t.column("id"), ccls = t.column("class");
  std::map<long long, int> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto line = t.row_lines[r];
    int cls;
    try {
      cls = catalog.index_of(t.rows[r][ccls]);
    } catch (const Error& e) {
      throw ParseError(line, e.what());
    }
    if (!out.emplace(parse_int(t.rows[r][cid], line), cls).second) throw ParseError(line, "duplicate fixation id");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Confusion matrix and weighted metrics

struct ConfusionMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> counts;  // row = truth, column = prediction

  explicit ConfusionMatrix(std::size_t classes = 0) : n(classes), counts(classes * classes, 0) {}
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts[truth * n + pred]; }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * n + pred]; }
  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
  std::size_t trace() const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < n; ++i) s += at(i, i);
    return s;
  }
};

struct ConfusionResult {
  ConfusionMatrix matrix;
  std::size_t unannotated = 0;  // fixations with a truth label but no prediction, left out
};

inline ConfusionResult confusion(const std::map<long long, int>& truth, const std::map<long long, int>& pred,
                                 std::size_t classes) {
  for (const auto& [id, c] : truth)
    if (!pred.count(id)) throw Error("fixation " + std::to_string(id) + " has ground truth but no prediction");
  for (const auto& [id, c] : pred)
    if (!truth.count(id)) throw Error("fixation " + std::to_string(id) + " has a prediction but no ground truth");
  ConfusionResult r{ConfusionMatrix(classes), 0};
  for (const auto& [id, t] : truth) {
    const int p = pred.at(id);
    if (t < 0 || std::size_t(t) >= classes) throw Error("truth class outside catalog");
    if (p < 0) {
      ++r.unannotated;
      continue;
    }
    if (std::size_t(p) >= classes) throw Error("predicted class outside catalog");
    ++r.matrix.at(std::size_t(t), std::size_t(p));
  }
  return r;
}

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  std::size_t support = 0;
};

struct MetricsReport {
  double precision = 0, recall = 0, f1 = 0, accuracy = 0;
  std::size_t total = 0;
  std::vector<ClassMetrics> per_class;
};

inline MetricsReport weighted_metrics(const ConfusionMatrix& cm) {
  const std::size_t n = cm.n, total = cm.total();
  if (total == 0) throw Error("confusion matrix is empty");
  MetricsReport r;
  r.total = total;
  r.per_class.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t col = 0, row = 0;
    for (std::size_t j = 0; j < n; ++j) {
      col += cm.at(j, c);
      row += cm.at(c, j);
    }
    const double tp = double(cm.at(c, c));
    auto& m = r.per_class[c];
    m.support = row;
    m.precision = col ? tp / double(col) : 0.0;
    m.recall = row ? tp / double(row) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    const double w = double(row) / double(total);
    r.precision += w * m.precision;
    r.f1 += w * m.f1;
  }
  // support-weighted recall is sum(TP) / total
  r.accuracy = double(cm.trace()) / double(total);
  r.recall = r.accuracy;
  return r;
}

inline std::string metrics_csv(const MetricsReport& r, const std::vector<std::string>& names,
                               const std::string& provenance = {}) {
  std::string out;
  if (!provenance.empty()) out += provenance + "\n";
  out += "class,precision,recall,f1,support\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    out += (c < names.size() ? names[c] : std::to_string(c)) + "," + fmt_real(m.precision) + "," +
           fmt_real(m.recall) + "," + fmt_real(m.f1) + "," + std::to_string(m.support) + "\n";
  }
  out += "weighted," + fmt_real(r.precision) + "," + fmt_real(r.recall) + "," + fmt_real(r.f1) + "," +
         std::to_string(r.total) + "\n";
  return out;
}

/// Reads the weighted row (and per-class rows) back from metrics_csv output.
inline MetricsReport parse_metrics_csv(std::string_view text) {
  const auto t = parse_csv(text);
  const auto cc = t.column("class"), cp = t.column("precision"), cr = t.column("recall"), cf = t.column("f1"),
             cs = t.column("support");
  MetricsReport r;
  bool have_weighted = false;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto line = t.row_lines[i];
    const auto& f = t.rows[i];
    ClassMetrics m{parse_real(f[cp], line), parse_real(f[cr], line), parse_real(f[cf], line),
                   std::size_t(parse_int(f[cs], line))};
    if (f[cc] == "weighted") {
      r.precision = m.precision;
      r.recall = r.accuracy = m.recall;
      r.f1 = m.f1;
      r.total = m.support;
      have_weighted = true;
    } else {
      r.per_class.push_back(m);
    }
  }
  if (!have_weighted) throw ParseError(t.header_line, "metrics file has no 'weighted' row");
  return r;
}

inline std::string metrics_text(const MetricsReport& r, const std::vector<std::string>& names) {
  std::size_t w = 8;
  for (const auto& n : names) w = std::max(w, n.size());
  auto pad = [&](std::string s) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  std::string out = pad("class") + "  precision  recall  f1     support\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    out += pad(c < names.size() ? names[c] : std::to_string(c)) + "  " + fmt_fixed(m.precision, 4) + "     " +
           fmt_fixed(m.recall, 4) + "  " + fmt_fixed(m.f1, 4) + "  " + std::to_string(m.support) + "\n";
  }
  out += pad("weighted") + "  " + fmt_fixed(r.precision, 4) + "     " + fmt_fixed(r.recall, 4) + "  " +
         fmt_fixed(r.f1, 4) + "  " + std::to_string(r.total) + "\n";
  out += "accuracy " + fmt_fixed(r.accuracy, 4) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Method comparison

struct NamedReport {
  std::string method;
  std::string setting;
  MetricsReport report;
};

struct Comparison {
  std::string text;
  std::string csv;
  // flagged[i][m]: report i holds the unique maximum of metric m (precision, recall, f1)
  // among reports of its setting
  std::vector<std::array<bool, 3>> flagged;
};

inline Comparison compare_reports(const std::vector<NamedReport>& reports, const std::string& provenance = {}) {
  if (reports.size() < 2) throw Error("comparison needs at least 2 reports, got " + std::to_string(reports.size()));
  Comparison c;
  c.flagged.assign(reports.size(), {false, false, false});
  std::vector<std::string> settings, methods;
  for (const auto& r : reports) {
    if (std::find(settings.begin(), settings.end(), r.setting) == settings.end()) settings.push_back(r.setting);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  auto metric = [](const MetricsReport& m, int k) { return k == 0 ? m.precision : k == 1 ? m.recall : m.f1; };
  for (const auto& s : settings)
    for (int k = 0; k < 3; ++k) {
      double best = -1;
      std::size_t arg = 0, ties = 0;
      for (std::size_t i = 0; i < reports.size(); ++i) {
        if (reports[i].setting != s) continue;
        const double v = std::round(metric(reports[i].report, k) * 100) / 100;  // compare as displayed
        if (v > best) {
          best = v;
          arg = i;
          ties = 1;
        } else if (v == best) {
          ++ties;
        }
      }
      if (ties == 1) c.flagged[arg][std::size_t(k)] = true;
    }

  if (!provenance.empty()) c.csv += provenance + "\n";
  c.csv += "method,setting,precision,recall,f1\n";
  for (const auto& r : reports)
    c.csv += r.method + "," + r.setting + "," + fmt_real(r.report.precision) + "," + fmt_real(r.report.recall) + "," +
             fmt_real(r.report.f1) + "\n";

  std::size_t mw = 6;
  for (const auto& m : methods) mw = std::max(mw, m.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  const std::size_t cell = 6;  // "0.60* "
  std::string head1 = pad("", mw), head2 = pad("method", mw);
  for (const auto& s : settings) {
    head1 += " | " + pad(s, 3 * cell);
    head2 += " | " + pad("P", cell) + pad("R/Acc", cell) + pad("F1", cell);
  }
  c.text = head1 + "\n" + head2 + "\n";
  for (const auto& m : methods) {
    std::string line = pad(m, mw);
    for (const auto& s : settings) {
      line += " | ";
      const auto it = std::find_if(reports.begin(), reports.end(),
                                   [&](const NamedReport& r) { return r.method == m && r.setting == s; });
      if (it == reports.end()) {
        line += pad("-", 3 * cell);
        continue;
      }
      const auto i = std::size_t(it - reports.begin());
      for (int k = 0; k < 3; ++k)
        line += pad(fmt_fixed(metric(it->report, k), 2) + (c.flagged[i][std::size_t(k)] ? "*" : ""), cell);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    c.text += line + "\n";
  }
  return c;
}

// ---------------------------------------------------------------------------
// QA summary over participants

struct QaResult {
  std::string participant;
  std::vector<double> offsets_deg;  // one per revisit fixation
  double mean_offset_deg = 0;       // accuracy proxy
  double dispersion_deg = 0;        // population standard deviation, precision proxy
  double max_offset_deg = 0;
  double threshold_deg = 1.5;
  double pose_coverage = 1.0;
  bool pass = false;
};

inline QaResult summarize_offsets(std::string participant, std::vector<double> offsets, double threshold_deg,
                                  double coverage) {
  if (offsets.empty()) throw Error("no revisit fixations flagged for QA");
  QaResult q;
  q.participant = std::move(participant);
  q.threshold_deg = threshold_deg;
  q.pose_coverage = coverage;
  double s = 0;
  for (double o : offsets) {
    if (!(o >= 0)) throw Error("angular offsets must be non-negative");
    s += o;
    q.max_offset_deg = std::max(q.max_offset_deg, o);
  }
  q.mean_offset_deg = s / double(offsets.size());
  double v = 0;
  for (double o : offsets) v += (o - q.mean_offset_deg) * (o - q.mean_offset_deg);
  q.dispersion_deg = std::sqrt(v / double(offsets.size()));
  q.pass = q.max_offset_deg <= threshold_deg;
  q.offsets_deg = std::move(offsets);
  return q;
}

inline std::vector<std::string> exclusions(const std::vector<QaResult>& results) {
  std::vector<std::string> out;
  for (const auto& r : results)
    if (!r.pass) out.push_back(r.participant);
  return out;
}

inline std::string qa_csv(const std::vector<QaResult>& results, const std::string& provenance = {}) {
  std::string out;
  if (!provenance.empty()) out += provenance + "\n";
  out += "participant,revisits,mean_offset_deg,dispersion_deg,max_offset_deg,threshold_deg,pose_coverage,pass\n";
  for (const auto& r : results)
    out += r.participant + "," + std::to_string(r.offsets_deg.size()) + "," + fmt_real(r.mean_offset_deg) + "," +
           fmt_real(r.dispersion_deg) + "," + fmt_real(r.max_offset_deg) + "," + fmt_real(r.threshold_deg) + "," +
           fmt_real(r.pose_coverage) + "," + (r.pass ? "1" : "0") + "\n";
  return out;
}

}  // namespace voi::eval
