#include "dhr/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dhr/error.hpp"
#include "dhr/simulation.hpp"

namespace dhr {

ObjectId predict_winner(const FitResult& fit, const Hyperedge& edge) {
  if (edge.vertices.empty()) fail(ErrorKind::kInvalidArgument, "empty edge");
  // Vertices are ascending, so a strict comparison keeps the smallest id on ties.
  ObjectId best = edge.vertices.front();
  double best_score = fit.fitted_score(edge, best);
  for (std::size_t k = 1; k < edge.size(); ++k) {
    const double s = fit.fitted_score(edge, edge.vertices[k]);
    if (s > best_score) {
      best_score = s;
      best = edge.vertices[k];
    }
  }
  return best;
}

double pairwise_win_probability(const FitResult& fit, const Hyperedge& edge) {
  if (edge.size() != 2) {
    fail(ErrorKind::kInvalidArgument, "win probability is defined for pairwise edges");
  }
  const double diff = fit.fitted_score(edge, edge.vertices[0]) -
                      fit.fitted_score(edge, edge.vertices[1]);
  return 1.0 / (1.0 + std::exp(-diff));
}

double brier_score(const FitResult& fit, const ComparisonDataset& dataset) {
  if (dataset.edges.empty()) fail(ErrorKind::kInvalidArgument, "Brier score of an empty dataset");
  double acc = 0.0;
  for (std::size_t i = 0; i < dataset.edges.size(); ++i) {
    const Hyperedge& e = dataset.edges[i];
    if (e.size() != 2) {
      fail(ErrorKind::kInvalidArgument,
           "Brier score needs pairwise edges; edge " + std::to_string(i) + " has " +
               std::to_string(e.size()) + " objects");
    }
    if (!e.has_ranking()) fail(ErrorKind::kInvalidArgument, "edge without ranking");
    const double p = pairwise_win_probability(fit, e);
    const double outcome = e.ranking.front() == e.vertices.front() ? 1.0 : 0.0;
    acc += (p - outcome) * (p - outcome);
  }
  return acc / static_cast<double>(dataset.edges.size());
}

double accuracy(const FitResult& fit, const ComparisonDataset& dataset) {
  if (dataset.edges.empty()) fail(ErrorKind::kInvalidArgument, "accuracy of an empty dataset");
  std::size_t hits = 0;
  for (const auto& e : dataset.edges) {
    if (!e.has_ranking()) fail(ErrorKind::kInvalidArgument, "edge without ranking");
    if (predict_winner(fit, e) == e.ranking.front()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.edges.size());
}

MetricsReport evaluate_metrics(const FitResult& fit, const ComparisonDataset& test) {
  MetricsReport report;
  report.model_tag = fit.tag;
  report.n_test_edges = test.edges.size();
  report.accuracy = accuracy(fit, test);
  report.mean_log_likelihood = evaluate_loglik(fit, test);
  ComparisonDataset pairs;
  pairs.n = test.n;
  pairs.d = test.d;
  for (const auto& e : test.edges) {
    if (e.size() == 2) pairs.edges.push_back(e);
  }
  report.n_pairwise_edges = pairs.edges.size();
  if (!pairs.edges.empty()) report.brier = brier_score(fit, pairs);
  return report;
}

namespace {

int parse_int(std::string_view text, std::size_t pos, std::size_t len, const std::string& whole) {
  int value = 0;
  if (pos + len > text.size()) fail(ErrorKind::kDataFormat, "bad timestamp '" + whole + "'");
  const char* first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc() || ptr != first + len) {
    fail(ErrorKind::kDataFormat, "bad timestamp '" + whole + "'");
  }
  return value;
}

}  // namespace

double parse_timestamp(const std::string& text) {
  using namespace std::chrono;
  const std::string_view s = text;
  auto expect = [&](std::size_t pos, char c) {
    if (pos >= s.size() || s[pos] != c) fail(ErrorKind::kDataFormat, "bad timestamp '" + text + "'");
  };
  expect(4, '-');
  expect(7, '-');
  const year_month_day date{year{parse_int(s, 0, 4, text)},
                            month{static_cast<unsigned>(parse_int(s, 5, 2, text))},
                            day{static_cast<unsigned>(parse_int(s, 8, 2, text))}};
  if (!date.ok()) fail(ErrorKind::kDataFormat, "invalid date in timestamp '" + text + "'");
  double seconds = static_cast<double>(sys_days{date}.time_since_epoch() / std::chrono::seconds{1});

  std::size_t pos = 10;
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    expect(pos + 3, ':');
    const int hh = parse_int(s, pos + 1, 2, text);
    const int mm = parse_int(s, pos + 4, 2, text);
    if (hh > 23 || mm > 59) fail(ErrorKind::kDataFormat, "invalid time in '" + text + "'");
    seconds += hh * 3600.0 + mm * 60.0;
    pos += 6;
    if (pos < s.size() && s[pos] == ':') {
      const int ss = parse_int(s, pos + 1, 2, text);
      if (ss > 60) fail(ErrorKind::kDataFormat, "invalid seconds in '" + text + "'");
      seconds += ss;
      pos += 3;
      if (pos < s.size() && s[pos] == '.') {
        std::size_t end = pos + 1;
        while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
        if (end == pos + 1) fail(ErrorKind::kDataFormat, "bad fraction in '" + text + "'");
        seconds += std::stod(std::string(s.substr(pos, end - pos)));
        pos = end;
      }
    }
  }
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      pos += 1;
    } else if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
      const int sign = s[pos] == '+' ? 1 : -1;
      const int oh = parse_int(s, pos + 1, 2, text);
      const int om = parse_int(s, pos + 4, 2, text);
      seconds -= sign * (oh * 3600.0 + om * 60.0);
      pos += 6;
    } else {
      fail(ErrorKind::kDataFormat, "bad timestamp '" + text + "'");
    }
  }
  return seconds;
}

DatasetSplit temporal_split(const ComparisonDataset& dataset, const std::string& train_end,
                            const std::string& val_end) {
  const double t_train = parse_timestamp(train_end);
  const double t_val = parse_timestamp(val_end);
  if (t_val < t_train) fail(ErrorKind::kInvalidArgument, "val_end precedes train_end");
  DatasetSplit split;
  for (auto* part : {&split.train, &split.val, &split.test}) {
    part->n = dataset.n;
    part->d = dataset.d;
  }
  for (std::size_t i = 0; i < dataset.edges.size(); ++i) {
    const Hyperedge& e = dataset.edges[i];
    if (!e.timestamp) {
      fail(ErrorKind::kDataFormat, "edge " + std::to_string(i) + " has no timestamp");
    }
    const double t = parse_timestamp(*e.timestamp);
    if (t <= t_train) {
      split.train.edges.push_back(e);
    } else if (t <= t_val) {
      split.val.edges.push_back(e);
    } else {
      split.test.edges.push_back(e);
    }
  }
  return split;
}

std::pair<ComparisonDataset, ComparisonDataset> random_split(const ComparisonDataset& dataset,
                                                             double val_fraction, Rng& rng) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "val_fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> order(dataset.edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(order.size())));
  return {dataset.subset(std::span(order).subspan(n_val)),
          dataset.subset(std::span(order).first(n_val))};
}

namespace {

template <typename Get>
std::pair<double, double> mean_sd(const std::vector<MetricsReport>& runs, Get get) {
  if (runs.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  double mean = 0.0;
  for (const auto& r : runs) mean += get(r);
  mean /= static_cast<double>(runs.size());
  double ss = 0.0;
  for (const auto& r : runs) ss += (get(r) - mean) * (get(r) - mean);
  const double sd = runs.size() > 1 ? std::sqrt(ss / static_cast<double>(runs.size() - 1)) : 0.0;
  return {mean, sd};
}

}  // namespace

double ComparisonRow::mean_accuracy() const {
  return mean_sd(runs, [](const MetricsReport& r) { return r.accuracy; }).first;
}
double ComparisonRow::sd_accuracy() const {
  return mean_sd(runs, [](const MetricsReport& r) { return r.accuracy; }).second;
}
double ComparisonRow::mean_log_likelihood() const {
  return mean_sd(runs, [](const MetricsReport& r) { return r.mean_log_likelihood; }).first;
}
double ComparisonRow::sd_log_likelihood() const {
  return mean_sd(runs, [](const MetricsReport& r) { return r.mean_log_likelihood; }).second;
}
double ComparisonRow::se_log_likelihood() const {
  if (runs.empty()) return 0.0;
  return sd_log_likelihood() / std::sqrt(static_cast<double>(runs.size()));
}
std::optional<double> ComparisonRow::mean_brier() const {
  if (runs.empty() || !runs.front().brier) return std::nullopt;
  return mean_sd(runs, [](const MetricsReport& r) { return r.brier.value_or(0.0); }).first;
}
std::optional<double> ComparisonRow::sd_brier() const {
  if (runs.empty() || !runs.front().brier) return std::nullopt;
  return mean_sd(runs, [](const MetricsReport& r) { return r.brier.value_or(0.0); }).second;
}

std::vector<ComparisonRow> compare_models(const ComparisonDataset& train,
                                          const ComparisonDataset& val,
                                          const ComparisonDataset& test, const NetworkArch& arch,
                                          const TrainConfig& config,
                                          const CompareOptions& options) {
  if (options.seeds < 1) fail(ErrorKind::kInvalidArgument, "need at least one seed");
  if (test.edges.empty()) fail(ErrorKind::kInvalidArgument, "empty test set");
  const auto seeds = static_cast<std::size_t>(options.seeds);
  std::vector<ComparisonRow> rows(options.models.size());
  for (std::size_t m = 0; m < rows.size(); ++m) {
    rows[m].model_tag = options.models[m];
    rows[m].runs.resize(seeds);
  }
  parallel_for(rows.size() * seeds, options.threads, [&](std::size_t task) {
    const std::size_t m = task / seeds;
    const std::size_t s = task % seeds;
    const ModelTag tag = options.models[m];
    TrainConfig cfg = config;
    cfg.seed = derive_seed(options.seed, {static_cast<std::uint64_t>(tag), s});
    cfg.existence_policy = ExistencePolicy::kWarn;
    const ModelSpec spec = ModelSpec::for_tag(tag, arch, options.box_radius, options.sup_bound);
    const FitResult fitted = fit(train, spec, cfg, &val);
    rows[m].runs[s] = evaluate_metrics(fitted, test);
  });
  return rows;
}

void write_metrics_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "model,seed,accuracy,brier,mean_log_likelihood,n_test_edges,n_pairwise_edges\n";
  for (const auto& row : rows) {
    for (std::size_t s = 0; s < row.runs.size(); ++s) {
      const auto& r = row.runs[s];
      out << to_string(row.model_tag) << ',' << s << ',' << r.accuracy << ',';
      if (r.brier) out << *r.brier;
      out << ',' << r.mean_log_likelihood << ',' << r.n_test_edges << ',' << r.n_pairwise_edges
          << '\n';
    }
  }
  out.precision(old_precision);
}

void write_metrics_table(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::left << std::setw(9) << "Model" << std::right << std::setw(20) << "Accuracy (%)"
      << std::setw(22) << "Log-likelihood" << std::setw(20) << "Brier" << '\n';
  out << std::fixed;
  for (const auto& row : rows) {
    std::ostringstream acc;
    acc << std::fixed << std::setprecision(3) << 100.0 * row.mean_accuracy() << " +- "
        << 100.0 * row.sd_accuracy();
    std::ostringstream ll;
    ll << std::fixed << std::setprecision(3) << row.mean_log_likelihood() << " +- "
       << row.sd_log_likelihood();
    std::ostringstream brier;
    if (auto b = row.mean_brier()) {
      brier << std::fixed << std::setprecision(3) << *b << " +- " << row.sd_brier().value_or(0.0);
    } else {
      brier << "n/a";
    }
    out << std::left << std::setw(9) << to_string(row.model_tag) << std::right << std::setw(20)
        << acc.str() << std::setw(22) << ll.str() << std::setw(20) << brier.str() << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

std::vector<FittedScorePoint> fitted_scores(const FitResult& fit,
                                            const ComparisonDataset& dataset) {
  std::vector<FittedScorePoint> points;
  points.reserve(dataset.n_obs());
  for (std::size_t i = 0; i < dataset.edges.size(); ++i) {
    const Hyperedge& e = dataset.edges[i];
    for (ObjectId j : e.vertices) {
      points.push_back({e.timestamp.value_or(""), i, j, fit.fitted_score(e, j)});
    }
  }
  return points;
}

void write_fitted_scores_csv(std::ostream& out, const std::vector<FittedScorePoint>& points) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "timestamp,edge,object,score\n";
  for (const auto& p : points) {
    out << p.timestamp << ',' << p.edge_index << ',' << p.object << ',' << p.score << '\n';
  }
  out.precision(old_precision);
}

}  // namespace dhr
