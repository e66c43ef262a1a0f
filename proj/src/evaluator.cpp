#include "dualmatch/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "dualmatch/clusterer.hpp"
#include "dualmatch/csv.hpp"
#include "dualmatch/errors.hpp"
#include "dualmatch/rng.hpp"

namespace dualmatch {

namespace {

constexpr std::uint64_t kTenureTag = 0x7e2e;
constexpr std::uint64_t kImportanceTag = 0x1b0a;

}  // namespace

TenureTestSet build_tenure_testset(const MicrodataTable& table, std::span<const std::size_t> rows,
                                   std::size_t negatives_per_positive, std::uint64_t seed) {
  const FeatureSchema& schema = table.schema();
  if (!schema.has_tenure_pair()) {
    throw Error(ErrorCode::NoTenureColumn, "tenure test set needs a tenure column on both sides");
  }
  if (negatives_per_positive < 1) throw Error(ErrorCode::Usage, "negatives per positive must be at least 1");
  const TenureMask mask(table);

  std::vector<std::size_t> owned_units;
  std::vector<std::size_t> rented_units;
  for (std::size_t u : rows) {
    const int t = mask.tenure_b(u);
    if (t == TenureMask::kOwner) owned_units.push_back(u);
    if (t == TenureMask::kRenter) rented_units.push_back(u);
  }

  TenureTestSet out;
  std::vector<std::size_t> pool;
  for (std::size_t r : rows) {
    out.set.pairs.push_back({r, r, 1, PairSource::CoOccurrence});
    const int t = mask.tenure_a(r);
    if (t < 0) {
      ++out.unknown_tenure_households;
      continue;
    }
    pool = t == TenureMask::kOwner ? rented_units : owned_units;
    Stream rng(seed, {kTenureTag, r});
    const std::size_t take = std::min(negatives_per_positive, pool.size());
    // Partial Fisher-Yates: the first `take` slots are a uniform sample.
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    }
    std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    for (std::size_t i = 0; i < take; ++i) {
      out.set.pairs.push_back({r, pool[i], 0, PairSource::TenureNegative});
    }
    if (take < negatives_per_positive) ++out.short_households;
  }
  if (out.short_households > 0) {
    out.warnings.push_back(std::to_string(out.short_households) + " households had fewer than " +
                           std::to_string(negatives_per_positive) + " conflicting units; used all available");
  }
  if (out.unknown_tenure_households > 0) {
    out.warnings.push_back(std::to_string(out.unknown_tenure_households) +
                           " households have unknown tenure and received no negatives");
  }
  return out;
}

LabeledPairSet synthetic_gt_pairs(const GroundTruthMatrix& gt, std::span<const std::size_t> x_rows,
                                  std::span<const std::size_t> y_rows) {
  if (gt.rows() != x_rows.size() || gt.cols() != y_rows.size()) {
    throw Error(ErrorCode::ShapeMismatch, "ground-truth matrix does not match the row lists");
  }
  LabeledPairSet set;
  set.pairs.reserve(gt.rows() * gt.cols());
  for (std::size_t i = 0; i < gt.rows(); ++i) {
    for (std::size_t j = 0; j < gt.cols(); ++j) {
      set.pairs.push_back({x_rows[i], y_rows[j], gt(i, j) ? 1 : 0, PairSource::SyntheticGt});
    }
  }
  return set;
}

// ---------------------------------------------------------------------------

nlohmann::json EvalReport::to_json() const {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : pr) curve.push_back({p.threshold, p.precision, p.recall});
  return {
      {"format_version", kReportFormatVersion},
      {"ap", ap},
      {"ndcg", ndcg},
      {"ndcg_k", k},
      {"ndcg_aggregation", "per-household mean over households with a positive"},
      {"households", households},
      {"degenerate_households", degenerate_households},
      {"positives", positives},
      {"negatives", negatives},
      {"pr_curve", curve},
      {"provenance", provenance},
      {"wall_seconds", wall_seconds},
  };
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != kReportFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported report format version");
  }
  EvalReport r;
  r.ap = j.at("ap").get<double>();
  r.ndcg = j.at("ndcg").get<double>();
  r.k = j.at("ndcg_k").get<std::size_t>();
  r.households = j.at("households").get<std::size_t>();
  r.degenerate_households = j.at("degenerate_households").get<std::size_t>();
  r.positives = j.at("positives").get<std::size_t>();
  r.negatives = j.at("negatives").get<std::size_t>();
  for (const auto& p : j.at("pr_curve")) r.pr.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
  r.provenance = j.at("provenance");
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

void EvalReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "report.json");
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "report.json").string());
  out << to_json().dump(2) << '\n';
  write_pr_curve_csv(pr, dir / "pr_curve.csv");
}

void write_pr_curve_csv(std::span<const PrPoint> curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "threshold,precision,recall\n";
  for (const auto& p : curve) {
    csv::write_row(out, {csv::format_double(p.threshold), csv::format_double(p.precision),
                         csv::format_double(p.recall)});
  }
}

std::vector<PrPoint> read_pr_curve_csv(const std::filesystem::path& path) {
  const auto records = csv::read_file(path);
  if (records.empty() || records[0] != std::vector<std::string>{"threshold", "precision", "recall"}) {
    throw Error(ErrorCode::CorruptFile, path.string() + " is not a PR-curve table");
  }
  std::vector<PrPoint> curve;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    auto t = r.size() == 3 ? csv::parse_double(r[0]) : std::nullopt;
    auto p = r.size() == 3 ? csv::parse_double(r[1]) : std::nullopt;
    auto c = r.size() == 3 ? csv::parse_double(r[2]) : std::nullopt;
    if (!t || !p || !c) throw Error(ErrorCode::CorruptFile, path.string() + ": bad row " + std::to_string(i + 1));
    curve.push_back({*t, *p, *c});
  }
  return curve;
}

double mean_household_ndcg(const LabeledPairSet& set, std::span<const double> scores, std::size_t k,
                           std::size_t* households, std::size_t* degenerate) {
  if (scores.size() != set.size()) throw Error(ErrorCode::ShapeMismatch, "scores do not match the pair set");
  std::map<std::size_t, std::vector<std::size_t>> by_household;
  for (std::size_t i = 0; i < set.pairs.size(); ++i) by_household[set.pairs[i].row_a].push_back(i);
  double total = 0.0;
  std::size_t counted = 0;
  std::size_t skipped = 0;
  std::vector<double> s;
  std::vector<double> rel;
  for (const auto& [row, idx] : by_household) {
    s.clear();
    rel.clear();
    for (std::size_t i : idx) {
      s.push_back(scores[i]);
      rel.push_back(static_cast<double>(set.pairs[i].relevance));
    }
    const auto r = ndcg_at_k(s, rel, k);
    if (r.degenerate) {
      ++skipped;
      continue;
    }
    total += r.value;
    ++counted;
  }
  if (households != nullptr) *households = counted;
  if (degenerate != nullptr) *degenerate = skipped;
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

EvalReport evaluate_scores(const LabeledPairSet& set, std::span<const double> scores, std::size_t k) {
  EvalReport report;
  const auto labels = set.labels();
  report.pr = pr_curve(scores, labels);
  report.ap = average_precision_from_curve(report.pr);
  report.k = k;
  report.ndcg = mean_household_ndcg(set, scores, k, &report.households, &report.degenerate_households);
  report.positives = set.positives();
  report.negatives = set.negatives();
  return report;
}

EvalReport evaluate(const DualEncoderModel& model, const LabeledPairSet& set, const EncodedMatrix& xa,
                    const EncodedMatrix& xb, std::size_t k, bool use_ema) {
  const auto start = std::chrono::steady_clock::now();
  const auto scores = score_labeled_pairs(model, set, xa, xb, use_ema);
  EvalReport report = evaluate_scores(set, scores, k);
  report.provenance["config_hash"] = config_hash(model.config);
  report.provenance["model_seed"] = model.config.seed;
  report.provenance["weights"] = use_ema ? "ema" : "live";
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "k,median_cluster_size,AP,NDCG,positives,runtime_s,seed,label\n";
  for (const auto& r : rows) {
    csv::write_row(out, {std::to_string(r.k), csv::format_double(r.median_cluster_size), csv::format_double(r.ap),
                         csv::format_double(r.ndcg), std::to_string(r.positives), csv::format_double(r.runtime_s),
                         std::to_string(r.seed), r.label});
  }
}

// ---------------------------------------------------------------------------

Tensor2 permute_columns(const Tensor2& x, std::span<const std::size_t> columns, std::span<const std::size_t> perm) {
  if (perm.size() != x.rows()) throw Error(ErrorCode::ShapeMismatch, "permutation length differs from row count");
  Tensor2 out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c : columns) out(i, c) = x(perm[i], c);
  }
  return out;
}

std::vector<FeatureImportance> permutation_importance(const DualEncoderModel& model, const LabeledPairSet& set,
                                                      const EncodedMatrix& xa, const EncodedMatrix& xb,
                                                      std::size_t repeats, std::uint64_t seed) {
  if (repeats < 1) throw Error(ErrorCode::Usage, "repeats must be at least 1");
  const auto labels = set.labels();
  const double base = average_precision(score_labeled_pairs(model, set, xa, xb), labels);

  std::vector<FeatureImportance> out;
  for (Side side : {Side::A, Side::B}) {
    const EncodedMatrix& m = side == Side::A ? xa : xb;
    const auto groups = m.feature_groups();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      FeatureImportance fi;
      fi.side = side;
      fi.columns = groups[g];
      fi.feature = m.feature_names[groups[g].front()].column;
      std::vector<double> drops;
      for (std::size_t r = 0; r < repeats; ++r) {
        std::vector<std::size_t> perm(m.num_rows());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Stream rng(seed, {kImportanceTag, side == Side::A ? 0u : 1u, g, r});
        rng.shuffle(std::span<std::size_t>(perm));
        EncodedMatrix shuffled = m;
        shuffled.values = permute_columns(m.values, fi.columns, perm);
        const auto scores = side == Side::A ? score_labeled_pairs(model, set, shuffled, xb)
                                            : score_labeled_pairs(model, set, xa, shuffled);
        drops.push_back(base - average_precision(scores, labels));
      }
      fi.mean_drop = std::accumulate(drops.begin(), drops.end(), 0.0) / static_cast<double>(drops.size());
      double var = 0.0;
      for (double d : drops) var += (d - fi.mean_drop) * (d - fi.mean_drop);
      fi.std_drop = std::sqrt(var / static_cast<double>(drops.size()));
      out.push_back(std::move(fi));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const FeatureImportance& a, const FeatureImportance& b) {
    if (a.mean_drop != b.mean_drop) return a.mean_drop > b.mean_drop;
    if (a.side != b.side) return a.side == Side::A;
    return a.feature < b.feature;
  });
  return out;
}

void write_importance_csv(std::span<const FeatureImportance> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "rank,feature,side,columns,mean_ap_drop,std_ap_drop\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    csv::write_row(out, {std::to_string(i + 1), r.feature, to_string(r.side), std::to_string(r.columns.size()),
                         csv::format_double(r.mean_drop), csv::format_double(r.std_drop)});
  }
}

}  // namespace dualmatch
