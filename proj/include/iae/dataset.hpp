#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "iae/error.hpp"

namespace iae {

using Index = std::size_t;
using IndexSet = std::vector<Index>;

enum class ClassTag : std::uint8_t { NC, DG };

constexpr std::string_view class_name(ClassTag tag) noexcept {
  return tag == ClassTag::NC ? "NC" : "DG";
}

struct Sample {
  Index id = 0;
  Eigen::VectorXd features;
  double age = 0.0;
  ClassTag class_tag = ClassTag::NC;
};

/// Tabular health data: one row per subject, the chronological age as the
/// regression target and a two-valued NC/DG tag. Immutable once built.
class Dataset {
 public:
  Dataset() = default;

  Dataset(Eigen::MatrixXd features, std::vector<double> ages, std::vector<ClassTag> tags,
          std::vector<std::string> feature_names)
      : features_(std::move(features)),
        ages_(std::move(ages)),
        tags_(std::move(tags)),
        feature_names_(std::move(feature_names)) {
    const auto n = static_cast<Index>(features_.rows());
    if (ages_.size() != n || tags_.size() != n) {
      fail(Errc::LengthMismatch, "features, ages and tags must have the same row count");
    }
    if (feature_names_.size() != static_cast<Index>(features_.cols())) {
      fail(Errc::DimensionMismatch, "feature_names length differs from feature dimension");
    }
    for (Index i = 0; i < n; ++i) {
      if (!std::isfinite(ages_[i]) || ages_[i] <= 0.0) {
        fail(Errc::ParseError, "sample " + std::to_string(i) + " has a non-positive or non-finite age");
      }
    }
    if (!features_.allFinite()) fail(Errc::ParseError, "features contain non-finite values");
  }

  Index size() const noexcept { return ages_.size(); }
  Index dim() const noexcept { return static_cast<Index>(features_.cols()); }
  bool empty() const noexcept { return ages_.empty(); }

  const Eigen::MatrixXd& features() const noexcept { return features_; }
  const std::vector<double>& ages() const noexcept { return ages_; }
  const std::vector<ClassTag>& tags() const noexcept { return tags_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }

  double age(Index i) const { return ages_.at(i); }
  ClassTag tag(Index i) const { return tags_.at(i); }

  Sample sample(Index i) const {
    return Sample{i, features_.row(static_cast<Eigen::Index>(i)).transpose(), ages_.at(i), tags_.at(i)};
  }

  Index count(ClassTag tag) const {
    return static_cast<Index>(std::count(tags_.begin(), tags_.end(), tag));
  }

  /// Same samples, new feature representation (standardized, projected, ...).
  Dataset with_features(Eigen::MatrixXd features, std::vector<std::string> names) const {
    return Dataset(std::move(features), ages_, tags_, std::move(names));
  }

  Dataset with_ages(std::vector<double> ages) const {
    return Dataset(features_, std::move(ages), tags_, feature_names_);
  }

 private:
  Eigen::MatrixXd features_;
  std::vector<double> ages_;
  std::vector<ClassTag> tags_;
  std::vector<std::string> feature_names_;
};

inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, std::span<const Index> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (Index r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  }
  return out;
}

template <typename T>
std::vector<T> select(const std::vector<T>& v, std::span<const Index> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(v.at(i));
  return out;
}

inline IndexSet filter_class(const Dataset& data, std::span<const Index> idx, ClassTag tag) {
  IndexSet out;
  for (Index i : idx) {
    if (data.tag(i) == tag) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

enum class MissingPolicy { DropRow };

struct SchemaConfig {
  std::string target_column = "age";
  std::string class_column;
  std::string nc_value;
  /// When unset, the first non-NC value seen defines DG and any further
  /// distinct value is rejected.
  std::optional<std::string> dg_value;
  /// nullopt means every column other than target and class.
  std::optional<std::vector<std::string>> feature_columns;
  MissingPolicy missing_policy = MissingPolicy::DropRow;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline bool is_missing_cell(std::string_view cell) {
  cell = trim(cell);
  return cell.empty() || cell == "?" || cell == "NA";
}

inline std::optional<double> parse_double(std::string_view cell) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// RFC-4180 records: quoted fields, doubled quotes, CRLF or LF line ends.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && detail::trim(record.front()).empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started) {
          quoted = true;
          field_started = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (quoted) fail(Errc::ParseError, "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

inline Dataset parse_dataset(std::string_view text, const SchemaConfig& schema) {
  if (schema.target_column == schema.class_column) {
    fail(Errc::ConfigError, "target_column and class_column must differ");
  }
  const auto records = parse_csv(text);
  if (records.empty()) fail(Errc::EmptyDataset, "file has no header row");

  std::vector<std::string> header;
  for (const auto& h : records.front()) header.emplace_back(detail::trim(h));
  auto column = [&](const std::string& name) -> Index {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(Errc::MissingColumn, "column '" + name + "' not in header");
    return static_cast<Index>(it - header.begin());
  };

  const Index target = column(schema.target_column);
  const Index klass = column(schema.class_column);
  std::vector<std::string> names;
  if (schema.feature_columns) {
    names = *schema.feature_columns;
    for (const auto& n : names) {
      if (n == schema.target_column || n == schema.class_column) {
        fail(Errc::ConfigError, "feature_columns must not contain the target or class column");
      }
    }
  } else {
    for (const auto& h : header) {
      if (h != schema.target_column && h != schema.class_column) names.push_back(h);
    }
  }
  std::vector<Index> feature_cols;
  for (const auto& n : names) feature_cols.push_back(column(n));

  std::optional<std::string> dg_value = schema.dg_value;
  std::vector<double> ages;
  std::vector<ClassTag> tags;
  std::vector<double> flat;

  for (Index r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string row = "row " + std::to_string(r);
    if (rec.size() != header.size()) {
      fail(Errc::ParseError, row + " has " + std::to_string(rec.size()) + " fields, header has " +
                                 std::to_string(header.size()));
    }
    bool missing = detail::is_missing_cell(rec[target]) || detail::is_missing_cell(rec[klass]);
    for (Index c : feature_cols) missing = missing || detail::is_missing_cell(rec[c]);
    if (missing) continue;  // MissingPolicy::DropRow

    const std::string klass_cell(detail::trim(rec[klass]));
    ClassTag tag = ClassTag::NC;
    if (klass_cell != schema.nc_value) {
      if (!dg_value) dg_value = klass_cell;
      if (klass_cell != *dg_value) {
        fail(Errc::ParseError, row + ": class value '" + klass_cell + "' is neither NC ('" +
                                   schema.nc_value + "') nor DG ('" + *dg_value + "')");
      }
      tag = ClassTag::DG;
    }
    const auto age = detail::parse_double(rec[target]);
    if (!age || *age <= 0.0) fail(Errc::ParseError, row + ": invalid age '" + rec[target] + "'");
    for (Index c : feature_cols) {
      const auto v = detail::parse_double(rec[c]);
      if (!v) fail(Errc::ParseError, row + ": non-numeric value '" + rec[c] + "' in column '" + header[c] + "'");
      flat.push_back(*v);
    }
    ages.push_back(*age);
    tags.push_back(tag);
  }
  if (ages.empty()) fail(Errc::EmptyDataset, "no rows survive cleaning");

  const auto n = static_cast<Eigen::Index>(ages.size());
  const auto d = static_cast<Eigen::Index>(names.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = flat[static_cast<Index>(i * d + j)];
  }
  return Dataset(std::move(x), std::move(ages), std::move(tags), std::move(names));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Dataset load_csv(const std::string& path, const SchemaConfig& schema) {
  return parse_dataset(read_file(path), schema);
}

// ---------------------------------------------------------------------------
// Hold-out splitting

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;

  void validate() const {
    if (!(train > 0.0 && val > 0.0 && test > 0.0)) fail(Errc::ConfigError, "split ratios must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9) fail(Errc::ConfigError, "split ratios must sum to 1");
  }
};

struct TriSplit {
  IndexSet train;
  IndexSet val;
  IndexSet test;
  std::uint64_t seed = 0;
  SplitRatios ratios;

  IndexSet train_val() const {
    IndexSet out = train;
    out.insert(out.end(), val.begin(), val.end());
    std::sort(out.begin(), out.end());
    return out;
  }

  /// FNV-1a over the three sorted partitions; equal hashes identify
  /// identical splits in reports.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xFFU;
        h *= 1099511628211ULL;
      }
    };
    for (const auto* part : {&train, &val, &test}) {
      mix(part->size());
      for (Index i : *part) mix(i);
    }
    return h;
  }
};

namespace detail {

// Largest-remainder apportionment of n items over three ratios, every share
// at least one.
inline std::array<Index, 3> apportion(Index n, const SplitRatios& r) {
  const std::array<double, 3> ideal{r.train * static_cast<double>(n), r.val * static_cast<double>(n),
                                    r.test * static_cast<double>(n)};
  std::array<Index, 3> count{};
  Index used = 0;
  for (int k = 0; k < 3; ++k) {
    count[k] = static_cast<Index>(std::floor(ideal[k]));
    used += count[k];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return ideal[a] - std::floor(ideal[a]) > ideal[b] - std::floor(ideal[b]);
  });
  for (int k = 0; used < n; ++k, ++used) ++count[order[k % 3]];
  for (int k = 0; k < 3; ++k) {
    if (count[k] == 0) {
      const auto largest = std::max_element(count.begin(), count.end());
      --*largest;
      count[k] = 1;
    }
  }
  return count;
}

}  // namespace detail

/// Stratified three-way split of `universe` (any subset of row indices).
/// Each class is shuffled independently with a generator seeded by `seed`;
/// partitions are returned sorted.
inline TriSplit stratified_split(const Dataset& data, std::span<const Index> universe, const SplitRatios& ratios,
                                 std::uint64_t seed) {
  ratios.validate();
  IndexSet sorted(universe.begin(), universe.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    fail(Errc::ConfigError, "split universe contains duplicate indices");
  }

  TriSplit split;
  split.seed = seed;
  split.ratios = ratios;
  std::mt19937_64 rng(seed);
  for (ClassTag tag : {ClassTag::NC, ClassTag::DG}) {
    IndexSet members = filter_class(data, sorted, tag);
    if (members.size() < 3) {
      fail(Errc::TooFewSamples, "class " + std::string(class_name(tag)) + " has " +
                                    std::to_string(members.size()) + " samples; 3 needed to fill every partition");
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto count = detail::apportion(members.size(), ratios);
    auto it = members.begin();
    for (auto [part, k] : {std::pair{&split.train, 0}, std::pair{&split.val, 1}, std::pair{&split.test, 2}}) {
      const auto next = it + static_cast<std::ptrdiff_t>(count[static_cast<Index>(k)]);
      part->insert(part->end(), it, next);
      it = next;
    }
  }
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

inline TriSplit holdout_split(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed) {
  IndexSet all(data.size());
  std::iota(all.begin(), all.end(), Index{0});
  return stratified_split(data, all, ratios, seed);
}

/// Re-splits train ∪ val of an outer split; the outer test set is never touched.
inline TriSplit merge_and_resplit(const TriSplit& outer, const Dataset& data, const SplitRatios& ratios,
                                  std::uint64_t seed) {
  for (const auto* part : {&outer.train, &outer.val, &outer.test}) {
    for (Index i : *part) {
      if (i >= data.size()) fail(Errc::ConfigError, "split index out of range for dataset");
    }
  }
  return stratified_split(data, outer.train_val(), ratios, seed);
}

// ---------------------------------------------------------------------------
// Standardization

struct Scaler {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd sd;

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.size()) fail(Errc::DimensionMismatch, "scaler dimension differs from data");
    return (x.rowwise() - mean).array().rowwise() / sd.array();
  }
};

inline Scaler fit_scaler(const Dataset& data, std::span<const Index> idx) {
  if (idx.empty()) fail(Errc::EmptyInput, "cannot fit a scaler on an empty index set");
  const Eigen::MatrixXd x = select_rows(data.features(), idx);
  Scaler s;
  s.mean = x.colwise().mean();
  const double n = static_cast<double>(x.rows());
  s.sd = Eigen::RowVectorXd::Ones(x.cols());
  if (x.rows() > 1) {
    const Eigen::MatrixXd centered = x.rowwise() - s.mean;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double sd = std::sqrt(centered.col(j).squaredNorm() / (n - 1.0));
      // constant columns pass through centered
      if (sd > 1e-12 * std::max(1.0, std::abs(s.mean(j)))) s.sd(j) = sd;
    }
  }
  return s;
}

inline Dataset apply_scaler(const Scaler& scaler, const Dataset& data) {
  return data.with_features(scaler.transform(data.features()), data.feature_names());
}

// ---------------------------------------------------------------------------
// PCA

struct PcaProjection {
  Eigen::MatrixXd components;   // d x k, orthonormal columns
  Eigen::RowVectorXd mean;      // centering
  Eigen::VectorXd eigenvalues;  // all d, descending
  double retained_ratio = 1.0;
  bool degenerate = false;  // zero total variance: identity projection

  Index k() const noexcept { return static_cast<Index>(components.cols()); }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.size()) fail(Errc::DimensionMismatch, "projection dimension differs from data");
    return (x.rowwise() - mean) * components;
  }
};

inline PcaProjection pca_fit(const Dataset& data, std::span<const Index> idx, double precision) {
  if (!(precision > 0.0 && precision <= 1.0)) fail(Errc::ConfigError, "PCA precision must lie in (0, 1]");
  if (idx.size() < 2) fail(Errc::TooFewSamples, "PCA needs at least two samples");
  const Eigen::MatrixXd x = select_rows(data.features(), idx);
  const auto d = x.cols();

  PcaProjection proj;
  proj.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - proj.mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  // Eigen returns ascending order
  Eigen::VectorXd values = solver.eigenvalues().reverse().cwiseMax(0.0);
  Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();
  const double total = values.sum();
  proj.eigenvalues = values;

  if (!(total > 0.0)) {
    proj.components = Eigen::MatrixXd::Identity(d, d);
    proj.retained_ratio = 1.0;
    proj.degenerate = true;
    return proj;
  }

  Eigen::Index k = 0;
  double cumulative = 0.0;
  while (k < d) {
    cumulative += values(k);
    ++k;
    if (cumulative / total >= precision - 1e-12) break;
  }
  // sign convention: largest-magnitude loading positive
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    vectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, c) < 0.0) vectors.col(c) *= -1.0;
  }
  proj.components = vectors.leftCols(k);
  proj.retained_ratio = std::min(1.0, cumulative / total);
  return proj;
}

inline Dataset pca_apply(const PcaProjection& proj, const Dataset& data) {
  std::vector<std::string> names;
  if (proj.degenerate) {
    names = data.feature_names();
  } else {
    for (Index c = 0; c < proj.k(); ++c) names.push_back("pc" + std::to_string(c + 1));
  }
  return data.with_features(proj.transform(data.features()), std::move(names));
}

// ---------------------------------------------------------------------------
// Feature pipeline: fitted on a training partition, applied to anything.

struct FeaturePipeline {
  bool standardize = true;
  bool pca = false;
  double pca_precision = 0.9999;
};

struct FittedFeatures {
  std::optional<Scaler> scaler;
  std::optional<PcaProjection> pca;

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out = scaler ? scaler->transform(x) : x;
    if (pca) out = pca->transform(out);
    return out;
  }
};

inline FittedFeatures fit_features(const FeaturePipeline& pipeline, const Dataset& data, std::span<const Index> idx) {
  FittedFeatures fitted;
  Dataset current = data;
  if (pipeline.standardize) {
    fitted.scaler = fit_scaler(data, idx);
    current = apply_scaler(*fitted.scaler, data);
  }
  if (pipeline.pca) fitted.pca = pca_fit(current, idx, pipeline.pca_precision);
  return fitted;
}

}  // namespace iae
