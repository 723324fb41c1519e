#include "evgraph/datagen.hpp"

#include "evgraph/pae.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace evgraph {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kUnlabeled: return "unlabeled";
  }
  return "unlabeled";
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  if (s == "unlabeled") return Split::kUnlabeled;
  return std::nullopt;
}

std::vector<Index> LabelMask::indices(Split s) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(static_cast<Index>(i));
  }
  return out;
}

void LabelMask::validate() const {
  if (labels.size() != splits.size()) throw ConfigError("label mask: labels and splits differ in length");
  if (num_classes < 2) throw ConfigError("label mask: at least two classes required");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (splits[i] == Split::kUnlabeled) continue;
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ConfigError("label mask: subject " + std::to_string(i) + " in split " + std::string(to_string(splits[i])) +
                        " has no valid class index");
    }
  }
}

std::string_view to_string(Informativeness i) {
  switch (i) {
    case Informativeness::kNoise: return "noise";
    case Informativeness::kPartial: return "partial";
    case Informativeness::kFull: return "full";
  }
  return "full";
}

std::optional<Informativeness> parse_informativeness(std::string_view s) {
  if (s == "noise") return Informativeness::kNoise;
  if (s == "partial") return Informativeness::kPartial;
  if (s == "full") return Informativeness::kFull;
  return std::nullopt;
}

std::string_view to_string(GraphKind k) {
  switch (k) {
    case GraphKind::kAdaptive: return "adaptive";
    case GraphKind::kRandom: return "random";
    case GraphKind::kAffinity: return "affinity";
  }
  return "adaptive";
}

std::optional<GraphKind> parse_graph_kind(std::string_view s) {
  if (s == "adaptive") return GraphKind::kAdaptive;
  if (s == "random") return GraphKind::kRandom;
  if (s == "affinity") return GraphKind::kAffinity;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

struct CsvRow {
  std::size_t line;
  std::vector<std::string> cells;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_cells(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Header is returned as the first row; blank lines are skipped.
std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    rows.push_back({n, split_cells(line)});
  }
  if (rows.empty()) throw ParseError(path.string(), 0, "missing header");
  const auto width = rows.front().cells.size();
  for (const auto& r : rows) {
    if (r.cells.size() != width) {
      throw ParseError(path.string(), r.line,
                       "ragged row: " + std::to_string(r.cells.size()) + " cells, header has " + std::to_string(width));
    }
  }
  if (rows.front().cells.front() != "subject_id") {
    throw ParseError(path.string(), rows.front().line, "first column must be subject_id");
  }
  return rows;
}

double parse_number(const std::string& cell, const std::filesystem::path& path, std::size_t line,
                     const std::string& column) {
  if (cell.empty()) throw ParseError(path.string(), line, "missing value in column " + column);
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError(path.string(), line, "non-numeric value '" + cell + "' in column " + column);
  }
  return v;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

Dataset load_dataset(const std::filesystem::path& features_path, const std::filesystem::path& metadata_path,
                     const std::filesystem::path& labels_path) {
  Dataset data;

  // features
  const auto frows = read_csv(features_path);
  const auto& fheader = frows.front().cells;
  const Index n = static_cast<Index>(frows.size()) - 1;
  const Index c = static_cast<Index>(fheader.size()) - 1;
  if (n == 0) throw ParseError(features_path.string(), frows.front().line, "no subjects");
  if (c == 0) throw ParseError(features_path.string(), frows.front().line, "no feature columns");
  data.features.resize(n, c);
  std::unordered_map<std::string, Index> index_of;
  std::vector<std::size_t> feature_line(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& row = frows[static_cast<std::size_t>(i) + 1];
    const auto& id = row.cells[0];
    if (id.empty()) throw ParseError(features_path.string(), row.line, "empty subject_id");
    if (!index_of.emplace(id, i).second) throw ParseError(features_path.string(), row.line, "duplicate subject " + id);
    data.ids.push_back(id);
    feature_line[static_cast<std::size_t>(i)] = row.line;
    for (Index j = 0; j < c; ++j) {
      data.features(i, j) = parse_number(row.cells[static_cast<std::size_t>(j) + 1], features_path, row.line,
                                         fheader[static_cast<std::size_t>(j) + 1]);
    }
  }

  // metadata schema
  const auto mrows = read_csv(metadata_path);
  const auto& mheader = mrows.front().cells;
  for (std::size_t j = 1; j < mheader.size(); ++j) {
    ColumnInfo col;
    const auto& h = mheader[j];
    const auto colon = h.rfind(':');
    col.name = h.substr(0, colon);
    if (colon != std::string::npos) {
      const auto type = h.substr(colon + 1);
      if (type == "cat") col.categorical = true;
      else if (type != "num") throw ParseError(metadata_path.string(), mrows.front().line, "unknown column type '" + type + "'");
    }
    if (col.name.empty()) throw ParseError(metadata_path.string(), mrows.front().line, "empty column name");
    data.columns.push_back(std::move(col));
  }
  if (data.columns.empty()) throw ParseError(metadata_path.string(), mrows.front().line, "no metadata columns");

  std::vector<const CsvRow*> meta_of(static_cast<std::size_t>(n), nullptr);
  for (std::size_t r = 1; r < mrows.size(); ++r) {
    const auto& row = mrows[r];
    auto it = index_of.find(row.cells[0]);
    if (it == index_of.end()) throw ParseError(metadata_path.string(), row.line, "unknown subject " + row.cells[0]);
    auto& slot = meta_of[static_cast<std::size_t>(it->second)];
    if (slot) throw ParseError(metadata_path.string(), row.line, "duplicate subject " + row.cells[0]);
    slot = &row;
  }
  for (Index i = 0; i < n; ++i) {
    if (!meta_of[static_cast<std::size_t>(i)]) {
      throw ParseError(features_path.string(), feature_line[static_cast<std::size_t>(i)],
                       "subject " + data.ids[static_cast<std::size_t>(i)] + " has no metadata row");
    }
  }
  for (std::size_t j = 0; j < data.columns.size(); ++j) {
    auto& col = data.columns[j];
    if (!col.categorical) {
      data.metadata_names.push_back(col.name);
      continue;
    }
    std::set<std::string> cats;
    for (const auto* row : meta_of) {
      const auto& v = row->cells[j + 1];
      if (v.empty()) throw ParseError(metadata_path.string(), row->line, "missing value in column " + col.name);
      cats.insert(v);
    }
    col.categories.assign(cats.begin(), cats.end());
    for (const auto& cat : col.categories) data.metadata_names.push_back(col.name + "=" + cat);
  }
  data.metadata.setZero(n, static_cast<Index>(data.metadata_names.size()));
  for (Index i = 0; i < n; ++i) {
    const auto& row = *meta_of[static_cast<std::size_t>(i)];
    Index out = 0;
    for (std::size_t j = 0; j < data.columns.size(); ++j) {
      const auto& col = data.columns[j];
      const auto& v = row.cells[j + 1];
      if (col.categorical) {
        const auto pos = std::lower_bound(col.categories.begin(), col.categories.end(), v) - col.categories.begin();
        data.metadata(i, out + pos) = 1.0;
        out += static_cast<Index>(col.categories.size());
      } else {
        data.metadata(i, out++) = parse_number(v, metadata_path, row.line, col.name);
      }
    }
  }

  // labels
  data.mask.labels.assign(static_cast<std::size_t>(n), kNoLabel);
  data.mask.splits.assign(static_cast<std::size_t>(n), Split::kUnlabeled);
  const auto lrows = read_csv(labels_path);
  const auto& lheader = lrows.front().cells;
  if (lheader.size() != 3 || lheader[1] != "class" || lheader[2] != "split") {
    throw ParseError(labels_path.string(), lrows.front().line, "header must be subject_id,class,split");
  }
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  int max_label = -1;
  for (std::size_t r = 1; r < lrows.size(); ++r) {
    const auto& row = lrows[r];
    auto it = index_of.find(row.cells[0]);
    if (it == index_of.end()) throw ParseError(labels_path.string(), row.line, "unknown subject " + row.cells[0]);
    const auto i = static_cast<std::size_t>(it->second);
    if (seen[i]) throw ParseError(labels_path.string(), row.line, "duplicate subject " + row.cells[0]);
    seen[i] = true;
    auto split = parse_split(row.cells[2]);
    if (!split) throw ParseError(labels_path.string(), row.line, "unknown split '" + row.cells[2] + "'");
    data.mask.splits[i] = *split;
    if (row.cells[1].empty()) {
      if (*split != Split::kUnlabeled) {
        throw ParseError(labels_path.string(), row.line, "missing class for " + std::string(to_string(*split)) + " subject");
      }
      continue;
    }
    int label = 0;
    const auto& cell = row.cells[1];
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || label < 0) {
      throw ParseError(labels_path.string(), row.line, "class must be a non-negative integer, got '" + cell + "'");
    }
    data.mask.labels[i] = label;
    max_label = std::max(max_label, label);
  }
  data.mask.num_classes = std::max(2, max_label + 1);
  if (data.mask.indices(Split::kTrain).empty()) {
    throw ParseError(labels_path.string(), lrows.back().line, "no training labels");
  }
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& features_path,
                   const std::filesystem::path& metadata_path, const std::filesystem::path& labels_path) {
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(features_path);
    out << "subject_id";
    for (Index j = 0; j < data.features.cols(); ++j) out << ",f" << j;
    out << "\n";
    for (Index i = 0; i < data.size(); ++i) {
      out << data.ids[static_cast<std::size_t>(i)];
      for (Index j = 0; j < data.features.cols(); ++j) out << "," << format_number(data.features(i, j));
      out << "\n";
    }
  }
  {
    auto out = open(metadata_path);
    out << "subject_id";
    for (const auto& name : data.metadata_names) out << "," << name << ":num";
    out << "\n";
    for (Index i = 0; i < data.size(); ++i) {
      out << data.ids[static_cast<std::size_t>(i)];
      for (Index j = 0; j < data.metadata.cols(); ++j) out << "," << format_number(data.metadata(i, j));
      out << "\n";
    }
  }
  {
    auto out = open(labels_path);
    out << "subject_id,class,split\n";
    for (Index i = 0; i < data.size(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      out << data.ids[k] << ",";
      if (data.mask.labels[k] != kNoLabel) out << data.mask.labels[k];
      out << "," << to_string(data.mask.splits[k]) << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// synthetic

void SynthSpec::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0)) throw ConfigError(std::string("synthetic: ") + what + " must be positive");
  };
  positive(n_subjects, "n_subjects");
  positive(feature_dim, "feature_dim");
  positive(n_sites, "n_sites");
  if (n_classes < 2) throw ConfigError("synthetic: n_classes must be >= 2");
  if (metadata_dim < 2) throw ConfigError("synthetic: metadata_dim must be >= 2");
  if (!(feature_noise >= 0) || !(class_separation >= 0) || !(site_effect >= 0)) {
    throw ConfigError("synthetic: noise, separation and site effect must be non-negative");
  }
  if (!(partial_flip >= 0 && partial_flip <= 1)) throw ConfigError("synthetic: partial_flip must lie in [0,1]");
  if (!(train_fraction > 0 && val_fraction >= 0 && train_fraction + val_fraction <= 1)) {
    throw ConfigError("synthetic: invalid split fractions");
  }
  if (n_subjects < n_classes) throw ConfigError("synthetic: fewer subjects than classes");
}

namespace {

Eigen::RowVectorXd random_direction(int dim, double length, RngStream& rng) {
  Eigen::RowVectorXd v(dim);
  for (int j = 0; j < dim; ++j) v(j) = rng.normal();
  const double norm = v.norm();
  return norm > 0 ? Eigen::RowVectorXd(v * (length / norm)) : v;
}

template <typename T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  // Fisher-Yates with our own index draws so the order is library independent.
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  RngStream rng(spec.seed);
  const int n = spec.n_subjects;

  std::vector<int> cls(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) cls[static_cast<std::size_t>(i)] = i % spec.n_classes;
  shuffle(cls, rng);
  std::vector<int> site(static_cast<std::size_t>(n));
  for (auto& s : site) s = static_cast<int>(rng.next() % static_cast<std::uint64_t>(spec.n_sites));

  std::vector<Eigen::RowVectorXd> centroid, offset;
  for (int c = 0; c < spec.n_classes; ++c) centroid.push_back(random_direction(spec.feature_dim, spec.class_separation, rng));
  for (int s = 0; s < spec.n_sites; ++s) offset.push_back(random_direction(spec.feature_dim, spec.site_effect, rng));

  Dataset data;
  data.features.resize(n, spec.feature_dim);
  data.metadata.resize(n, spec.metadata_dim);
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    data.ids.push_back("s" + std::to_string(i));
    for (int j = 0; j < spec.feature_dim; ++j) {
      data.features(i, j) = centroid[static_cast<std::size_t>(cls[k])](j) + offset[static_cast<std::size_t>(site[k])](j) +
                            spec.feature_noise * rng.normal();
    }
  }
  // drawn from a side stream so the main stream is the same at every level
  RngStream code_rng = rng.split(1);
  const int n_nuisance = std::max(spec.metadata_dim - 2, 0);
  Matrix group_code(spec.n_classes * spec.n_sites, n_nuisance);
  for (Index g = 0; g < group_code.rows(); ++g) {
    for (Index j = 0; j < n_nuisance; ++j) group_code(g, j) = code_rng.normal();
  }
  auto other_class = [&](int y) {
    const int shift = 1 + static_cast<int>(rng.next() % static_cast<std::uint64_t>(spec.n_classes - 1));
    return (y + shift) % spec.n_classes;
  };
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const int coin_class = static_cast<int>(rng.next() % static_cast<std::uint64_t>(spec.n_classes));
    const int coin_site = static_cast<int>(rng.next() % static_cast<std::uint64_t>(spec.n_sites));
    const bool flip = rng.uniform() < spec.partial_flip;
    const int alternative = other_class(cls[k]);
    double m0 = 0, m1 = 0;
    switch (spec.informativeness) {
      case Informativeness::kNoise:
        m0 = coin_class;
        m1 = coin_site;
        break;
      case Informativeness::kPartial:
        m0 = flip ? alternative : cls[k];
        m1 = coin_site;
        break;
      case Informativeness::kFull:
        m0 = cls[k];
        m1 = site[k];
        break;
    }
    data.metadata(i, 0) = m0;
    data.metadata(i, 1) = m1;
    const int group = cls[k] * spec.n_sites + site[k];
    for (int j = 2; j < spec.metadata_dim; ++j) {
      const double draw = rng.normal();
      data.metadata(i, j) = spec.informativeness == Informativeness::kFull ? group_code(group, j - 2) : draw;
    }
  }
  data.metadata_names = {"group_a", "group_b"};
  for (int j = 2; j < spec.metadata_dim; ++j) data.metadata_names.push_back("nuisance_" + std::to_string(j - 2));
  for (const auto& name : data.metadata_names) data.columns.push_back({name, false, {}});

  data.mask.num_classes = spec.n_classes;
  data.mask.labels = cls;
  data.mask.splits.assign(static_cast<std::size_t>(n), Split::kTest);
  for (int c = 0; c < spec.n_classes; ++c) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i) {
      if (cls[static_cast<std::size_t>(i)] == c) members.push_back(i);
    }
    shuffle(members, rng);
    const auto m = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::lround(spec.train_fraction * m));
    const auto n_val = static_cast<std::size_t>(std::lround(spec.val_fraction * m));
    for (std::size_t r = 0; r < members.size(); ++r) {
      auto& s = data.mask.splits[static_cast<std::size_t>(members[r])];
      s = r < n_train ? Split::kTrain : (r < n_train + n_val ? Split::kVal : Split::kTest);
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// baseline graphs

double column_similarity(double a, double b) { return std::exp(-std::abs(a - b)); }

PopulationGraph build_baseline_graph(GraphKind kind, const Dataset& data, const BaselineGraphParams& params) {
  const Index n = data.size();
  Matrix w = Matrix::Identity(n, n);
  switch (kind) {
    case GraphKind::kAdaptive:
      throw ConfigError("build_baseline_graph: adaptive graphs are built by the association encoder");
    case GraphKind::kRandom: {
      if (!(params.random_p >= 0 && params.random_p <= 1)) throw ConfigError("random graph: p must lie in [0,1]");
      RngStream rng(params.seed);
      for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
          if (rng.uniform() < params.random_p) w(i, j) = w(j, i) = 1.0;
        }
      }
      break;
    }
    case GraphKind::kAffinity: {
      const Index m = data.metadata.cols();
      const auto& beta = params.affinity_beta;
      if (beta.size() != 1 && beta.size() != static_cast<std::size_t>(m)) {
        throw ConfigError("affinity graph: need 1 or " + std::to_string(m) + " thresholds, got " +
                          std::to_string(beta.size()));
      }
      Matrix z = normalize_metadata(Tensor::constant(data.metadata), fit_norm_stats(data.metadata)).value();
      for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
          bool linked = true;
          for (Index c = 0; c < m && linked; ++c) {
            const double b = beta.size() == 1 ? beta[0] : beta[static_cast<std::size_t>(c)];
            linked = column_similarity(z(i, c), z(j, c)) > b;
          }
          if (linked) w(i, j) = w(j, i) = 1.0;
        }
      }
      break;
    }
  }
  return PopulationGraph{Tensor::constant(data.features), Tensor::constant(std::move(w))};
}

}  // namespace evgraph
