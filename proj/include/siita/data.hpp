#pragma once

// Dataset ingestion, train/test splits and model checkpoints.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "siita/error.hpp"
#include "siita/model.hpp"
#include "siita/tensor.hpp"

namespace siita {

struct Dataset {
  SparseTensor tensor;
  SideInfoSet side;
  std::string name;
};

struct Split {
  SparseTensor train;
  SparseTensor test;
  double missing_pct = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<std::string_view> split_on(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t at = 0;
  while (true) {
    const auto pos = line.find(sep, at);
    out.push_back(line.substr(at, pos == std::string_view::npos ? std::string_view::npos : pos - at));
    if (pos == std::string_view::npos) break;
    at = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    // strtod accepts the same forms as the checkpoint writer emits
    std::string tmp(s);
    char* end = nullptr;
    out = std::strtod(tmp.c_str(), &end);
    return end == tmp.c_str() + tmp.size();
  } else {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

}  // namespace detail

// Whitespace-separated `i1 ... iN value` lines, 0-based, `#` comments.
inline SparseTensor load_tensor(const std::string& path, const Shape& shape) {
  auto in = detail::open_input(path);
  const std::size_t n = shape.order();
  std::vector<std::uint32_t> idx;
  std::vector<double> vals;
  std::map<std::vector<std::uint32_t>, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body(line);
    if (auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    const auto tok = detail::split_ws(body);
    if (tok.empty()) continue;
    if (tok.size() != n + 1)
      throw DataError(path, lineno, "expected " + std::to_string(n + 1) + " fields, got " + std::to_string(tok.size()));
    std::vector<std::uint32_t> key(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::uint64_t v = 0;
      if (!detail::parse_number(tok[k], v)) throw DataError(path, lineno, "bad index '" + std::string(tok[k]) + "'");
      if (v >= shape[k])
        throw DataError(path, lineno, "index " + std::to_string(v) + " out of bounds for mode " + std::to_string(k) +
                                          " (size " + std::to_string(shape[k]) + ")");
      key[k] = static_cast<std::uint32_t>(v);
    }
    double value = 0.0;
    if (!detail::parse_number(tok[n], value) || !std::isfinite(value))
      throw DataError(path, lineno, "bad value '" + std::string(tok[n]) + "'");
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh)
      throw DataError(path, lineno, "duplicate index (first seen on line " + std::to_string(it->second) + ")");
    idx.insert(idx.end(), key.begin(), key.end());
    vals.push_back(value);
  }
  return SparseTensor(shape, std::move(idx), std::move(vals));
}

inline void save_tensor(const SparseTensor& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "# shape " << t.shape().str() << "\n";
  char buf[64];
  for (const auto& e : t.entries()) {
    for (auto i : e.index) out << i << ' ';
    std::snprintf(buf, sizeof buf, "%.17g", e.value);
    out << buf << '\n';
  }
}

// MatrixMarket coordinate file or headerless CSV; `identity:<n>` yields the
// identity marker. `expected_rows`, when nonzero, is checked.
inline SideInfo load_side_info(const std::string& spec, Index expected_rows = 0) {
  auto check_rows = [&](SideInfo s) {
    if (expected_rows && s.rows() != expected_rows)
      throw DataError(spec + ": side info has " + std::to_string(s.rows()) + " rows, expected " +
                      std::to_string(expected_rows));
    return s;
  };

  constexpr std::string_view kIdentity = "identity:";
  if (spec.rfind(kIdentity, 0) == 0) {
    Index n = 0;
    if (!detail::parse_number(std::string_view(spec).substr(kIdentity.size()), n) || n == 0)
      throw DataError("bad identity token '" + spec + "'");
    return check_rows(SideInfo::identity(n));
  }

  auto in = detail::open_input(spec);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw DataError(spec + ": empty side-information file");
  ++lineno;

  if (line.rfind("%%MatrixMarket", 0) == 0) {
    const auto head = detail::split_ws(line);
    if (head.size() < 5 || head[1] != "matrix" || head[2] != "coordinate")
      throw DataError(spec, lineno, "only 'matrix coordinate' MatrixMarket files are supported");
    const bool pattern = head[3] == "pattern";
    if (!pattern && head[3] != "real" && head[3] != "integer")
      throw DataError(spec, lineno, "unsupported MatrixMarket field '" + std::string(head[3]) + "'");
    if (head[4] != "general") throw DataError(spec, lineno, "only 'general' symmetry is supported");

    Index rows = 0, cols = 0;
    std::size_t nnz = 0;
    bool have_size = false;
    std::vector<std::tuple<Index, Index, double>> trip;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '%') continue;
      const auto tok = detail::split_ws(line);
      if (tok.empty()) continue;
      if (!have_size) {
        if (tok.size() != 3 || !detail::parse_number(tok[0], rows) || !detail::parse_number(tok[1], cols) ||
            !detail::parse_number(tok[2], nnz) || rows == 0 || cols == 0)
          throw DataError(spec, lineno, "malformed size line");
        have_size = true;
        continue;
      }
      Index r = 0, c = 0;
      double v = 1.0;
      if (tok.size() != (pattern ? 2u : 3u) || !detail::parse_number(tok[0], r) || !detail::parse_number(tok[1], c) ||
          (!pattern && !detail::parse_number(tok[2], v)))
        throw DataError(spec, lineno, "malformed entry");
      if (r < 1 || r > rows || c < 1 || c > cols) throw DataError(spec, lineno, "entry out of declared bounds");
      trip.emplace_back(r - 1, c - 1, v);
    }
    if (!have_size) throw DataError(spec + ": missing MatrixMarket size line");
    if (trip.size() != nnz)
      throw DataError(spec + ": declared " + std::to_string(nnz) + " entries, found " + std::to_string(trip.size()));
    return check_rows(SideInfo::sparse(SparseSide::from_triplets(rows, cols, std::move(trip))));
  }

  // Headerless CSV.
  std::vector<double> vals;
  Index cols = 0, rows = 0;
  do {
    if (detail::trim(line).empty()) {
      ++lineno;
      continue;
    }
    const auto fields = detail::split_on(line, ',');
    if (cols == 0) cols = fields.size();
    if (fields.size() != cols)
      throw DataError(spec, lineno, "expected " + std::to_string(cols) + " columns, got " + std::to_string(fields.size()));
    for (auto f : fields) {
      double v = 0.0;
      if (!detail::parse_number(f, v)) throw DataError(spec, lineno, "bad number '" + std::string(f) + "'");
      vals.push_back(v);
    }
    ++rows;
    ++lineno;
  } while (std::getline(in, line));
  if (rows == 0) throw DataError(spec + ": no rows");
  return check_rows(SideInfo::dense(DenseMatrix(rows, cols, std::move(vals))));
}

inline void save_side_info_mm(const SideInfo& side, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  const DenseMatrix m = side.to_dense();
  std::size_t nnz = 0;
  for (double v : m.values()) nnz += v != 0.0;
  out << "%%MatrixMarket matrix coordinate real general\n" << m.rows() << ' ' << m.cols() << ' ' << nnz << '\n';
  char buf[64];
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      if (m(r, c) != 0.0) {
        std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
        out << r + 1 << ' ' << c + 1 << ' ' << buf << '\n';
      }
}

inline constexpr std::int64_t kSecondsPerWeek = 604800;

// Result of reading a MovieLens 100K `u.data` file.
struct MovieLensRatings {
  Dataset dataset;                   // user x item x week, identity side info
  std::vector<std::int64_t> user_ids;  // compact id -> source id
  std::vector<std::int64_t> item_ids;
};

// Tab-separated `user item rating timestamp`. Ids are compacted to 0-based
// positions in ascending source order; week = (ts - min_ts + offset) / 604800.
inline MovieLensRatings movielens_ingest(const std::string& ratings_path, std::int64_t week_offset_seconds = 0) {
  auto in = detail::open_input(ratings_path);
  struct Row {
    std::int64_t user, item, ts;
    double rating;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    Row r{};
    if (tok.size() != 4 || !detail::parse_number(tok[0], r.user) || !detail::parse_number(tok[1], r.item) ||
        !detail::parse_number(tok[2], r.rating) || !detail::parse_number(tok[3], r.ts))
      throw DataError(ratings_path, lineno, "expected 'user item rating timestamp'");
    rows.push_back(r);
  }
  if (rows.empty()) throw DataError(ratings_path + ": no ratings");

  std::set<std::int64_t> users, items;
  std::int64_t min_ts = rows.front().ts;
  for (const auto& r : rows) {
    users.insert(r.user);
    items.insert(r.item);
    min_ts = std::min(min_ts, r.ts);
  }
  MovieLensRatings out;
  out.user_ids.assign(users.begin(), users.end());
  out.item_ids.assign(items.begin(), items.end());
  auto pos = [](const std::vector<std::int64_t>& ids, std::int64_t id) {
    return static_cast<std::uint32_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };

  std::vector<std::uint32_t> idx;
  std::vector<double> vals;
  std::uint32_t max_week = 0;
  for (const auto& r : rows) {
    const std::int64_t shifted = r.ts - min_ts + week_offset_seconds;
    if (shifted < 0) throw DataError("week offset moves a rating before week 0");
    const auto week = static_cast<std::uint32_t>(shifted / kSecondsPerWeek);
    max_week = std::max(max_week, week);
    idx.insert(idx.end(), {pos(out.user_ids, r.user), pos(out.item_ids, r.item), week});
    vals.push_back(r.rating);
  }
  Shape shape{out.user_ids.size(), out.item_ids.size(), Index{max_week} + 1};
  try {
    out.dataset.tensor = SparseTensor(shape, std::move(idx), std::move(vals));
  } catch (const DataError& e) {
    throw DataError(ratings_path + ": " + e.what());
  }
  out.dataset.side = {SideInfo::identity(shape[0]), SideInfo::identity(shape[1]), SideInfo::identity(shape[2])};
  out.dataset.name = "movielens-100k";
  return out;
}

// Item labels: item index -> category ids (multi-label allowed).
using Labels = std::vector<std::vector<int>>;

// `u.item` pipe-separated: id|title|date|video date|url|g_0|...|g_18.
// Produces the binary item x genre matrix aligned with `item_ids` and labels.
struct MovieLensGenres {
  SideInfo side;
  Labels labels;
};

inline MovieLensGenres movielens_genres(const std::string& item_path, const std::vector<std::int64_t>& item_ids) {
  auto in = detail::open_input(item_path);
  std::map<std::int64_t, std::vector<int>> flags;
  std::size_t genres = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_on(line, '|');
    if (f.size() < 6) throw DataError(item_path, lineno, "too few fields");
    const std::size_t g = f.size() - 5;
    if (genres == 0) genres = g;
    if (g != genres) throw DataError(item_path, lineno, "inconsistent genre column count");
    std::int64_t id = 0;
    if (!detail::parse_number(f[0], id)) throw DataError(item_path, lineno, "bad item id");
    std::vector<int> row;
    for (std::size_t k = 0; k < g; ++k) {
      int v = 0;
      if (!detail::parse_number(f[5 + k], v) || (v != 0 && v != 1))
        throw DataError(item_path, lineno, "genre flags must be 0 or 1");
      if (v) row.push_back(static_cast<int>(k));
    }
    flags[id] = std::move(row);
  }
  if (genres == 0) throw DataError(item_path + ": no items");

  MovieLensGenres out;
  std::vector<std::tuple<Index, Index, double>> trip;
  out.labels.resize(item_ids.size());
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    auto it = flags.find(item_ids[i]);
    if (it == flags.end()) throw DataError(item_path + ": no genre row for item " + std::to_string(item_ids[i]));
    for (int g : it->second) trip.emplace_back(i, static_cast<Index>(g), 1.0);
    out.labels[i] = it->second;
  }
  out.side = SideInfo::sparse(SparseSide::from_triplets(item_ids.size(), genres, std::move(trip)));
  return out;
}

// `item_id,category` lines; an item may appear on several lines.
inline Labels load_labels(const std::string& path, Index items) {
  auto in = detail::open_input(path);
  std::map<std::string, int> category_ids;
  Labels labels(items);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty() || line[0] == '#') continue;
    const auto f = detail::split_on(line, ',');
    Index item = 0;
    if (f.size() != 2 || !detail::parse_number(f[0], item))
      throw DataError(path, lineno, "expected 'item_id,category'");
    if (item >= items) throw DataError(path, lineno, "item " + std::to_string(item) + " out of range");
    const auto cat = std::string(detail::trim(f[1]));
    const auto [it, _] = category_ids.emplace(cat, static_cast<int>(category_ids.size()));
    labels[item].push_back(it->second);
  }
  return labels;
}

inline Split make_split(const SparseTensor& tensor, double missing_pct, std::uint64_t seed) {
  if (!(missing_pct > 0.0 && missing_pct < 1.0)) throw ConfigError("missing_pct must lie in (0, 1)");
  const std::size_t n = tensor.nnz();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_test = static_cast<std::size_t>(std::llround(missing_pct * static_cast<double>(n)));
  std::vector<std::size_t> test(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return Split{tensor.select(train, tensor.shape()), tensor.select(test, tensor.shape()), missing_pct, seed};
}

// Checkpoint format (line oriented, version 1):
//
//   siita-checkpoint 1
//   step <t>
//   ranks <r_1> ... <r_N>
//   features <M_1> ... <M_N>
//   lambda_g <v>
//   lambda <v_1> ... <v_N>
//   gamma <v>
//   inner_steps <K>
//   nonnegative <0|1>
//   seed <s>
//   core
//   <r_1*...*r_N values, row-major, one per line>
//   factor <i>          (for each mode, M_i*r_i values follow, row-major)
//   end
//
// Values are decimal with 17 significant digits, which round-trips binary64.
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  TuckerModel model;
  Hyperparams hp;
  std::size_t step = 0;
};

inline void checkpoint_save(const TuckerModel& model, const Hyperparams& hp, std::size_t step, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path);
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "siita-checkpoint " << kCheckpointVersion << "\n";
  out << "step " << step << "\n";
  out << "ranks";
  for (Index r : model.ranks().dims()) out << ' ' << r;
  out << "\nfeatures";
  for (const auto& f : model.factors) out << ' ' << f.rows();
  out << "\nlambda_g " << num(hp.lambda_g) << "\nlambda";
  for (std::size_t k = 0; k < model.order(); ++k) out << ' ' << num(hp.lambda_for(k));
  out << "\ngamma " << num(hp.gamma) << "\ninner_steps " << hp.inner_steps << "\nnonnegative "
      << (hp.nonnegative ? 1 : 0) << "\nseed " << hp.seed << "\ncore\n";
  for (double v : model.core.values()) out << num(v) << '\n';
  for (std::size_t k = 0; k < model.order(); ++k) {
    out << "factor " << k << '\n';
    for (double v : model.factors[k].values()) out << num(v) << '\n';
  }
  out << "end\n";
  if (!out) throw DataError("failed writing checkpoint " + path);
}

inline Checkpoint checkpoint_load(const std::string& path) {
  auto in = detail::open_input(path);
  std::size_t lineno = 0;
  std::string line;
  auto next = [&]() -> std::vector<std::string_view> {
    if (!std::getline(in, line)) throw DataError(path, lineno + 1, "corrupt checkpoint: unexpected end of file");
    ++lineno;
    return detail::split_ws(line);
  };
  auto keyed = [&](std::string_view key) {
    auto tok = next();
    if (tok.empty() || tok[0] != key)
      throw DataError(path, lineno, "corrupt checkpoint: expected '" + std::string(key) + "'");
    return std::vector<std::string>(tok.begin() + 1, tok.end());
  };
  auto one = [&](const std::vector<std::string>& v) -> const std::string& {
    if (v.size() != 1) throw DataError(path, lineno, "corrupt checkpoint: expected a single value");
    return v.front();
  };
  auto to_num = [&](std::string_view s, auto& v) {
    if (!detail::parse_number(s, v)) throw DataError(path, lineno, "corrupt checkpoint: bad number '" + std::string(s) + "'");
  };

  {
    auto head = next();
    if (head.size() != 2 || head[0] != "siita-checkpoint") throw DataError(path, lineno, "not a checkpoint file");
    int version = 0;
    to_num(head[1], version);
    if (version != kCheckpointVersion)
      throw DataError(path, lineno, "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                        std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint cp;
  to_num(one(keyed("step")), cp.step);
  std::vector<Index> ranks, feats;
  for (const auto& s : keyed("ranks")) to_num(s, ranks.emplace_back());
  for (const auto& s : keyed("features")) to_num(s, feats.emplace_back());
  if (ranks.size() != feats.size() || ranks.size() < 2) throw DataError(path, lineno, "corrupt checkpoint: rank/feature counts");
  to_num(one(keyed("lambda_g")), cp.hp.lambda_g);
  cp.hp.lambda.clear();
  for (const auto& s : keyed("lambda")) to_num(s, cp.hp.lambda.emplace_back());
  to_num(one(keyed("gamma")), cp.hp.gamma);
  to_num(one(keyed("inner_steps")), cp.hp.inner_steps);
  int nn = 0;
  to_num(one(keyed("nonnegative")), nn);
  cp.hp.nonnegative = nn != 0;
  to_num(one(keyed("seed")), cp.hp.seed);

  auto read_values = [&](std::vector<double>& dst) {
    for (double& v : dst) {
      auto tok = next();
      if (tok.size() != 1) throw DataError(path, lineno, "corrupt checkpoint: expected one value per line");
      to_num(tok[0], v);
    }
  };
  keyed("core");
  cp.model.core = DenseTensor(Shape(ranks));
  read_values(cp.model.core.values());
  for (std::size_t k = 0; k < ranks.size(); ++k) {
    auto idx = keyed("factor");
    std::size_t got = 0;
    if (idx.size() != 1) throw DataError(path, lineno, "corrupt checkpoint: factor header");
    to_num(idx[0], got);
    if (got != k) throw DataError(path, lineno, "corrupt checkpoint: factors out of order");
    DenseMatrix f(feats[k], ranks[k]);
    read_values(f.values());
    cp.model.factors.push_back(std::move(f));
  }
  keyed("end");
  return cp;
}

}  // namespace siita
