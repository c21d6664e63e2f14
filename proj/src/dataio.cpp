#include "causalrec/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>

#include "binio.hpp"
#include "causalrec/errors.hpp"

namespace causalrec::data {

namespace {

constexpr const char* kCacheMagic = "CRSEQ1";

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

Format format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos && path.substr(dot) == ".csv") return Format::csv;
  return Format::tsv;
}

ParseResult parse_interactions(std::istream& in, Format format, double max_malformed_fraction) {
  const char sep = format == Format::csv ? ',' : '\t';
  ParseResult result;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, sep);
    std::optional<std::int64_t> ts;
    if (fields.size() == 3) ts = parse_int(trim(fields[2]));
    if (first) {
      first = false;
      if (fields.size() == 3 && !ts) {
        result.had_header = true;
        continue;
      }
    }
    ++result.lines;
    InteractionRecord rec;
    if (fields.size() == 3) {
      rec.user_id = trim(fields[0]);
      rec.item_id = trim(fields[1]);
    }
    if (!ts || *ts < 0 || rec.user_id.empty() || rec.item_id.empty()) {
      ++result.malformed;
      continue;
    }
    rec.timestamp = *ts;
    result.records.push_back(std::move(rec));
  }
  if (result.records.empty()) throw IngestionError("parse_interactions: no valid interactions in input");
  const double frac = static_cast<double>(result.malformed) / static_cast<double>(result.lines);
  if (frac > max_malformed_fraction) {
    throw IngestionError("parse_interactions: " + std::to_string(result.malformed) + " of " +
                         std::to_string(result.lines) + " lines malformed");
  }
  return result;
}

int Vocabulary::add(const std::string& id) {
  auto [it, inserted] = index.try_emplace(id, static_cast<int>(items.size()));
  if (inserted) items.push_back(id);
  return it->second;
}

int Vocabulary::lookup(const std::string& id) const {
  const auto it = index.find(id);
  return it == index.end() ? 0 : it->second;
}

UserSequences build_sequences(std::span<const InteractionRecord> records, std::size_t n_max) {
  if (n_max < 2) throw ParameterError("build_sequences: n_max must be at least 2");
  UserSequences out;
  out.n_max = n_max;
  std::unordered_map<std::string, std::size_t> user_index;
  std::vector<std::vector<std::pair<std::int64_t, int>>> events;
  for (const InteractionRecord& rec : records) {
    auto [it, inserted] = user_index.try_emplace(rec.user_id, out.users.size());
    if (inserted) {
      out.users.push_back(rec.user_id);
      events.emplace_back();
    }
    const int item = out.vocab.add(rec.item_id);
    events[it->second].emplace_back(rec.timestamp, item);
  }
  out.sequences.reserve(events.size());
  for (auto& ev : events) {
    std::stable_sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const std::size_t skip = ev.size() > n_max ? ev.size() - n_max : 0;
    std::vector<int> seq;
    seq.reserve(ev.size() - skip);
    for (std::size_t i = skip; i < ev.size(); ++i) seq.push_back(ev[i].second);
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

PaddedSequence pad_left(std::span<const int> items, std::size_t n_max, int user_index) {
  PaddedSequence p;
  p.user_index = user_index;
  p.items.assign(n_max, 0);
  const std::size_t keep = std::min(items.size(), n_max);
  const std::size_t skip = items.size() - keep;
  std::copy(items.begin() + static_cast<std::ptrdiff_t>(skip), items.end(),
            p.items.begin() + static_cast<std::ptrdiff_t>(n_max - keep));
  p.length = keep;
  return p;
}

std::size_t SplitDataset::num_eval_users() const {
  return static_cast<std::size_t>(
      std::count_if(splits.begin(), splits.end(), [](const UserSplit& s) { return s.test.has_value(); }));
}

std::vector<int> SplitDataset::history(std::size_t user) const {
  const UserSplit& s = splits.at(user);
  std::vector<int> h = s.train;
  if (s.valid) h.push_back(*s.valid);
  if (s.test) h.push_back(*s.test);
  return h;
}

SplitDataset split_leave_last_two(const UserSequences& seqs) {
  SplitDataset ds;
  ds.vocab = seqs.vocab;
  ds.users = seqs.users;
  ds.n_max = seqs.n_max;
  ds.splits.reserve(seqs.sequences.size());
  for (const auto& seq : seqs.sequences) {
    UserSplit s;
    if (seq.size() >= 3) {
      s.train.assign(seq.begin(), seq.end() - 2);
      s.valid = seq[seq.size() - 2];
      s.test = seq.back();
    } else {
      s.train = seq;
    }
    ds.splits.push_back(std::move(s));
  }
  return ds;
}

std::vector<TrainingExample> training_examples(const SplitDataset& ds) {
  std::vector<TrainingExample> out;
  for (std::size_t u = 0; u < ds.splits.size(); ++u) {
    const auto& train = ds.splits[u].train;
    if (train.size() < 2) continue;
    TrainingExample ex;
    ex.user = u;
    ex.input = pad_left(std::span<const int>(train).first(train.size() - 1), ds.n_max, static_cast<int>(u));
    const PaddedSequence shifted = pad_left(std::span<const int>(train).subspan(1), ds.n_max, static_cast<int>(u));
    ex.targets = shifted.items;
    // Positions that are padding in the input never carry a target.
    for (std::size_t t = 0; t < ex.input.first_real(); ++t) ex.targets[t] = 0;
    out.push_back(std::move(ex));
  }
  return out;
}

std::optional<EvalCase> eval_case(const SplitDataset& ds, std::size_t user, EvalSplit split) {
  const UserSplit& s = ds.splits.at(user);
  if (!s.valid || !s.test || s.train.empty()) return std::nullopt;
  EvalCase c;
  c.user = user;
  std::vector<int> input = s.train;
  if (split == EvalSplit::test) {
    input.push_back(*s.valid);
    c.target = *s.test;
  } else {
    c.target = *s.valid;
  }
  c.input = pad_left(input, ds.n_max, static_cast<int>(user));
  return c;
}

void write_cache(std::ostream& out, const UserSequences& seqs) {
  out.write(kCacheMagic, 6);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(seqs.n_max));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(seqs.vocab.num_items()));
  for (std::size_t i = 1; i < seqs.vocab.items.size(); ++i) binio::put_string(out, seqs.vocab.items[i]);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(seqs.users.size()));
  for (std::size_t u = 0; u < seqs.users.size(); ++u) {
    binio::put_string(out, seqs.users[u]);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(seqs.sequences[u].size()));
    for (int item : seqs.sequences[u]) binio::put<std::int32_t>(out, item);
  }
  if (!out) throw FormatError("write_cache: stream error");
}

UserSequences read_cache(std::istream& in) {
  binio::expect_magic(in, kCacheMagic);
  UserSequences seqs;
  seqs.n_max = binio::get<std::uint32_t>(in, "n_max");
  const auto num_items = binio::get<std::uint32_t>(in, "item count");
  for (std::uint32_t i = 0; i < num_items; ++i) {
    const std::string id = binio::get_string(in, "item id");
    if (seqs.vocab.add(id) != static_cast<int>(i + 1)) throw FormatError("read_cache: duplicate item id " + id);
  }
  const auto num_users = binio::get<std::uint32_t>(in, "user count");
  for (std::uint32_t u = 0; u < num_users; ++u) {
    seqs.users.push_back(binio::get_string(in, "user id"));
    const auto len = binio::get<std::uint32_t>(in, "sequence length");
    if (len > seqs.n_max) throw FormatError("read_cache: sequence longer than n_max");
    std::vector<int> seq(len);
    for (auto& item : seq) {
      item = binio::get<std::int32_t>(in, "item index");
      if (item < 1 || item > static_cast<int>(num_items)) throw FormatError("read_cache: item index out of range");
    }
    seqs.sequences.push_back(std::move(seq));
  }
  return seqs;
}

void write_interactions(std::ostream& out, const UserSequences& seqs) {
  std::int64_t ts = 0;
  for (std::size_t u = 0; u < seqs.users.size(); ++u)
    for (int item : seqs.sequences[u]) out << seqs.users[u] << '\t' << seqs.vocab.items.at(item) << '\t' << ts++ << '\n';
}

std::vector<InteractionRecord> planted_pairs_dataset(std::size_t num_users, int num_items, std::size_t min_len,
                                                     std::size_t max_len, Rng& rng) {
  if (num_items < 2 || num_items % 2 != 0) throw ParameterError("planted_pairs_dataset: need an even item count >= 2");
  if (min_len < 1 || max_len < min_len) throw ParameterError("planted_pairs_dataset: bad length range");
  const int pairs = num_items / 2;
  std::vector<InteractionRecord> out;
  std::int64_t clock = 1'000'000;
  for (std::size_t u = 0; u < num_users; ++u) {
    const auto len = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(min_len), static_cast<std::int64_t>(max_len)));
    int item = 0;
    for (std::size_t t = 0; t < len; ++t) {
      if (item % 2 == 1) {
        item = item + 1;
      } else {
        item = 2 * static_cast<int>(rng.uniform_int(1, pairs)) - 1;
      }
      out.push_back({"u" + std::to_string(u + 1), "i" + std::to_string(item), clock});
      clock += 1 + rng.uniform_int(0, 59);
    }
  }
  return out;
}

}  // namespace causalrec::data
