#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "causalrec/rng.hpp"

namespace causalrec::data {

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;

  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

enum class Format { tsv, csv };

Format format_from_path(const std::string& path);

struct ParseResult {
  std::vector<InteractionRecord> records;
  std::size_t lines = 0;  // non-empty lines, header excluded
  std::size_t malformed = 0;
  bool had_header = false;
};

/// Reads `user<sep>item<sep>timestamp` lines. A first line whose timestamp
/// field is not an integer is taken as a header. Malformed lines are skipped
/// and counted; more than `max_malformed_fraction` of them, or no records at
/// all, raises IngestionError.
ParseResult parse_interactions(std::istream& in, Format format, double max_malformed_fraction = 0.01);

/// Item vocabulary. Index 0 is the padding item and never names a real item.
struct Vocabulary {
  std::vector<std::string> items{""};
  std::unordered_map<std::string, int> index;

  int num_items() const { return static_cast<int>(items.size()) - 1; }
  int add(const std::string& id);
  int lookup(const std::string& id) const;  // 0 if unknown
};

struct UserSequences {
  Vocabulary vocab;
  std::vector<std::string> users;
  std::vector<std::vector<int>> sequences;  // chronological, at most n_max items
  std::size_t n_max = 200;
};

/// Groups records per user (users and items indexed by first appearance),
/// orders each user's items by (timestamp, file order) and keeps the most
/// recent n_max of them. Requires n_max >= 2.
UserSequences build_sequences(std::span<const InteractionRecord> records, std::size_t n_max = 200);

/// Fixed-length model input: real items right-aligned, index 0 in the
/// padding prefix.
struct PaddedSequence {
  std::vector<int> items;
  std::size_t length = 0;
  int user_index = -1;

  std::size_t n_max() const { return items.size(); }
  std::size_t first_real() const { return items.size() - length; }
  std::size_t last_position() const { return items.size() - 1; }
  bool is_padding(std::size_t pos) const { return pos < first_real(); }
};

/// Left-pads (or keeps the most recent n_max of) `items`.
PaddedSequence pad_left(std::span<const int> items, std::size_t n_max, int user_index = -1);

struct UserSplit {
  std::vector<int> train;
  std::optional<int> valid;
  std::optional<int> test;
};

/// Leave-last-two split. Users with fewer than three interactions keep
/// everything in train and take no part in evaluation.
struct SplitDataset {
  Vocabulary vocab;
  std::vector<std::string> users;
  std::vector<UserSplit> splits;
  std::size_t n_max = 200;

  std::size_t num_users() const { return splits.size(); }
  int num_items() const { return vocab.num_items(); }
  std::size_t num_eval_users() const;
  // Every item the user ever interacted with (train, valid and test).
  std::vector<int> history(std::size_t user) const;
};

SplitDataset split_leave_last_two(const UserSequences& seqs);

/// Next-item training pair: targets[t] is the item following input position
/// t, or 0 where the position is padding.
struct TrainingExample {
  PaddedSequence input;
  std::vector<int> targets;
  std::size_t user = 0;
};

std::vector<TrainingExample> training_examples(const SplitDataset& ds);

enum class EvalSplit { valid, test };

/// Input/target pair for ranking evaluation. The validation case feeds the
/// training items; the test case feeds training items plus the validation
/// item. The target is never part of its own input.
struct EvalCase {
  PaddedSequence input;
  int target = 0;
  std::size_t user = 0;
};

std::optional<EvalCase> eval_case(const SplitDataset& ds, std::size_t user, EvalSplit split);

// Binary cache of indexed sequences: "CRSEQ1" header, little-endian integers.
void write_cache(std::ostream& out, const UserSequences& seqs);
UserSequences read_cache(std::istream& in);

// Re-encodes sequences as TSV with synthetic increasing timestamps.
void write_interactions(std::ostream& out, const UserSequences& seqs);

/// Synthetic log with a planted rule: every odd item 2k-1 is immediately
/// followed by item 2k, and after an even item the next item is a uniformly
/// random odd item. Items are named "i1".."i<num_items>", users "u1"...
std::vector<InteractionRecord> planted_pairs_dataset(std::size_t num_users, int num_items, std::size_t min_len,
                                                     std::size_t max_len, Rng& rng);

}  // namespace causalrec::data
