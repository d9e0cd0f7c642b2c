#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lrc {

enum class TaskKind { SingleClassify, PairClassify, Regression };

struct TaskSpec {
  std::string name = "parity";
  TaskKind kind = TaskKind::SingleClassify;
  int vocab_size = 8;
  int seq_len = 16;
  int num_classes = 2;
  std::uint64_t generator_seed = 1;
  // Probability that a content bit is "1" (binary tasks). Sparse bits keep
  // low-order count features correlated with parity, which is what makes the
  // task trainable from scratch; at 0.5 that correlation vanishes.
  double one_probability = 0.15;

  void validate() const;
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Token layout: position 0 holds the start token, content follows. Binary
// tasks use content ids 3 ("0") and 4 ("1").
inline constexpr int kBitZero = 3;
inline constexpr int kBitOne = 4;

struct Sample {
  std::vector<int> tokens;
  int label = 0;        // class id (classification)
  double target = 0.0;  // regression target

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Start token plus l-1 random bits, each "1" with probability one_probability;
// label is the parity of the number of ones. Labels alternate 0,1,0,... (one
// random bit is flipped when the draw disagrees), so any even n is exactly
// balanced.
std::vector<Sample> gen_parity(int n, int l, std::uint64_t seed, double one_probability = 0.15);

// [start] seq1 [sep] seq2 with |seq1| = |seq2| = (l-2)/2. Label 1 iff seq2 is
// a permutation of seq1. Positives are shuffled copies; negatives are
// independent draws that are not permutations. Labels alternate.
std::vector<Sample> gen_pair_match(int n, int l, int vocab, std::uint64_t seed);

// Start token plus l-1 random bits; target = (#ones) / (l-1).
std::vector<Sample> gen_regression(int n, int l, std::uint64_t seed, double one_probability = 0.15);

std::vector<Sample> generate(const TaskSpec& task, int n, std::uint64_t seed);

struct Splits {
  std::vector<Sample> train;
  std::vector<Sample> eval;
};
// Disjoint train/eval sets (no token sequence appears twice across both),
// drawn from the task's generator seed as one pool, then split at random
// (stratified by label for classification tasks).
Splits make_splits(const TaskSpec& task, int n_train, int n_eval);

// Independent rule-based relabeling, used to verify generated labels.
int parity_label(const std::vector<int>& tokens);
bool is_pair_match(const std::vector<int>& tokens);
double ones_fraction(const std::vector<int>& tokens);

// Seeded shuffle, then consecutive index batches. batch_size must be >= 2.
std::vector<std::vector<std::size_t>> batches(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed,
                                              bool drop_last);

// Endless batch source; reshuffles every epoch with a seed derived from the
// base seed and the epoch number. Full batches only.
class BatchStream {
 public:
  BatchStream(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed);
  const std::vector<std::size_t>& next();

 private:
  std::size_t num_samples_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::vector<std::size_t>> current_;
};

// Line-delimited JSON: {"tokens":[...],"label":...}.
void write_jsonl(std::ostream& os, const std::vector<Sample>& samples, bool regression);
std::vector<Sample> read_jsonl(std::istream& is, bool regression);

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

}  // namespace lrc
