#include "lrc/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "lrc/error.hpp"
#include "lrc/rng.hpp"
#include "lrc/vocab.hpp"

namespace lrc {

namespace {
void check_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("task.one_probability must be in (0, 1)");
}
}  // namespace

void TaskSpec::validate() const {
  if (name.empty()) throw ConfigError("task.name must not be empty");
  if (seq_len < 2) throw ConfigError("task.seq_len must be at least 2");
  if (kind != TaskKind::PairClassify) check_probability(one_probability);
  switch (kind) {
    case TaskKind::SingleClassify:
      if (num_classes != 2) throw ConfigError("task.num_classes must be 2 for the parity task");
      if (vocab_size <= kBitOne) throw ConfigError("task.vocab_size must exceed " + std::to_string(kBitOne));
      break;
    case TaskKind::PairClassify:
      if (num_classes != 2) throw ConfigError("task.num_classes must be 2 for pair matching");
      if (seq_len % 2 != 0 || seq_len < 4) throw ConfigError("task.seq_len must be even and at least 4 for pair tasks");
      if (vocab_size < 8) throw ConfigError("task.vocab_size must be at least 8 for pair tasks");
      break;
    case TaskKind::Regression:
      if (num_classes != 1) throw ConfigError("task.num_classes must be 1 for regression");
      if (vocab_size <= kBitOne) throw ConfigError("task.vocab_size must exceed " + std::to_string(kBitOne));
      break;
  }
}

namespace {

std::vector<int> random_bits(Rng& rng, int l, double p_one) {
  std::vector<int> tokens(static_cast<std::size_t>(l));
  tokens[0] = kClsToken;
  for (int i = 1; i < l; ++i) tokens[static_cast<std::size_t>(i)] = rng.uniform() < p_one ? kBitOne : kBitZero;
  return tokens;
}

Sample draw_parity(Rng& rng, int l, double p_one, int label) {
  Sample s{random_bits(rng, l, p_one), label, 0.0};
  if (parity_label(s.tokens) != label) {
    auto& t = s.tokens[1 + rng.below(static_cast<std::uint64_t>(l - 1))];
    t = t == kBitOne ? kBitZero : kBitOne;
  }
  s.target = label;
  return s;
}

Sample draw_pair(Rng& rng, int l, int vocab, int label) {
  const std::size_t half = static_cast<std::size_t>((l - 2) / 2);
  const auto content = static_cast<std::uint64_t>(vocab - kFirstContentToken);
  auto draw_seq = [&] {
    std::vector<int> s(half);
    for (auto& t : s) t = kFirstContentToken + static_cast<int>(rng.below(content));
    return s;
  };
  std::vector<int> first = draw_seq();
  std::vector<int> second;
  if (label == 1) {
    second = first;
    rng.shuffle(std::span<int>(second));
  } else {
    do {
      second = draw_seq();
    } while (std::is_permutation(first.begin(), first.end(), second.begin()));
  }
  Sample s;
  s.tokens.reserve(static_cast<std::size_t>(l));
  s.tokens.push_back(kClsToken);
  s.tokens.insert(s.tokens.end(), first.begin(), first.end());
  s.tokens.push_back(kSepToken);
  s.tokens.insert(s.tokens.end(), second.begin(), second.end());
  s.tokens.resize(static_cast<std::size_t>(l), kPadToken);
  s.label = label;
  s.target = label;
  return s;
}

Sample draw_regression(Rng& rng, int l, double p_one) {
  Sample s{random_bits(rng, l, p_one), 0, 0.0};
  s.target = ones_fraction(s.tokens);
  return s;
}

Sample draw(const TaskSpec& task, Rng& rng, int index) {
  switch (task.kind) {
    case TaskKind::SingleClassify:
      return draw_parity(rng, task.seq_len, task.one_probability, index % 2);
    case TaskKind::PairClassify:
      return draw_pair(rng, task.seq_len, task.vocab_size, index % 2);
    case TaskKind::Regression:
      return draw_regression(rng, task.seq_len, task.one_probability);
  }
  throw ConfigError("unknown task kind");
}

}  // namespace

int parity_label(const std::vector<int>& tokens) {
  int ones = 0;
  for (int t : tokens) ones += t == kBitOne;
  return ones % 2;
}

bool is_pair_match(const std::vector<int>& tokens) {
  auto sep = std::find(tokens.begin() + 1, tokens.end(), kSepToken);
  if (sep == tokens.end()) return false;
  std::multiset<int> a(tokens.begin() + 1, sep);
  std::multiset<int> b;
  for (auto it = sep + 1; it != tokens.end(); ++it)
    if (*it != kPadToken) b.insert(*it);
  return a == b;
}

double ones_fraction(const std::vector<int>& tokens) {
  int ones = 0, content = 0;
  for (int t : tokens) {
    if (t == kBitOne || t == kBitZero) ++content;
    ones += t == kBitOne;
  }
  return content == 0 ? 0.0 : static_cast<double>(ones) / content;
}

std::vector<Sample> gen_parity(int n, int l, std::uint64_t seed, double one_probability) {
  if (l < 2) throw ConfigError("parity: l must be at least 2");
  check_probability(one_probability);
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(draw_parity(rng, l, one_probability, i % 2));
  return out;
}

std::vector<Sample> gen_pair_match(int n, int l, int vocab, std::uint64_t seed) {
  if (l % 2 != 0 || l < 4) throw ConfigError("pair_match: l must be even and at least 4");
  if (vocab < 8) throw ConfigError("pair_match: vocab must be at least 8");
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(draw_pair(rng, l, vocab, i % 2));
  return out;
}

std::vector<Sample> gen_regression(int n, int l, std::uint64_t seed, double one_probability) {
  if (l < 2) throw ConfigError("regression: l must be at least 2");
  check_probability(one_probability);
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(draw_regression(rng, l, one_probability));
  return out;
}

std::vector<Sample> generate(const TaskSpec& task, int n, std::uint64_t seed) {
  task.validate();
  switch (task.kind) {
    case TaskKind::SingleClassify:
      return gen_parity(n, task.seq_len, seed, task.one_probability);
    case TaskKind::PairClassify:
      return gen_pair_match(n, task.seq_len, task.vocab_size, seed);
    case TaskKind::Regression:
      return gen_regression(n, task.seq_len, seed, task.one_probability);
  }
  throw ConfigError("unknown task kind");
}

Splits make_splits(const TaskSpec& task, int n_train, int n_eval) {
  task.validate();
  if (n_train < 0 || n_eval < 0) throw ConfigError("split sizes must be non-negative");
  Rng rng(task.generator_seed);
  std::set<std::vector<int>> seen;
  std::vector<Sample> pool;
  const int total = n_train + n_eval;
  const long max_attempts = 1000L * (total + 1);
  long attempts = 0;
  while (static_cast<int>(pool.size()) < total) {
    if (++attempts > max_attempts) {
      throw ConfigError("task '" + task.name + "' cannot produce " + std::to_string(total) + " distinct sequences");
    }
    Sample sample = draw(task, rng, static_cast<int>(pool.size()));
    if (seen.insert(sample.tokens).second) pool.push_back(std::move(sample));
  }
  // Seeded split, stratified by label for classification, so both sides share
  // one distribution. Taking the first draws for training would not: dedup
  // exhausts the most likely sequences early.
  rng.shuffle(std::span<Sample>(pool));
  if (task.kind != TaskKind::Regression) {
    std::stable_partition(pool.begin(), pool.end(), [](const Sample& x) { return x.label == 0; });
    const auto zeros = static_cast<std::size_t>(
        std::count_if(pool.begin(), pool.end(), [](const Sample& x) { return x.label == 0; }));
    // Eval takes its share of each class; rounding favours the larger class.
    const auto eval_zeros = static_cast<std::size_t>(
        std::llround(static_cast<double>(n_eval) * static_cast<double>(zeros) / std::max(total, 1)));
    Splits s;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const bool eval = i < zeros ? i < eval_zeros : i - zeros < static_cast<std::size_t>(n_eval) - eval_zeros;
      (eval ? s.eval : s.train).push_back(std::move(pool[i]));
    }
    // Interleave classes again so neither split is label-sorted.
    for (auto* part : {&s.train, &s.eval}) rng.shuffle(std::span<Sample>(*part));
    return s;
  }
  Splits s;
  s.train.assign(pool.begin(), pool.begin() + n_train);
  s.eval.assign(pool.begin() + n_train, pool.end());
  return s;
}

std::vector<std::vector<std::size_t>> batches(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed,
                                              bool drop_last) {
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  std::vector<std::size_t> order(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < num_samples; b += batch_size) {
    const std::size_t e = std::min(num_samples, b + batch_size);
    if (e - b < batch_size && drop_last) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

BatchStream::BatchStream(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed)
    : num_samples_(num_samples), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (num_samples < batch_size) throw ConfigError("dataset smaller than one batch");
}

const std::vector<std::size_t>& BatchStream::next() {
  if (cursor_ >= current_.size()) {
    current_ = batches(num_samples_, batch_size_, derive_seed(seed_, epoch_++), true);
    cursor_ = 0;
  }
  return current_[cursor_++];
}

void write_jsonl(std::ostream& os, const std::vector<Sample>& samples, bool regression) {
  for (const Sample& s : samples) {
    nlohmann::json j;
    j["tokens"] = s.tokens;
    if (regression) {
      j["label"] = s.target;
    } else {
      j["label"] = s.label;
    }
    os << j.dump() << '\n';
  }
}

std::vector<Sample> read_jsonl(std::istream& is, bool regression) {
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      Sample s;
      s.tokens = j.at("tokens").get<std::vector<int>>();
      if (regression) {
        s.target = j.at("label").get<double>();
      } else {
        s.label = j.at("label").get<int>();
        s.target = s.label;
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::SingleClassify:
      return "single";
    case TaskKind::PairClassify:
      return "pair";
    case TaskKind::Regression:
      return "regression";
  }
  return "unknown";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "single") return TaskKind::SingleClassify;
  if (s == "pair") return TaskKind::PairClassify;
  if (s == "regression") return TaskKind::Regression;
  throw ConfigError("task.kind must be one of single|pair|regression, got '" + s + "'");
}

}  // namespace lrc
