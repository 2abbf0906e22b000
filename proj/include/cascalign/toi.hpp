#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace cascalign {

// One token of a tagged sentence. Subword pieces of a single source word share
// a word_id; continuation pieces carry a leading "##".
struct TaggedToken {
  std::string text;
  std::string pos;  // Universal POS tag string
  int word_id = 0;
};

// Case-folded source word reconstructed from the subword pieces sharing one
// word_id, with "##" continuation markers stripped.
std::string join_word(const std::vector<TaggedToken>& tokens, size_t begin, size_t end);

// Sentence-frequency based word rarity: idf(w) = log(|D| / (1 + df(w))).
class IdfTable {
 public:
  static IdfTable compute(const std::vector<std::vector<TaggedToken>>& sentences);
  static IdfTable from_values(std::unordered_map<std::string, double> values, long corpus_size);

  // df=0 fallback for unseen words: log(|D| / 1).
  double lookup(const std::string& word) const;
  long corpus_size() const { return corpus_size_; }
  const std::unordered_map<std::string, double>& values() const { return values_; }

 private:
  std::unordered_map<std::string, double> values_;
  long corpus_size_ = 0;
};

extern const std::set<std::string> kDefaultTargetPos;  // {NOUN, VERB}

// Indices of tokens whose POS tag is in target_pos. Sentences carry no
// [CLS]/[SEP]; indices are positions in `tokens`.
std::vector<int> select_toi(const std::vector<TaggedToken>& tokens,
                            const std::set<std::string>& target_pos);

// Normalized per-token weights over the tokens of interest of one sentence.
struct ToiWeights {
  std::vector<int> positions;
  std::vector<double> weights;

  bool empty() const { return positions.empty(); }
  size_t size() const { return positions.size(); }
};

// Looks up one idf per selected word, clamps at 1e-6, copies the word's value
// onto each of its subword tokens, and normalizes the result to sum to 1.
ToiWeights sentence_weights(const std::vector<TaggedToken>& tokens, const IdfTable& idf,
                            const std::set<std::string>& target_pos = kDefaultTargetPos);

std::string fold_case(const std::string& s);

}  // namespace cascalign
