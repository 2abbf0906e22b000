#include "cascalign/toi.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

#include "cascalign/errors.hpp"

namespace cascalign {

const std::set<std::string> kDefaultTargetPos = {"NOUN", "VERB"};

std::string fold_case(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string join_word(const std::vector<TaggedToken>& tokens, size_t begin, size_t end) {
  std::string word;
  for (size_t i = begin; i < end; ++i) {
    const std::string& piece = tokens[i].text;
    if (i > begin && piece.rfind("##", 0) == 0) {
      word += piece.substr(2);
    } else {
      word += piece;
    }
  }
  return fold_case(word);
}

namespace {

// Word spans [begin, end) grouped by word_id.
std::vector<std::pair<size_t, size_t>> word_spans(const std::vector<TaggedToken>& tokens) {
  std::vector<std::pair<size_t, size_t>> spans;
  size_t i = 0;
  while (i < tokens.size()) {
    size_t j = i + 1;
    while (j < tokens.size() && tokens[j].word_id == tokens[i].word_id) ++j;
    spans.emplace_back(i, j);
    i = j;
  }
  return spans;
}

}  // namespace

IdfTable IdfTable::compute(const std::vector<std::vector<TaggedToken>>& sentences) {
  if (sentences.empty()) throw DataError("compute_idf: empty corpus");
  std::unordered_map<std::string, long> df;
  for (const auto& sentence : sentences) {
    std::unordered_set<std::string> seen;
    for (const auto& [begin, end] : word_spans(sentence)) {
      seen.insert(join_word(sentence, begin, end));
    }
    for (const auto& w : seen) df[w] += 1;
  }
  IdfTable table;
  table.corpus_size_ = static_cast<long>(sentences.size());
  for (const auto& [word, count] : df) {
    table.values_[word] =
        std::log(static_cast<double>(table.corpus_size_) / (1.0 + static_cast<double>(count)));
  }
  return table;
}

IdfTable IdfTable::from_values(std::unordered_map<std::string, double> values, long corpus_size) {
  IdfTable table;
  table.values_ = std::move(values);
  table.corpus_size_ = corpus_size;
  return table;
}

double IdfTable::lookup(const std::string& word) const {
  const auto it = values_.find(fold_case(word));
  if (it != values_.end()) return it->second;
  return std::log(static_cast<double>(corpus_size_));
}

std::vector<int> select_toi(const std::vector<TaggedToken>& tokens,
                            const std::set<std::string>& target_pos) {
  std::vector<int> positions;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (target_pos.count(tokens[i].pos)) positions.push_back(static_cast<int>(i));
  }
  return positions;
}

ToiWeights sentence_weights(const std::vector<TaggedToken>& tokens, const IdfTable& idf,
                            const std::set<std::string>& target_pos) {
  constexpr double kIdfFloor = 1e-6;
  const std::vector<int> selected = select_toi(tokens, target_pos);
  ToiWeights out;
  if (selected.empty()) return out;

  std::unordered_set<int> selected_set(selected.begin(), selected.end());
  double total = 0.0;
  for (const auto& [begin, end] : word_spans(tokens)) {
    if (!selected_set.count(static_cast<int>(begin))) continue;
    const double w = std::max(idf.lookup(join_word(tokens, begin, end)), kIdfFloor);
    // Every subword of the word carries the same (pre-normalization) value.
    for (size_t i = begin; i < end; ++i) {
      out.positions.push_back(static_cast<int>(i));
      out.weights.push_back(w);
      total += w;
    }
  }
  for (double& w : out.weights) w /= total;
  return out;
}

}  // namespace cascalign
