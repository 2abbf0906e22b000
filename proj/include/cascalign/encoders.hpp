#pragma once

#include <map>
#include <string>
#include <vector>

#include "cascalign/data.hpp"
#include "cascalign/rng.hpp"
#include "cascalign/tensor.hpp"

namespace cascalign {

struct EncoderConfig {
  int d = 32;
  int heads = 2;
  int video_layers = 1;
  int text_layers = 1;
  int fusion_layers = 2;
  int d_video_in = 16;
  int vocab_size = 0;  // 0: derive from the corpus at model init
  int m_max = 8;
  int n_max = 12;
  int ff_mult = 4;  // feed-forward hidden width as a multiple of d
  // Fused sequence order; text-first keeps [CLS] at position 0.
  bool fusion_text_first = true;

  int head_dim() const { return d / heads; }
  void validate() const;
};

// Token-id mapping built from a corpus: [CLS]=0, [SEP]=1, then sorted unique
// case-folded token texts. Unknown tokens raise VocabError.
class Vocab {
 public:
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;

  Vocab() = default;
  static Vocab build(const std::vector<CorpusRecord>& records);
  static Vocab from_words(std::vector<std::string> words);  // includes the specials

  int size() const { return static_cast<int>(words_.size()); }
  int id(const std::string& token) const;
  const std::vector<std::string>& words() const { return words_; }

  // [CLS] tok0 ... tokN [SEP]
  std::vector<int> encode(const std::vector<TaggedToken>& tokens) const;

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

// Named parameter tensors in deterministic (sorted) order.
class ParamStore {
 public:
  Tensor& create(const std::string& name, std::vector<int> shape, Rng& rng, real bound);
  Tensor& create_const(const std::string& name, std::vector<int> shape, real value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  std::map<std::string, Tensor>& entries() { return params_; }
  const std::map<std::string, Tensor>& entries() const { return params_; }
  std::vector<Tensor> tensors() const;
  size_t parameter_count() const;
  void zero_grads() const;

 private:
  std::map<std::string, Tensor> params_;
};

struct EncodedVideo {
  Tensor tokens;  // [m×d]
  Tensor mean;    // [d]
};

struct EncodedText {
  Tensor tokens;  // [n×d], row 0 is [CLS]
  Tensor cls;     // [d]
};

struct FusionOutput {
  Tensor sequence;  // [(m+n)×d]
  Tensor cls;       // [d], the [CLS] position of the fused sequence
};

// Per-batch encodings; per-record tensors generalize the rectangular K×m×d
// layout to variable lengths.
struct EncodedBatch {
  std::vector<Tensor> video_tokens;  // K tensors [m_i×d]
  std::vector<Tensor> text_tokens;   // K tensors [n_i×d]
  Tensor video_means;                // [K×d]
  Tensor text_cls;                   // [K×d]

  int batch_size() const { return static_cast<int>(video_tokens.size()); }
};

// The three-part alignment model: video encoder, language encoder, multi-modal
// fusion, plus the fused-output scoring head. Forward passes are read-only
// with respect to parameter values.
struct AlignmentModel {
  EncoderConfig config;
  Vocab vocab;
  ParamStore params;

  static AlignmentModel init(const EncoderConfig& config, Vocab vocab, uint64_t seed);

  EncodedVideo encode_video(const Tensor& features) const;
  EncodedText encode_text(const std::vector<int>& token_ids) const;
  FusionOutput fuse(const Tensor& video_tokens, const Tensor& text_tokens) const;

  EncodedBatch encode_batch(const std::vector<const CorpusRecord*>& records) const;

  // Fused [CLS] outputs for many (video index, text index) pairs as one
  // stacked block-diagonal pass; row p corresponds to pairs[p]. Matches
  // per-pair fuse() up to floating-point reassociation.
  Tensor fuse_pairs(const EncodedBatch& batch,
                    const std::vector<std::pair<int, int>>& pairs) const;

  const Tensor& head_weight() const { return params.at("head.w"); }
  const Tensor& head_bias() const { return params.at("head.b"); }

  // Row index of tokens[i] within the encoded text tensor ([CLS] occupies row 0).
  static int text_row(int token_position) { return token_position + 1; }
};

}  // namespace cascalign
