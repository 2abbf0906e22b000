#include "cascalign/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cascalign/errors.hpp"
#include "cascalign/ops.hpp"

namespace cascalign {

void EncoderConfig::validate() const {
  if (d < 1) throw ConfigError("encoder config: d must be positive");
  if (heads < 1 || d % heads != 0) throw ConfigError("encoder config: d must be divisible by heads");
  if (video_layers < 0 || text_layers < 0 || fusion_layers < 0)
    throw ConfigError("encoder config: layer counts must be nonnegative");
  if (d_video_in < 1) throw ConfigError("encoder config: d_video_in must be positive");
  if (m_max < 1) throw ConfigError("encoder config: m_max must be >= 1");
  if (n_max < 3) throw ConfigError("encoder config: n_max must be >= 3");
  if (ff_mult < 1) throw ConfigError("encoder config: ff_mult must be positive");
}

Vocab Vocab::build(const std::vector<CorpusRecord>& records) {
  std::set<std::string> unique;
  for (const auto& rec : records)
    for (const auto& tok : rec.tokens) unique.insert(fold_case(tok.text));
  std::vector<std::string> words = {"[CLS]", "[SEP]"};
  words.insert(words.end(), unique.begin(), unique.end());
  return from_words(std::move(words));
}

Vocab Vocab::from_words(std::vector<std::string> words) {
  Vocab v;
  v.words_ = std::move(words);
  for (size_t i = 0; i < v.words_.size(); ++i) v.index_[v.words_[i]] = static_cast<int>(i);
  if (v.words_.size() < 2 || v.words_[0] != "[CLS]" || v.words_[1] != "[SEP]")
    throw VocabError("vocab must start with [CLS], [SEP]");
  return v;
}

int Vocab::id(const std::string& token) const {
  const auto it = index_.find(fold_case(token));
  if (it == index_.end()) throw VocabError("unknown token: " + token);
  return it->second;
}

std::vector<int> Vocab::encode(const std::vector<TaggedToken>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(kCls);
  for (const auto& tok : tokens) ids.push_back(id(tok.text));
  ids.push_back(kSep);
  return ids;
}

Tensor& ParamStore::create(const std::string& name, std::vector<int> shape, Rng& rng, real bound) {
  std::vector<real> data(shape_numel(shape));
  for (real& v : data) v = static_cast<real>(rng.uniform(-bound, bound));
  auto [it, inserted] = params_.emplace(name, Tensor::from_data(std::move(shape), std::move(data), true));
  if (!inserted) throw InternalError("duplicate parameter name: " + name);
  return it->second;
}

Tensor& ParamStore::create_const(const std::string& name, std::vector<int> shape, real value) {
  auto [it, inserted] = params_.emplace(name, Tensor::full(std::move(shape), value, true));
  if (!inserted) throw InternalError("duplicate parameter name: " + name);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  const auto it = params_.find(name);
  if (it == params_.end()) throw InternalError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end()) throw InternalError("unknown parameter: " + name);
  return it->second;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

size_t ParamStore::parameter_count() const {
  size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grads() const {
  for (const auto& [name, t] : params_) t.zero_grad();
}

namespace {

// One pre-LN transformer block under `prefix`: x + Wo·MHA(LN1(x)), then
// h + FF(LN2(h)) with a GELU feed-forward.
void create_block_params(ParamStore& params, const std::string& prefix, const EncoderConfig& cfg,
                         Rng& rng) {
  const int d = cfg.d;
  const int h = cfg.ff_mult * d;
  const real bound_d = static_cast<real>(1.0 / std::sqrt(static_cast<double>(d)));
  const real bound_h = static_cast<real>(1.0 / std::sqrt(static_cast<double>(h)));
  params.create_const(prefix + ".ln1.gamma", {d}, 1);
  params.create_const(prefix + ".ln1.beta", {d}, 0);
  params.create(prefix + ".attn.wq", {d, d}, rng, bound_d);
  params.create_const(prefix + ".attn.bq", {d}, 0);
  // no key bias: a constant added to every key cancels in the row softmax
  params.create(prefix + ".attn.wk", {d, d}, rng, bound_d);
  params.create(prefix + ".attn.wv", {d, d}, rng, bound_d);
  params.create_const(prefix + ".attn.bv", {d}, 0);
  params.create(prefix + ".attn.wo", {d, d}, rng, bound_d);
  params.create_const(prefix + ".attn.bo", {d}, 0);
  params.create_const(prefix + ".ln2.gamma", {d}, 1);
  params.create_const(prefix + ".ln2.beta", {d}, 0);
  params.create(prefix + ".ff.w1", {d, h}, rng, bound_d);
  params.create_const(prefix + ".ff.b1", {h}, 0);
  params.create(prefix + ".ff.w2", {h, d}, rng, bound_h);
  params.create_const(prefix + ".ff.b2", {d}, 0);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

// Non-affine closing norm of a pre-LN stack. Keeping it parameter-free avoids
// loss-invariant shift directions (a learnable output bias moves every pooled
// embedding identically, which the NCE softmax cancels exactly).
Tensor final_norm(const Tensor& x) {
  const int d = x.dim(1);
  return layer_norm(x, Tensor::full({d}, 1), Tensor::zeros({d}));
}

// Transformer stack over independent row blocks of one stacked tensor.
// A single sequence is the one-block special case.
Tensor run_blocks(Tensor x, const std::vector<int>& boundaries, const std::string& stem,
                  int layers, const ParamStore& params, const EncoderConfig& cfg) {
  const real scale = static_cast<real>(1.0 / std::sqrt(static_cast<double>(cfg.head_dim())));
  for (int i = 0; i < layers; ++i) {
    const std::string prefix = stem + ".block" + std::to_string(i);
    Tensor normed = layer_norm(x, params.at(prefix + ".ln1.gamma"), params.at(prefix + ".ln1.beta"));
    Tensor q = linear(normed, params.at(prefix + ".attn.wq"), params.at(prefix + ".attn.bq"));
    Tensor k = matmul(normed, params.at(prefix + ".attn.wk"));
    Tensor v = linear(normed, params.at(prefix + ".attn.wv"), params.at(prefix + ".attn.bv"));
    Tensor ctx = attention_block_diag(q, k, v, boundaries, cfg.heads, scale);
    Tensor h = add(x, linear(ctx, params.at(prefix + ".attn.wo"), params.at(prefix + ".attn.bo")));
    Tensor normed2 =
        layer_norm(h, params.at(prefix + ".ln2.gamma"), params.at(prefix + ".ln2.beta"));
    Tensor ff =
        linear(gelu(linear(normed2, params.at(prefix + ".ff.w1"), params.at(prefix + ".ff.b1"))),
               params.at(prefix + ".ff.w2"), params.at(prefix + ".ff.b2"));
    x = add(h, ff);
  }
  return final_norm(x);
}

std::vector<int> single_block(int rows) { return {0, rows}; }

}  // namespace

AlignmentModel AlignmentModel::init(const EncoderConfig& config, Vocab vocab, uint64_t seed) {
  config.validate();
  if (config.vocab_size != 0 && config.vocab_size != vocab.size())
    throw ConfigError("encoder config: vocab_size does not match the vocabulary");

  AlignmentModel model;
  model.config = config;
  model.config.vocab_size = vocab.size();
  model.vocab = std::move(vocab);

  Rng rng = Rng(seed).fork(0x696e6974);  // init stream
  ParamStore& p = model.params;
  const int d = config.d;
  const real bound_d = static_cast<real>(1.0 / std::sqrt(static_cast<double>(d)));
  const real bound_vin = static_cast<real>(1.0 / std::sqrt(static_cast<double>(config.d_video_in)));

  p.create("video.proj.w", {config.d_video_in, d}, rng, bound_vin);
  p.create_const("video.proj.b", {d}, 0);
  for (int i = 0; i < config.video_layers; ++i)
    create_block_params(p, "video.block" + std::to_string(i), config, rng);

  p.create("text.tok_emb", {model.config.vocab_size, d}, rng, bound_d);
  p.create("text.pos_emb", {config.n_max, d}, rng, bound_d);
  for (int i = 0; i < config.text_layers; ++i)
    create_block_params(p, "text.block" + std::to_string(i), config, rng);

  p.create("fusion.type_emb", {2, d}, rng, bound_d);
  p.create("fusion.pos_emb", {config.m_max + config.n_max, d}, rng, bound_d);
  for (int i = 0; i < config.fusion_layers; ++i)
    create_block_params(p, "fusion.block" + std::to_string(i), config, rng);

  p.create("head.w", {d}, rng, bound_d);
  p.create_const("head.b", {}, 0);
  return model;
}

namespace {

void check_video_input(const Tensor& features, const EncoderConfig& config) {
  if (features.rank() != 2) throw DimensionError("encode_video: features must be rank-2");
  const int m = features.dim(0);
  if (m == 0) throw DimensionError("encode_video: empty frame sequence");
  if (m > config.m_max)
    throw DimensionError("encode_video: sequence length " + std::to_string(m) +
                         " exceeds m_max=" + std::to_string(config.m_max));
  if (features.dim(1) != config.d_video_in)
    throw DimensionError("encode_video: feature width " + std::to_string(features.dim(1)) +
                         " does not match d_video_in=" + std::to_string(config.d_video_in));
}

void check_text_input(const std::vector<int>& token_ids, const EncoderConfig& config) {
  const int n = static_cast<int>(token_ids.size());
  if (n < 2) throw DimensionError("encode_text: sequence must contain [CLS] and [SEP]");
  if (n > config.n_max)
    throw DimensionError("encode_text: sequence length " + std::to_string(n) +
                         " exceeds n_max=" + std::to_string(config.n_max));
  if (token_ids.front() != Vocab::kCls || token_ids.back() != Vocab::kSep)
    throw VocabError("encode_text: sequence must start with [CLS] and end with [SEP]");
}

}  // namespace

EncodedVideo AlignmentModel::encode_video(const Tensor& features) const {
  check_video_input(features, config);
  Tensor x = add_rowvec(matmul(features, params.at("video.proj.w")), params.at("video.proj.b"));
  x = run_blocks(std::move(x), single_block(features.dim(0)), "video", config.video_layers, params,
                 config);
  Tensor mean = mean_rows(x);
  return {std::move(x), std::move(mean)};
}

EncodedText AlignmentModel::encode_text(const std::vector<int>& token_ids) const {
  check_text_input(token_ids, config);
  const int n = static_cast<int>(token_ids.size());
  Tensor x = add(gather_rows(params.at("text.tok_emb"), token_ids),
                 slice_rows(params.at("text.pos_emb"), 0, n));
  x = run_blocks(std::move(x), single_block(n), "text", config.text_layers, params, config);
  Tensor cls = row(x, 0);
  return {std::move(x), std::move(cls)};
}

FusionOutput AlignmentModel::fuse(const Tensor& video_tokens, const Tensor& text_tokens) const {
  if (video_tokens.rank() != 2 || text_tokens.rank() != 2)
    throw DimensionError("fuse: inputs must be rank-2");
  if (video_tokens.dim(1) != config.d || text_tokens.dim(1) != config.d)
    throw DimensionError("fuse: input width does not match d");
  const int m = video_tokens.dim(0);
  const int n = text_tokens.dim(0);
  if (m + n > config.m_max + config.n_max)
    throw DimensionError("fuse: combined sequence exceeds positional table");

  // type 0 = video, type 1 = text
  Tensor typed_video = add_rowvec(video_tokens, row(params.at("fusion.type_emb"), 0));
  Tensor typed_text = add_rowvec(text_tokens, row(params.at("fusion.type_emb"), 1));
  Tensor x = config.fusion_text_first ? concat_rows(typed_text, typed_video)
                                      : concat_rows(typed_video, typed_text);
  // positions span the whole concatenation
  x = add(std::move(x), slice_rows(params.at("fusion.pos_emb"), 0, m + n));
  x = run_blocks(std::move(x), single_block(m + n), "fusion", config.fusion_layers, params, config);
  const int cls_pos = config.fusion_text_first ? 0 : m;
  Tensor cls = row(x, cls_pos);
  return {std::move(x), std::move(cls)};
}

Tensor AlignmentModel::fuse_pairs(const EncodedBatch& batch,
                                  const std::vector<std::pair<int, int>>& pairs) const {
  if (pairs.empty()) throw DimensionError("fuse_pairs: empty pair list");
  const int K = batch.batch_size();

  // typed tokens are pair-independent; embed each record once
  std::vector<Tensor> typed_video, typed_text;
  typed_video.reserve(static_cast<size_t>(K));
  typed_text.reserve(static_cast<size_t>(K));
  for (int r = 0; r < K; ++r) {
    typed_video.push_back(
        add_rowvec(batch.video_tokens[static_cast<size_t>(r)], row(params.at("fusion.type_emb"), 0)));
    typed_text.push_back(
        add_rowvec(batch.text_tokens[static_cast<size_t>(r)], row(params.at("fusion.type_emb"), 1)));
  }

  std::vector<Tensor> parts;
  std::vector<int> boundaries = {0};
  std::vector<int> cls_rows;
  parts.reserve(pairs.size());
  for (const auto& [j, i] : pairs) {
    if (j < 0 || j >= K || i < 0 || i >= K) throw DimensionError("fuse_pairs: pair index out of range");
    const Tensor& tv = typed_video[static_cast<size_t>(j)];
    const Tensor& tt = typed_text[static_cast<size_t>(i)];
    const int m = tv.dim(0), n = tt.dim(0);
    Tensor x = config.fusion_text_first ? concat_rows(tt, tv) : concat_rows(tv, tt);
    x = add(std::move(x), slice_rows(params.at("fusion.pos_emb"), 0, m + n));
    cls_rows.push_back(boundaries.back() + (config.fusion_text_first ? 0 : m));
    boundaries.push_back(boundaries.back() + m + n);
    parts.push_back(std::move(x));
  }

  Tensor stacked = run_blocks(concat_rows_multi(parts), boundaries, "fusion",
                              config.fusion_layers, params, config);
  return gather_rows(stacked, cls_rows);
}

EncodedBatch AlignmentModel::encode_batch(const std::vector<const CorpusRecord*>& records) const {
  if (records.empty()) throw DimensionError("encode_batch: empty batch");
  EncodedBatch batch;
  const int K = static_cast<int>(records.size());

  // videos: one stacked projection + stack, then per-record slices
  {
    std::vector<Tensor> features;
    std::vector<int> boundaries = {0};
    for (const CorpusRecord* rec : records) {
      Tensor f = rec->features_tensor();
      check_video_input(f, config);
      boundaries.push_back(boundaries.back() + f.dim(0));
      features.push_back(std::move(f));
    }
    Tensor x = add_rowvec(matmul(concat_rows_multi(features), params.at("video.proj.w")),
                          params.at("video.proj.b"));
    x = run_blocks(std::move(x), boundaries, "video", config.video_layers, params, config);
    std::vector<Tensor> means;
    for (int r = 0; r < K; ++r) {
      Tensor tokens = slice_rows(x, boundaries[static_cast<size_t>(r)],
                                 boundaries[static_cast<size_t>(r + 1)] - boundaries[static_cast<size_t>(r)]);
      means.push_back(mean_rows(tokens));
      batch.video_tokens.push_back(std::move(tokens));
    }
    batch.video_means = stack_rows(means);
  }

  // texts: stacked embedding lookup + positional, then per-record slices
  {
    std::vector<Tensor> parts;
    std::vector<int> boundaries = {0};
    for (const CorpusRecord* rec : records) {
      const std::vector<int> ids = vocab.encode(rec->tokens);
      check_text_input(ids, config);
      parts.push_back(add(gather_rows(params.at("text.tok_emb"), ids),
                          slice_rows(params.at("text.pos_emb"), 0, static_cast<int>(ids.size()))));
      boundaries.push_back(boundaries.back() + static_cast<int>(ids.size()));
    }
    Tensor y = run_blocks(concat_rows_multi(parts), boundaries, "text", config.text_layers, params,
                          config);
    std::vector<Tensor> cls;
    for (int r = 0; r < K; ++r) {
      Tensor tokens = slice_rows(y, boundaries[static_cast<size_t>(r)],
                                 boundaries[static_cast<size_t>(r + 1)] - boundaries[static_cast<size_t>(r)]);
      cls.push_back(row(tokens, 0));
      batch.text_tokens.push_back(std::move(tokens));
    }
    batch.text_cls = stack_rows(cls);
  }
  return batch;
}

}  // namespace cascalign
