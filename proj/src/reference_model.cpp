#include "kpa/reference_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

#include "kpa/error.hpp"
#include "kpa/jsonl.hpp"
#include "kpa/text.hpp"

namespace kpa {

using nlohmann::json;

namespace {

constexpr int kUnkId = 0;
constexpr int kBosId = 1;

// Portable uniform in [-1, 1): avoids distribution implementation drift.
double next_uniform(std::mt19937_64& rng) {
  return 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
}

}  // namespace

ReferenceModel::ReferenceModel(std::vector<std::string> vocab_words, const ReferenceModelConfig& config)
    : config_(config) {
  if (config_.embed_dim < 1 || config_.hidden_dim < 1) throw ValidationError("model dimensions must be positive");
  vocab_.reserve(vocab_words.size() + 2);
  vocab_.push_back("<unk>");
  vocab_.push_back("<bos>");
  for (auto& w : vocab_words) {
    if (w == "<unk>" || w == "<bos>") continue;
    vocab_.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) vocab_index_[vocab_[i]] = static_cast<int>(i);
  init_parameters();
}

ReferenceModel ReferenceModel::fit(std::span<const QAPair> dataset, std::span<const KnowledgeItem> kb,
                                   const PromptTemplate& tmpl, const ReferenceModelConfig& config) {
  std::set<std::string> words;
  const auto absorb = [&words](std::string_view text) {
    for (auto& t : tokenize(text, TokenizerMode::Whitespace)) words.insert(std::move(t));
  };
  for (const auto& qa : dataset) {
    absorb(qa.question);
    absorb(qa.golden_answer);
  }
  for (const auto& item : kb) absorb(item.surface);
  absorb(tmpl.template_text);
  absorb(tmpl.knowledge_separator);

  std::vector<std::string> vocab(words.begin(), words.end());  // sorted, deterministic
  if (static_cast<int>(vocab.size()) > config.max_vocab) {
    vocab.resize(static_cast<std::size_t>(config.max_vocab));
  }
  return ReferenceModel(std::move(vocab), config);
}

std::size_t ReferenceModel::w_h_offset() const {
  return vocab_.size() * static_cast<std::size_t>(config_.embed_dim);
}
std::size_t ReferenceModel::b_h_offset() const {
  return w_h_offset() + static_cast<std::size_t>(config_.hidden_dim) * 2 * static_cast<std::size_t>(config_.embed_dim);
}
std::size_t ReferenceModel::w_o_offset() const { return b_h_offset() + static_cast<std::size_t>(config_.hidden_dim); }
std::size_t ReferenceModel::b_o_offset() const {
  return w_o_offset() + vocab_.size() * static_cast<std::size_t>(config_.hidden_dim);
}

void ReferenceModel::init_parameters() {
  const std::size_t total = b_o_offset() + vocab_.size();
  params_.assign(total, 0.0);
  grads_.assign(total, 0.0);
  adam_m_.assign(total, 0.0);
  adam_v_.assign(total, 0.0);
  std::mt19937_64 rng(config_.seed);
  // Biases start at zero; weights uniform in [-init_scale, init_scale).
  for (std::size_t i = 0; i < b_h_offset(); ++i) params_[i] = config_.init_scale * next_uniform(rng);
  for (std::size_t i = w_o_offset(); i < b_o_offset(); ++i) params_[i] = config_.init_scale * next_uniform(rng);
}

int ReferenceModel::vocab_id(const std::string& token) const {
  const auto it = vocab_index_.find(token);
  return it == vocab_index_.end() ? kUnkId : it->second;
}

std::vector<int> ReferenceModel::tokenize(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : kpa::tokenize(text, TokenizerMode::Whitespace)) ids.push_back(vocab_id(t));
  return ids;
}

namespace {

void check_token_range(std::span<const int> tokens, std::size_t vocab_size) {
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
      throw ValidationError("token id out of range: " + std::to_string(t));
    }
  }
}

}  // namespace

std::vector<double> ReferenceModel::answer_token_logprobs(std::span<const int> prompt_tokens,
                                                          std::span<const int> answer_tokens) const {
  if (answer_tokens.empty()) throw ValidationError("cannot score an empty answer");
  check_token_range(prompt_tokens, vocab_.size());
  check_token_range(answer_tokens, vocab_.size());

  const std::size_t d = static_cast<std::size_t>(config_.embed_dim);
  const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
  const std::size_t v = vocab_.size();
  const double* embed = params_.data() + embed_offset();
  const double* w_h = params_.data() + w_h_offset();
  const double* b_h = params_.data() + b_h_offset();
  const double* w_o = params_.data() + w_o_offset();
  const double* b_o = params_.data() + b_o_offset();

  std::vector<int> seq;
  seq.reserve(1 + prompt_tokens.size() + answer_tokens.size());
  seq.push_back(kBosId);
  seq.insert(seq.end(), prompt_tokens.begin(), prompt_tokens.end());
  seq.insert(seq.end(), answer_tokens.begin(), answer_tokens.end());

  std::vector<double> ctx_sum(d, 0.0);
  const std::size_t context_base = 1 + prompt_tokens.size();
  for (std::size_t t = 0; t < context_base; ++t) {
    const double* e = embed + static_cast<std::size_t>(seq[t]) * d;
    for (std::size_t i = 0; i < d; ++i) ctx_sum[i] += e[i];
  }

  std::vector<double> out(answer_tokens.size());
  std::vector<double> x(2 * d), hidden(h), logits(v);
  for (std::size_t j = 0; j < answer_tokens.size(); ++j) {
    const std::size_t c = context_base + j;  // context length for this position
    const int prev = seq[c - 1];
    const int target = seq[c];
    const double* prev_e = embed + static_cast<std::size_t>(prev) * d;
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = prev_e[i];
      x[d + i] = ctx_sum[i] / static_cast<double>(c);
    }
    for (std::size_t r = 0; r < h; ++r) {
      double acc = b_h[r];
      const double* row = w_h + r * 2 * d;
      for (std::size_t i = 0; i < 2 * d; ++i) acc += row[i] * x[i];
      hidden[r] = std::tanh(acc);
    }
    double max_logit = -1e300;
    for (std::size_t k = 0; k < v; ++k) {
      double acc = b_o[k];
      const double* row = w_o + k * h;
      for (std::size_t r = 0; r < h; ++r) acc += row[r] * hidden[r];
      logits[k] = acc;
      max_logit = std::max(max_logit, acc);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < v; ++k) z += std::exp(logits[k] - max_logit);
    out[j] = logits[static_cast<std::size_t>(target)] - max_logit - std::log(z);

    // The scored token joins the context of the next position.
    const double* e = embed + static_cast<std::size_t>(target) * d;
    for (std::size_t i = 0; i < d; ++i) ctx_sum[i] += e[i];
  }
  return out;
}

void ReferenceModel::accumulate_score_gradient(std::span<const int> prompt_tokens,
                                               std::span<const int> answer_tokens, double upstream) {
  if (answer_tokens.empty()) throw ValidationError("cannot score an empty answer");
  if (upstream == 0.0) return;
  check_token_range(prompt_tokens, vocab_.size());
  check_token_range(answer_tokens, vocab_.size());

  const std::size_t d = static_cast<std::size_t>(config_.embed_dim);
  const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
  const std::size_t v = vocab_.size();
  const double* embed = params_.data() + embed_offset();
  const double* w_h = params_.data() + w_h_offset();
  const double* b_h = params_.data() + b_h_offset();
  const double* w_o = params_.data() + w_o_offset();
  double* g_embed = grads_.data() + embed_offset();
  double* g_w_h = grads_.data() + w_h_offset();
  double* g_b_h = grads_.data() + b_h_offset();
  double* g_w_o = grads_.data() + w_o_offset();
  double* g_b_o = grads_.data() + b_o_offset();

  std::vector<int> seq;
  seq.reserve(1 + prompt_tokens.size() + answer_tokens.size());
  seq.push_back(kBosId);
  seq.insert(seq.end(), prompt_tokens.begin(), prompt_tokens.end());
  seq.insert(seq.end(), answer_tokens.begin(), answer_tokens.end());

  const std::size_t n = answer_tokens.size();
  const std::size_t context_base = 1 + prompt_tokens.size();
  const double score_scale = upstream / static_cast<double>(n);  // dS/dlogp_j = 1/n

  // Forward pass, keeping what backward needs.
  std::vector<double> ctx_means(n * d);
  std::vector<double> xs(n * 2 * d);
  std::vector<double> hiddens(n * h);
  std::vector<double> probs(n * v);

  std::vector<double> ctx_sum(d, 0.0);
  for (std::size_t t = 0; t < context_base; ++t) {
    const double* e = embed + static_cast<std::size_t>(seq[t]) * d;
    for (std::size_t i = 0; i < d; ++i) ctx_sum[i] += e[i];
  }
  std::vector<double> logits(v);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t c = context_base + j;
    const int prev = seq[c - 1];
    const int target = seq[c];
    double* x = xs.data() + j * 2 * d;
    double* hid = hiddens.data() + j * h;
    double* ctx_mean = ctx_means.data() + j * d;
    const double* prev_e = embed + static_cast<std::size_t>(prev) * d;
    for (std::size_t i = 0; i < d; ++i) {
      ctx_mean[i] = ctx_sum[i] / static_cast<double>(c);
      x[i] = prev_e[i];
      x[d + i] = ctx_mean[i];
    }
    for (std::size_t r = 0; r < h; ++r) {
      double acc = b_h[r];
      const double* row = w_h + r * 2 * d;
      for (std::size_t i = 0; i < 2 * d; ++i) acc += row[i] * x[i];
      hid[r] = std::tanh(acc);
    }
    double max_logit = -1e300;
    for (std::size_t k = 0; k < v; ++k) {
      double acc = params_[b_o_offset() + k];
      const double* row = w_o + k * h;
      for (std::size_t r = 0; r < h; ++r) acc += row[r] * hid[r];
      logits[k] = acc;
      max_logit = std::max(max_logit, acc);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < v; ++k) z += std::exp(logits[k] - max_logit);
    double* p = probs.data() + j * v;
    for (std::size_t k = 0; k < v; ++k) p[k] = std::exp(logits[k] - max_logit) / z;

    const double* e = embed + static_cast<std::size_t>(target) * d;
    for (std::size_t i = 0; i < d; ++i) ctx_sum[i] += e[i];
  }

  // Backward. dctx_tail[j] accumulates sum_{j' >= j} dctx_mean_{j'} / c_{j'}
  // so each sequence token adds the tail starting at the first position
  // whose context contains it.
  std::vector<double> dctx_per_pos(n * d, 0.0);
  std::vector<double> dx(2 * d), dh(h);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t c = context_base + j;
    const int prev = seq[c - 1];
    const int target = seq[c];
    const double* p = probs.data() + j * v;
    const double* hid = hiddens.data() + j * h;
    const double* x = xs.data() + j * 2 * d;

    // dL/dlogits = score_scale * (p - onehot(target)) ... with S maximized,
    // sign folded into score_scale: dS/dlogit_k = (1/n)(onehot_k - p_k).
    // dW_o[k] += dlogit_k * hid; dh = sum_k dlogit_k * W_o[k].
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t k = 0; k < v; ++k) {
      const double dlogit = score_scale * ((static_cast<std::size_t>(target) == k ? 1.0 : 0.0) - p[k]);
      if (dlogit == 0.0) continue;
      double* g_row = g_w_o + k * h;
      const double* row = w_o + k * h;
      for (std::size_t r = 0; r < h; ++r) {
        g_row[r] += dlogit * hid[r];
        dh[r] += dlogit * row[r];
      }
      g_b_o[k] += dlogit;
    }

    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t r = 0; r < h; ++r) {
      const double dpre = dh[r] * (1.0 - hid[r] * hid[r]);
      if (dpre == 0.0) continue;
      double* g_row = g_w_h + r * 2 * d;
      const double* row = w_h + r * 2 * d;
      for (std::size_t i = 0; i < 2 * d; ++i) {
        g_row[i] += dpre * x[i];
        dx[i] += dpre * row[i];
      }
      g_b_h[r] += dpre;
    }

    double* g_prev = g_embed + static_cast<std::size_t>(prev) * d;
    for (std::size_t i = 0; i < d; ++i) g_prev[i] += dx[i];
    double* dctx = dctx_per_pos.data() + j * d;
    for (std::size_t i = 0; i < d; ++i) dctx[i] = dx[d + i] / static_cast<double>(c);
  }

  // Suffix sums of dctx_per_pos distribute the context-mean gradient to
  // every token each context contains. Token at sequence index t sits in
  // the contexts of positions j >= max(0, t - prompt_len) (t < c_j).
  std::vector<double> tail(d, 0.0);
  std::vector<double> tails((n + 1) * d, 0.0);
  for (std::size_t j = n; j-- > 0;) {
    const double* dctx = dctx_per_pos.data() + j * d;
    for (std::size_t i = 0; i < d; ++i) tail[i] += dctx[i];
    std::copy(tail.begin(), tail.end(), tails.begin() + static_cast<std::ptrdiff_t>(j * d));
  }
  const std::size_t seq_len = seq.size();
  for (std::size_t t = 0; t < seq_len; ++t) {
    const std::size_t first_pos = t < context_base ? 0 : t - context_base + 1;
    if (first_pos >= n) continue;
    const double* tl = tails.data() + first_pos * d;
    double* g_tok = g_embed + static_cast<std::size_t>(seq[t]) * d;
    for (std::size_t i = 0; i < d; ++i) g_tok[i] += tl[i];
  }
}

void ReferenceModel::zero_gradients() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void ReferenceModel::apply_gradients(const AdamWConfig& config, double grad_scale) {
  ++adam_step_;
  const double bc1 = 1.0 - std::pow(config.beta1, adam_step_);
  const double bc2 = 1.0 - std::pow(config.beta2, adam_step_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const double g = grads_[i] * grad_scale;
    adam_m_[i] = config.beta1 * adam_m_[i] + (1.0 - config.beta1) * g;
    adam_v_[i] = config.beta2 * adam_v_[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = adam_m_[i] / bc1;
    const double v_hat = adam_v_[i] / bc2;
    params_[i] -= config.learning_rate * (m_hat / (std::sqrt(v_hat) + config.eps) + config.weight_decay * params_[i]);
  }
}

std::string ReferenceModel::generate(std::string_view prompt, int max_tokens) const {
  const auto prompt_tokens = tokenize(prompt);
  const std::size_t d = static_cast<std::size_t>(config_.embed_dim);
  const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
  const std::size_t v = vocab_.size();
  const double* embed = params_.data() + embed_offset();
  const double* w_h = params_.data() + w_h_offset();
  const double* b_h = params_.data() + b_h_offset();
  const double* w_o = params_.data() + w_o_offset();
  const double* b_o = params_.data() + b_o_offset();

  std::vector<int> seq;
  seq.push_back(kBosId);
  seq.insert(seq.end(), prompt_tokens.begin(), prompt_tokens.end());
  std::vector<double> ctx_sum(d, 0.0);
  for (int t : seq) {
    const double* e = embed + static_cast<std::size_t>(t) * d;
    for (std::size_t i = 0; i < d; ++i) ctx_sum[i] += e[i];
  }

  std::string text;
  std::vector<double> x(2 * d), hidden(h);
  for (int step = 0; step < max_tokens; ++step) {
    const std::size_t c = seq.size();
    const double* prev_e = embed + static_cast<std::size_t>(seq.back()) * d;
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = prev_e[i];
      x[d + i] = ctx_sum[i] / static_cast<double>(c);
    }
    for (std::size_t r = 0; r < h; ++r) {
      double acc = b_h[r];
      const double* row = w_h + r * 2 * d;
      for (std::size_t i = 0; i < 2 * d; ++i) acc += row[i] * x[i];
      hidden[r] = std::tanh(acc);
    }
    int best = kUnkId;
    double best_logit = -1e300;
    for (std::size_t k = 0; k < v; ++k) {
      if (static_cast<int>(k) == kBosId) continue;  // BOS never appears mid-sequence
      double acc = b_o[k];
      const double* row = w_o + k * h;
      for (std::size_t r = 0; r < h; ++r) acc += row[r] * hidden[r];
      if (acc > best_logit) {
        best_logit = acc;
        best = static_cast<int>(k);
      }
    }
    seq.push_back(best);
    const double* e = embed + static_cast<std::size_t>(best) * d;
    for (std::size_t i = 0; i < d; ++i) ctx_sum[i] += e[i];
    if (!text.empty()) text += ' ';
    text += vocab_[static_cast<std::size_t>(best)];
  }
  return text;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void ReferenceModel::save_checkpoint(const std::filesystem::path& path, std::string_view config_hash,
                                     int epoch) const {
  json j;
  j["artifact"] = "checkpoint";
  j["version"] = 1;
  j["config_hash"] = std::string(config_hash);
  j["epoch"] = epoch;
  j["adam_step"] = adam_step_;
  j["embed_dim"] = config_.embed_dim;
  j["hidden_dim"] = config_.hidden_dim;
  j["max_vocab"] = config_.max_vocab;
  j["init_scale"] = config_.init_scale;
  j["seed"] = config_.seed;
  j["vocab"] = std::vector<std::string>(vocab_.begin() + 2, vocab_.end());  // specials are implicit
  j["params"] = params_;
  j["adam_m"] = adam_m_;
  j["adam_v"] = adam_v_;
  write_text_file(path, j.dump());
}

LoadedReferenceModel ReferenceModel::load_checkpoint(const std::filesystem::path& path,
                                                                 std::string_view expected_config_hash) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": malformed checkpoint: " + e.what());
  }
  if (j.value("artifact", "") != "checkpoint") throw ValidationError(path.string() + ": not a checkpoint file");
  if (j.value("version", 0) != 1) throw ValidationError(path.string() + ": unsupported checkpoint version");
  if (!expected_config_hash.empty() && j.value("config_hash", "") != expected_config_hash) {
    throw ValidationError(path.string() + ": config hash mismatch (checkpoint " + j.value("config_hash", "") +
                          ", current config " + std::string(expected_config_hash) + ")");
  }

  ReferenceModelConfig config;
  config.embed_dim = j.at("embed_dim").get<int>();
  config.hidden_dim = j.at("hidden_dim").get<int>();
  config.max_vocab = j.at("max_vocab").get<int>();
  config.init_scale = j.at("init_scale").get<double>();
  config.seed = j.at("seed").get<std::uint64_t>();

  ReferenceModel model(j.at("vocab").get<std::vector<std::string>>(), config);
  auto params = j.at("params").get<std::vector<double>>();
  auto adam_m = j.at("adam_m").get<std::vector<double>>();
  auto adam_v = j.at("adam_v").get<std::vector<double>>();
  if (params.size() != model.params_.size() || adam_m.size() != params.size() || adam_v.size() != params.size()) {
    throw ValidationError(path.string() + ": parameter count mismatch");
  }
  model.params_ = std::move(params);
  model.adam_m_ = std::move(adam_m);
  model.adam_v_ = std::move(adam_v);
  model.adam_step_ = j.at("adam_step").get<int>();
  return LoadedReferenceModel{std::move(model), j.at("epoch").get<int>()};
}

}  // namespace kpa
