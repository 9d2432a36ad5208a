#include "jet/inference.hpp"

#include <algorithm>
#include <cmath>

#include "jet/common.hpp"

namespace jet {

void DecodeOptions::validate() const {
  if (beam_size < 1) throw Error("decode: beam size must be >= 1");
  if (max_len < 1) throw Error("decode: max_len must be >= 1");
  if (nbest < 1) throw Error("decode: nbest must be >= 1");
  if (!std::isfinite(length_penalty)) throw Error("decode: length penalty must be finite");
}

double normalized_score(double log_prob, int length, double length_penalty) {
  return log_prob / std::pow(static_cast<double>(std::max(length, 1)), length_penalty);
}

double BeamHypothesis::score(double length_penalty) const {
  return normalized_score(log_prob, length(), length_penalty);
}

bool is_generatable(int token) { return token != Vocabulary::kPad && token != Vocabulary::kSos; }

std::vector<int> greedy_decode(const ModelParameters& params, const EncoderOutput& enc, int max_len) {
  if (max_len < 1) throw Error("decode: max_len must be >= 1");
  IncrementalDecoder dec(params, enc);
  auto state = dec.start();
  std::vector<int> out;
  int token = Vocabulary::kSos;
  double cumulative = 0.0;  // compared exactly as beam search does
  while (static_cast<int>(out.size()) < max_len) {
    const Eigen::VectorXd logp = dec.advance(state, token);
    int best = -1;
    for (int t = 0; t < logp.size(); ++t) {
      if (!is_generatable(t)) continue;
      if (best < 0 || cumulative + logp(t) > cumulative + logp(best)) best = t;
    }
    if (best < 0) throw Error("decode: vocabulary has no generatable tokens");
    cumulative += logp(best);
    out.push_back(best);
    if (best == Vocabulary::kEos) break;
    token = best;
  }
  return out;
}

namespace {

struct Live {
  BeamHypothesis hyp;
  IncrementalDecoder::State state;
  Eigen::VectorXd next;  // log-probabilities of the following token
};

// Candidates of one step share a length, so ranking by raw log-probability
// equals ranking by normalized score.
struct Candidate {
  double log_prob;
  int parent;
  int token;
};

}  // namespace

std::vector<BeamHypothesis> beam_search(const ModelParameters& params, const EncoderOutput& enc,
                                        const DecodeOptions& opts) {
  opts.validate();
  IncrementalDecoder dec(params, enc);
  std::vector<Live> live(1);
  live[0].hyp.tokens = {Vocabulary::kSos};
  live[0].state = dec.start();
  live[0].next = dec.advance(live[0].state, Vocabulary::kSos);
  std::vector<BeamHypothesis> finished;
  std::vector<Candidate> cands;

  for (int step = 1; step <= opts.max_len && !live.empty(); ++step) {
    cands.clear();
    for (int r = 0; r < static_cast<int>(live.size()); ++r) {
      const auto& lv = live[static_cast<std::size_t>(r)];
      for (int t = 0; t < lv.next.size(); ++t) {
        if (!is_generatable(t)) continue;
        const double lp = lv.hyp.log_prob + lv.next(t);
        cands.push_back({lp, r, t});
      }
    }
    const auto keep = std::min(cands.size(), static_cast<std::size_t>(opts.beam_size));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Live> next_live;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cd = cands[c];
      const Live& parent = live[static_cast<std::size_t>(cd.parent)];
      BeamHypothesis hyp = parent.hyp;
      hyp.tokens.push_back(cd.token);
      hyp.log_prob = cd.log_prob;
      if (cd.token == Vocabulary::kEos) {
        hyp.finished = true;
        finished.push_back(std::move(hyp));
        continue;
      }
      Live child{std::move(hyp), parent.state, {}};
      if (step < opts.max_len) child.next = dec.advance(child.state, cd.token);
      next_live.push_back(std::move(child));
    }
    live = std::move(next_live);
  }

  std::vector<BeamHypothesis> pool = std::move(finished);
  for (auto& lv : live) pool.push_back(std::move(lv.hyp));
  std::stable_sort(pool.begin(), pool.end(), [&](const BeamHypothesis& a, const BeamHypothesis& b) {
    return a.score(opts.length_penalty) > b.score(opts.length_penalty);
  });
  return pool;
}

std::vector<int> predict_picker(const ModelParameters& params, const EncoderOutput& enc) {
  const Matrix probs = picker_forward(enc, params);
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    if (probs.cols() == 1) {
      out[static_cast<std::size_t>(i)] = probs(i, 0) >= 0.5 ? 1 : 0;
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < probs.cols(); ++c) {
        if (probs(i, c) > probs(i, best)) best = c;
      }
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
  }
  return out;
}

std::vector<int> strip_special(const std::vector<int>& ids) {
  std::vector<int> out;
  for (int id : ids) {
    if (id == Vocabulary::kSos || id == Vocabulary::kPad) continue;
    if (id == Vocabulary::kEos) break;
    out.push_back(id);
  }
  return out;
}

std::string detokenize_ids(const std::vector<int>& ids, const Vocabulary& vocab, const LanguageConfig& lang) {
  std::vector<std::string> tokens;
  for (int id : strip_special(ids)) {
    if (id == Vocabulary::kX1 || id == Vocabulary::kX2) continue;
    tokens.push_back(vocab.token(id));
  }
  return detokenize(tokens, lang);
}

Restoration restore(const DialogueSample& sample, const ModelParameters& params, const Vocabulary& vocab,
                    const LanguageConfig& lang, const DecodeOptions& opts, const SerializeOptions& ser) {
  if (params.config().vocab_size != vocab.size())
    throw Error("restore: checkpoint vocabulary size " + std::to_string(params.config().vocab_size) +
                " does not match the vocabulary (" + std::to_string(vocab.size()) + ")");
  const EncodedInput input = build_input(sample, vocab, lang, ser);
  const EncoderOutput enc = encode(input.ids, {}, params);
  const auto ranked = beam_search(params, enc, opts);
  Restoration out;
  out.prediction = detokenize_ids(ranked.front().tokens, vocab, lang);
  if (opts.nbest > 1) {
    for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(opts.nbest); ++i)
      out.nbest.push_back(detokenize_ids(ranked[i].tokens, vocab, lang));
  }
  return out;
}

std::vector<Restoration> restore_all(const std::vector<DialogueSample>& samples, const ModelParameters& params,
                                     const Vocabulary& vocab, const LanguageConfig& lang, const DecodeOptions& opts,
                                     const SerializeOptions& ser) {
  std::vector<Restoration> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(restore(s, params, vocab, lang, opts, ser));
  return out;
}

}  // namespace jet
