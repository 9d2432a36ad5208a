// jet: label, train, restore and evaluate incomplete-utterance restoration
// models. Every artifact is written under --out-dir.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <unordered_set>

#include "CLI11.hpp"
#include "json.hpp"

#include "jet/corpus.hpp"
#include "jet/evaluation.hpp"
#include "jet/inference.hpp"
#include "jet/labeler.hpp"
#include "jet/model.hpp"
#include "jet/serializer.hpp"
#include "jet/synthetic.hpp"
#include "jet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 2;

struct LanguageOptions {
  std::string language = "english";
  std::string granularity;  // empty: the language default
  std::string stopwords;
  std::string subwords;
  bool no_lemmatize = false;
  bool no_stem = false;
  bool keep_case = false;

  jet::LanguageConfig build() const {
    jet::LanguageConfig cfg = jet::LanguageConfig::for_language(jet::parse_language(language));
    if (!granularity.empty()) cfg.granularity = jet::parse_granularity(granularity);
    if (!stopwords.empty()) cfg.stopwords = jet::load_stopwords(stopwords);
    if (!subwords.empty())
      cfg.subwords = std::make_shared<jet::SubwordInventory>(jet::SubwordInventory::load(subwords));
    if (cfg.granularity == jet::Granularity::subword && !cfg.subwords)
      throw jet::Error("subword granularity needs --subwords");
    if (no_lemmatize) cfg.lemmatize = false;
    if (no_stem) cfg.stem = false;
    if (keep_case) cfg.lowercase = false;
    cfg.validate();
    return cfg;
  }
};

struct Options {
  std::string out_dir = "out";
  std::uint64_t seed = 13;
  LanguageOptions lang;

  // synth
  std::size_t synth_size = 200;
  std::string synth_templates;
  std::string synth_out = "synth.jsonl";

  // label
  std::string label_in;
  std::string label_out;
  std::string label_mode = "hard";
  std::string embeddings;
  bool hash_fallback = false;
  int embedding_dim = 50;

  // train
  std::string train_in;
  jet::TrainConfig train;
  std::string train_label_mode = "hard";
  int vocab_size = 8000;
  int d_model = 64;
  int layers = 2;
  int heads = 4;
  int ffn_inner = 128;
  std::vector<int> picker_hidden = {32, 16};
  double dropout = 0.1;
  std::string position_mode = "relative_bias";
  int max_input_length = 512;

  // restore
  std::string checkpoint;
  std::string vocab;
  std::string restore_in;
  std::string restore_out = "predictions.jsonl";
  jet::DecodeOptions decode;

  // evaluate
  std::string predictions;
  std::string gold;
  std::string eval_labels;
  std::string pickup_mode = "any";
};

fs::path in_out_dir(const Options& o, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() || p.has_parent_path() ? p : fs::path(o.out_dir) / p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw jet::Error("cannot write " + path.string());
  out << text;
}

jet::ModelConfig model_config(const Options& o, int vocab_size, jet::LabelMode mode) {
  jet::ModelConfig m;
  m.vocab_size = vocab_size;
  m.d_model = o.d_model;
  m.layers = o.layers;
  m.heads = o.heads;
  m.ffn_inner = o.ffn_inner;
  m.picker_arity = mode == jet::LabelMode::soft ? 1 : 3;
  m.picker_widths = {o.d_model};
  for (int w : o.picker_hidden) m.picker_widths.push_back(w);
  m.picker_widths.push_back(m.picker_arity);
  m.dropout = o.dropout;
  if (o.position_mode == "additive")
    m.position_mode = jet::PositionMode::additive;
  else if (o.position_mode != "relative_bias")
    throw jet::Error("unknown position mode '" + o.position_mode + "'");
  m.seed = o.seed;
  m.validate();
  return m;
}

void cmd_synth(const Options& o) {
  const auto templates =
      o.synth_templates.empty() ? jet::SynthTemplates::builtin() : jet::SynthTemplates::load(o.synth_templates);
  const auto corpus = jet::synthesize(o.synth_size, o.seed, templates);
  const fs::path out = in_out_dir(o, o.synth_out);
  jet::save_corpus(out, corpus);
  std::cout << "wrote " << corpus.size() << " samples to " << out.string() << "\n";
}

void cmd_label(const Options& o) {
  const jet::LabelMode mode = jet::parse_label_mode(o.label_mode);
  if (mode != jet::LabelMode::soft && mode != jet::LabelMode::hard)
    throw jet::Error("label: mode must be soft or hard");
  const jet::LanguageConfig lang = o.lang.build();
  const auto corpus = jet::load_corpus(o.label_in);
  for (const auto& s : corpus) {
    if (!s.reference) throw jet::Error("label: sample " + s.id + " has no reference");
  }
  const auto fallback = o.hash_fallback ? jet::EmbeddingTable::Fallback::hash : jet::EmbeddingTable::Fallback::zero;
  jet::EmbeddingTable emb = jet::EmbeddingTable::hashed(o.embedding_dim, o.seed);
  if (!o.embeddings.empty()) {
    emb = jet::EmbeddingTable::load_text(o.embeddings, fallback, o.seed);
  } else if (mode == jet::LabelMode::soft && !o.hash_fallback) {
    throw jet::Error("label: soft mode needs --embeddings or --hash-fallback");
  }
  std::vector<jet::LabeledSample> labeled;
  labeled.reserve(corpus.size());
  for (const auto& s : corpus) labeled.push_back(jet::label_sample(s, mode, emb, lang));
  const fs::path out = o.label_out.empty() ? in_out_dir(o, "labeled-" + o.label_mode + ".jsonl")
                                           : in_out_dir(o, o.label_out);
  if (fs::exists(o.label_in) && fs::exists(out) && fs::equivalent(o.label_in, out))
    throw jet::Error("label: refusing to overwrite the input corpus");
  jet::save_labeled_corpus(out, labeled);
  std::printf("labeled %zu samples (%s), label density %.4f -> %s\n", labeled.size(), o.label_mode.c_str(),
              jet::label_density(labeled), out.string().c_str());
}

void cmd_train(const Options& o) {
  jet::TrainConfig cfg = o.train;
  cfg.seed = o.seed;
  cfg.label_mode = jet::parse_label_mode(o.train_label_mode);
  cfg.validate();
  const jet::LanguageConfig lang = o.lang.build();
  const auto corpus = jet::load_labeled_corpus(o.train_in);
  std::vector<jet::DialogueSample> plain;
  plain.reserve(corpus.size());
  for (const auto& s : corpus) plain.push_back(s.sample);
  const jet::Vocabulary vocab = jet::build_vocab(plain, o.vocab_size, lang);
  const jet::ModelConfig mcfg = model_config(o, vocab.size(), cfg.label_mode);
  jet::SerializeOptions ser;
  ser.max_input_length = o.max_input_length;

  vocab.save(fs::path(o.out_dir) / "vocab.json");
  json extra;
  extra["vocab_fingerprint"] = std::to_string(vocab.fingerprint());
  extra["label_mode"] = jet::to_string(cfg.label_mode);
  extra["alpha"] = cfg.alpha;
  jet::CheckpointMeta meta{extra.dump()};

  std::vector<jet::EpochRecord> log;
  jet::TrainHooks hooks;
  hooks.on_epoch = [&](const jet::TrainState& st, const jet::EpochRecord& rec) {
    log.push_back(rec);
    write_loss_log(fs::path(o.out_dir) / "loss_log.csv", log);
    std::printf("epoch %d step %ld picker %.6f generator %.6f joint %.6f\n", rec.epoch, rec.step, rec.picker_loss,
                rec.generator_loss, rec.joint_loss);
    std::fflush(stdout);
    if (cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0)
      jet::save_checkpoint(fs::path(o.out_dir) / ("checkpoint-epoch" + std::to_string(rec.epoch) + ".ckpt"), st.params,
                           meta);
  };
  std::printf("training on %zu of %zu samples\n", jet::subsample_count(corpus.size(), cfg.fraction), corpus.size());
  const auto result = jet::train_corpus(corpus, cfg, mcfg, vocab, lang, ser, hooks);
  jet::write_loss_log(fs::path(o.out_dir) / "loss_log.csv", result.log);
  jet::save_checkpoint(fs::path(o.out_dir) / "model.ckpt", result.state.params, meta);
  json summary;
  summary["training_samples"] = result.samples;
  summary["corpus_samples"] = corpus.size();
  summary["steps"] = result.state.step;
  summary["skipped_steps"] = result.state.skipped_steps;
  summary["epochs"] = result.state.epoch;
  write_text(fs::path(o.out_dir) / "train_summary.json", summary.dump(2) + "\n");
  if (result.state.skipped_steps > 0)
    std::fprintf(stderr, "warning: %d optimizer steps skipped for non-finite gradients\n",
                 result.state.skipped_steps);
}

void cmd_restore(const Options& o) {
  const jet::LanguageConfig lang = o.lang.build();
  jet::CheckpointMeta meta;
  const jet::ModelParameters params = jet::load_checkpoint(o.checkpoint, &meta);
  const fs::path vocab_path = o.vocab.empty() ? fs::path(o.checkpoint).parent_path() / "vocab.json" : fs::path(o.vocab);
  const jet::Vocabulary vocab = jet::Vocabulary::load(vocab_path);
  const json extra = json::parse(meta.extra_json);
  if (extra.contains("vocab_fingerprint") &&
      extra["vocab_fingerprint"].get<std::string>() != std::to_string(vocab.fingerprint()))
    throw jet::Error("restore: vocabulary " + vocab_path.string() + " does not match the checkpoint");
  if (params.config().vocab_size != vocab.size()) throw jet::Error("restore: vocabulary size does not match the checkpoint");

  const auto samples = jet::load_corpus(o.restore_in);
  std::unordered_set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) throw jet::Error("restore: duplicate sample id '" + s.id + "'");
  }
  jet::SerializeOptions ser;
  ser.max_input_length = o.max_input_length;
  std::string text;
  for (const auto& s : samples) {
    const auto r = jet::restore(s, params, vocab, lang, o.decode, ser);
    json line{{"id", s.id}, {"prediction", r.prediction}};
    if (o.decode.nbest > 1) line["nbest"] = r.nbest;
    text += line.dump() + "\n";
  }
  const fs::path out = in_out_dir(o, o.restore_out);
  write_text(out, text);
  std::cout << "wrote " << samples.size() << " predictions to " << out.string() << "\n";
}

void cmd_evaluate(const Options& o) {
  jet::EvalConfig cfg;
  cfg.language = o.lang.build();
  cfg.pickup = jet::parse_pickup_mode(o.pickup_mode);
  const auto predictions = jet::load_predictions(o.predictions);
  const auto gold = jet::load_corpus(o.gold);
  std::unordered_map<std::string, std::set<std::string>> important;
  if (!o.eval_labels.empty()) {
    for (const auto& s : jet::load_labeled_corpus(o.eval_labels)) {
      if (s.labels && s.labels->mode != jet::LabelMode::soft)
        important[s.sample.id] = jet::important_tokens(s, cfg.language);
    }
  } else {
    const auto emb = jet::EmbeddingTable::hashed(8, 0);  // hard labels only use exact matches
    for (const auto& s : gold) {
      if (s.reference)
        important[s.id] = jet::important_tokens(jet::label_sample(s, jet::LabelMode::hard, emb, cfg.language),
                                                cfg.language);
    }
  }
  const jet::EvalReport rep = jet::evaluate(predictions, gold, important, cfg);
  write_text(fs::path(o.out_dir) / "report.json", rep.to_json());
  write_text(fs::path(o.out_dir) / "report.txt", rep.to_table());
  std::cout << rep.to_table();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incomplete utterance restoration with a joint picker and generator"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Key-value configuration file (TOML/INI); command-line flags win");
  Options o;
  jet::TrainConfig& tc = o.train;
  tc.learning_rate = 5e-5;

  app.add_option("--out-dir", o.out_dir, "Directory for every artifact")->capture_default_str();
  app.add_option("--seed", o.seed, "Global seed")->capture_default_str();
  app.add_option("--language", o.lang.language, "english | chinese | other")->capture_default_str();
  app.add_option("--granularity", o.lang.granularity, "whitespace_word | character | subword");
  app.add_option("--stopwords", o.lang.stopwords, "One-per-line stopword file")->check(CLI::ExistingFile);
  app.add_option("--subwords", o.lang.subwords, "Subword piece inventory")->check(CLI::ExistingFile);
  app.add_flag("--no-lemmatize", o.lang.no_lemmatize);
  app.add_flag("--no-stem", o.lang.no_stem);
  app.add_flag("--keep-case", o.lang.keep_case);
  app.add_option("--max-input-length", o.max_input_length, "Serialized input cap")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic restoration corpus");
  synth->add_option("--size", o.synth_size)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--templates", o.synth_templates)->check(CLI::ExistingFile);
  synth->add_option("--out", o.synth_out)->capture_default_str();

  auto* label = app.add_subcommand("label", "Create picker labels for a corpus");
  label->add_option("--in", o.label_in)->required()->check(CLI::ExistingFile);
  label->add_option("--out", o.label_out);
  label->add_option("--mode", o.label_mode, "soft | hard")->capture_default_str();
  label->add_option("--embeddings", o.embeddings, "Text word vectors")->check(CLI::ExistingFile);
  label->add_flag("--hash-fallback", o.hash_fallback, "Hash vectors for tokens without embeddings");
  label->add_option("--embedding-dim", o.embedding_dim)->capture_default_str();

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--train", o.train_in, "Labeled (or, for mode none, plain) corpus")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--alpha", tc.alpha)->capture_default_str();
  train->add_option("--lr", tc.learning_rate)->capture_default_str();
  train->add_option("--beta1", tc.beta1)->capture_default_str();
  train->add_option("--beta2", tc.beta2)->capture_default_str();
  train->add_option("--weight-decay", tc.weight_decay)->capture_default_str();
  train->add_option("--batch-size", tc.batch_size)->capture_default_str();
  train->add_option("--epochs", tc.epochs)->capture_default_str();
  train->add_option("--label-mode", o.train_label_mode, "soft | hard | defined | none")->capture_default_str();
  train->add_option("--fraction", tc.fraction, "Share of the corpus to train on")->capture_default_str();
  train->add_option("--checkpoint-every", tc.checkpoint_every, "Epochs between checkpoints")->capture_default_str();
  train->add_option("--clip-norm", tc.clip_norm)->capture_default_str();
  train->add_option("--vocab-size", o.vocab_size)->capture_default_str();
  train->add_option("--d-model", o.d_model)->capture_default_str();
  train->add_option("--layers", o.layers)->capture_default_str();
  train->add_option("--heads", o.heads)->capture_default_str();
  train->add_option("--ffn-inner", o.ffn_inner)->capture_default_str();
  train->add_option("--picker-hidden", o.picker_hidden, "Hidden picker widths")->capture_default_str();
  train->add_option("--dropout", o.dropout)->capture_default_str();
  train->add_option("--position-mode", o.position_mode, "relative_bias | additive")->capture_default_str();

  auto* restore = app.add_subcommand("restore", "Restore incomplete utterances");
  restore->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingFile);
  restore->add_option("--vocab", o.vocab, "Defaults to vocab.json beside the checkpoint")->check(CLI::ExistingFile);
  restore->add_option("--in", o.restore_in)->required()->check(CLI::ExistingFile);
  restore->add_option("--out", o.restore_out)->capture_default_str();
  restore->add_option("--beam", o.decode.beam_size)->capture_default_str();
  restore->add_option("--max-len", o.decode.max_len)->capture_default_str();
  restore->add_option("--length-penalty", o.decode.length_penalty)->capture_default_str();
  restore->add_option("--nbest", o.decode.nbest)->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold references");
  evaluate->add_option("--predictions", o.predictions)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--gold", o.gold)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--labels", o.eval_labels, "Labeled gold corpus for important tokens")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--pickup-mode", o.pickup_mode, "any | all")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;  // --help exits 0, usage errors 1
  }

  try {
    fs::create_directories(o.out_dir);
    write_text(fs::path(o.out_dir) / "effective_config.toml", app.config_to_str(true, false));
    if (*synth) cmd_synth(o);
    if (*label) cmd_label(o);
    if (*train) cmd_train(o);
    if (*restore) cmd_restore(o);
    if (*evaluate) cmd_evaluate(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
