#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "jet/corpus.hpp"
#include "jet/evaluation.hpp"
#include "jet/inference.hpp"
#include "jet/labeler.hpp"
#include "jet/model.hpp"
#include "jet/synthetic.hpp"
#include "jet/training.hpp"

namespace py = pybind11;

namespace {

jet::DialogueSample sample_from(const py::dict& d, std::size_t index) {
  jet::DialogueSample s;
  s.id = d.contains("id") ? py::str(d["id"]).cast<std::string>() : std::to_string(index);
  s.context = d["context"].cast<std::vector<std::string>>();
  s.incomplete = d["utterance"].cast<std::string>();
  if (d.contains("reference") && !d["reference"].is_none()) s.reference = d["reference"].cast<std::string>();
  s.validate();
  return s;
}

std::vector<jet::DialogueSample> samples_from(const py::list& items) {
  std::vector<jet::DialogueSample> out;
  for (std::size_t i = 0; i < items.size(); ++i) out.push_back(sample_from(items[i].cast<py::dict>(), i));
  return out;
}

py::dict sample_to(const jet::DialogueSample& s) {
  py::dict d;
  d["id"] = s.id;
  d["context"] = s.context;
  d["utterance"] = s.incomplete;
  if (s.reference) d["reference"] = *s.reference;
  return d;
}

py::dict labeled_to(const jet::LabeledSample& ls) {
  py::dict d = sample_to(ls.sample);
  if (!ls.labels) return d;
  py::dict labels;
  labels["mode"] = jet::to_string(ls.labels->mode);
  if (ls.labels->mode == jet::LabelMode::soft) {
    labels["scores"] = ls.labels->scores;
  } else {
    py::list tags;
    for (const auto& utt : ls.labels->tags) {
      py::list row;
      for (auto t : utt) row.append(std::string(1, jet::to_char(t)));
      tags.append(row);
    }
    labels["tags"] = tags;
  }
  d["labels"] = labels;
  return d;
}

jet::LabeledSample labeled_from(const py::dict& d, std::size_t index) {
  jet::LabeledSample ls{sample_from(d, index), std::nullopt};
  if (!d.contains("labels") || d["labels"].is_none()) return ls;
  const py::dict l = d["labels"].cast<py::dict>();
  jet::PickerLabels labels;
  labels.mode = jet::parse_label_mode(l["mode"].cast<std::string>());
  if (labels.mode == jet::LabelMode::soft) {
    labels.scores = l["scores"].cast<std::vector<std::vector<double>>>();
  } else {
    for (const auto& utt : l["tags"].cast<std::vector<std::vector<std::string>>>()) {
      std::vector<jet::BioTag> row;
      for (const auto& t : utt) row.push_back(jet::parse_bio(t));
      labels.tags.push_back(std::move(row));
    }
  }
  labels.validate();
  ls.labels = std::move(labels);
  return ls;
}

jet::LanguageConfig language(const std::string& name) {
  return jet::LanguageConfig::for_language(jet::parse_language(name));
}

class Model {
 public:
  Model(jet::ModelParameters params, jet::Vocabulary vocab, std::string lang)
      : params_(std::move(params)), vocab_(std::move(vocab)), lang_(std::move(lang)) {}

  static Model train(const py::list& corpus, double alpha, int epochs, double lr, int batch_size,
                     std::uint64_t seed, const std::string& label_mode, double fraction, int d_model, int layers,
                     int heads, int ffn_inner, const std::string& lang_name) {
    std::vector<jet::LabeledSample> labeled;
    for (std::size_t i = 0; i < corpus.size(); ++i) labeled.push_back(labeled_from(corpus[i].cast<py::dict>(), i));
    const jet::LanguageConfig lang = language(lang_name);
    std::vector<jet::DialogueSample> plain;
    for (const auto& s : labeled) plain.push_back(s.sample);
    jet::Vocabulary vocab = jet::build_vocab(plain, 8000, lang);
    jet::TrainConfig cfg;
    cfg.alpha = alpha;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    cfg.label_mode = jet::parse_label_mode(label_mode);
    cfg.fraction = fraction;
    const int arity = cfg.label_mode == jet::LabelMode::soft ? 1 : 3;
    jet::ModelConfig mcfg = jet::ModelConfig::toy(vocab.size(), arity);
    mcfg.d_model = d_model;
    mcfg.layers = layers;
    mcfg.heads = heads;
    mcfg.ffn_inner = ffn_inner;
    mcfg.picker_widths = {d_model, 32, 16, arity};
    mcfg.seed = seed;
    jet::TrainResult r;
    {
      py::gil_scoped_release release;
      r = jet::train_corpus(labeled, cfg, mcfg, vocab, lang);
    }
    Model m(std::move(r.state.params), std::move(vocab), lang_name);
    m.log_ = jet::format_loss_log(r.log);
    return m;
  }

  static Model load(const std::string& checkpoint, const std::string& vocab, const std::string& lang) {
    return Model(jet::load_checkpoint(checkpoint), jet::Vocabulary::load(vocab), lang);
  }

  void save(const std::string& checkpoint, const std::string& vocab) const {
    jet::save_checkpoint(checkpoint, params_);
    vocab_.save(vocab);
  }

  std::vector<std::string> restore(const py::list& samples, int beam, int max_len, double length_penalty) const {
    jet::DecodeOptions opts;
    opts.beam_size = beam;
    opts.max_len = max_len;
    opts.length_penalty = length_penalty;
    const auto in = samples_from(samples);
    std::vector<std::string> out;
    {
      py::gil_scoped_release release;
      for (const auto& r : jet::restore_all(in, params_, vocab_, language(lang_), opts)) out.push_back(r.prediction);
    }
    return out;
  }

  const std::string& loss_log() const { return log_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }
  int vocab_size() const { return vocab_.size(); }

 private:
  jet::ModelParameters params_;
  jet::Vocabulary vocab_;
  std::string lang_;
  std::string log_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Joint picker/generator for incomplete utterance restoration";

  py::register_exception<jet::Error>(m, "JetError", PyExc_ValueError);

  m.def(
      "synthesize",
      [](std::size_t size, std::uint64_t seed) {
        py::list out;
        for (const auto& s : jet::synthesize(size, seed)) out.append(sample_to(s));
        return out;
      },
      py::arg("size"), py::arg("seed") = 0);

  m.def(
      "tokenize", [](const std::string& text, const std::string& lang) { return jet::tokenize(text, language(lang)); },
      py::arg("text"), py::arg("language") = "english");

  m.def(
      "label",
      [](const py::list& corpus, const std::string& mode, const std::string& lang, int dim, std::uint64_t seed) {
        const auto cfg = language(lang);
        const auto emb = jet::EmbeddingTable::hashed(dim, seed);
        const auto samples = samples_from(corpus);
        py::list out;
        for (const auto& s : samples) out.append(labeled_to(jet::label_sample(s, jet::parse_label_mode(mode), emb, cfg)));
        return out;
      },
      py::arg("corpus"), py::arg("mode") = "hard", py::arg("language") = "english", py::arg("embedding_dim") = 50,
      py::arg("seed") = 0, "Picker labels from hashed embeddings (hard labels only need exact matches).");

  m.def("clue_tokens",
        [](const std::string& reference, const std::string& incomplete, const std::string& lang) {
          return jet::extract_clue_tokens(reference, incomplete, language(lang)).tokens;
        },
        py::arg("reference"), py::arg("incomplete"), py::arg("language") = "english");

  m.def("rouge_n", &jet::rouge_n, py::arg("pred"), py::arg("ref"), py::arg("n"));
  m.def("bleu_n", &jet::bleu_n, py::arg("pairs"), py::arg("n"));
  m.def("restoration_f", &jet::restoration_f, py::arg("pred"), py::arg("ref"), py::arg("incomplete"), py::arg("n"));

  m.def(
      "evaluate",
      [](const std::unordered_map<std::string, std::string>& predictions, const py::list& gold,
         const std::string& lang, const std::string& pickup) {
        jet::EvalConfig cfg;
        cfg.language = language(lang);
        cfg.pickup = jet::parse_pickup_mode(pickup);
        const auto samples = samples_from(gold);
        const auto emb = jet::EmbeddingTable::hashed(8, 0);
        std::unordered_map<std::string, std::set<std::string>> important;
        for (const auto& s : samples) {
          if (s.reference)
            important[s.id] =
                jet::important_tokens(jet::label_sample(s, jet::LabelMode::hard, emb, cfg.language), cfg.language);
        }
        const auto json = py::module_::import("json");
        return json.attr("loads")(jet::evaluate(predictions, samples, important, cfg).to_json());
      },
      py::arg("predictions"), py::arg("gold"), py::arg("language") = "english", py::arg("pickup") = "any");

  py::class_<Model>(m, "Model")
      .def_static("train", &Model::train, py::arg("corpus"), py::arg("alpha") = 1.0, py::arg("epochs") = 20,
                  py::arg("lr") = 1e-3, py::arg("batch_size") = 8, py::arg("seed") = 0,
                  py::arg("label_mode") = "hard", py::arg("fraction") = 1.0, py::arg("d_model") = 64,
                  py::arg("layers") = 2, py::arg("heads") = 4, py::arg("ffn_inner") = 128,
                  py::arg("language") = "english")
      .def_static("load", &Model::load, py::arg("checkpoint"), py::arg("vocab"), py::arg("language") = "english")
      .def("save", &Model::save, py::arg("checkpoint"), py::arg("vocab"))
      .def("restore", &Model::restore, py::arg("samples"), py::arg("beam") = 8, py::arg("max_len") = 64,
           py::arg("length_penalty") = 1.0)
      .def_property_readonly("loss_log", &Model::loss_log)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("vocab_size", &Model::vocab_size);
}
