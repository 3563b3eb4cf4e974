// cstnet command-line driver: synthetic corpus generation, feature
// extraction, training, and the three evaluation protocols.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "cstnet/abx.hpp"
#include "cstnet/checkpoint.hpp"
#include "cstnet/corpus.hpp"
#include "cstnet/ctc.hpp"
#include "cstnet/feature_io.hpp"
#include "cstnet/gradcheck.hpp"
#include "cstnet/loss.hpp"
#include "cstnet/probe.hpp"
#include "cstnet/retrieval.hpp"
#include "cstnet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_keys(const json& j, const std::string& section,
                const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("invalid config key \"" + it.key() + "\" in " +
                        section);
}

struct AppConfig {
  cstnet::FbankConfig fbank;
  cstnet::EncoderConfig audio_enc;
  cstnet::EncoderConfig text_enc;
  cstnet::TrainConfig train;
  cstnet::SyntheticCorpusSpec synth;
  cstnet::ProbeConfig probe;
  std::string word_vectors;  // empty = hash-embedding fallback
  int text_dim = 100;
  int text_repeat = 1;  // emit each word vector this many times
  std::string raw_json;
};

AppConfig load_config(const std::string& path) {
  AppConfig cfg;
  cfg.audio_enc.input_dim = 40;
  cfg.text_enc.input_dim = 100;
  if (path.empty()) {
    cfg.raw_json = "{}";
    return cfg;
  }
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j = json::parse(in);
  check_keys(j, "config",
             {"fbank", "encoder", "train", "synth", "probe", "word_vectors",
              "text_dim", "text_repeat"});
  if (j.contains("fbank")) {
    const json& f = j["fbank"];
    check_keys(f, "fbank",
               {"n_mels", "win_ms", "hop_ms", "n_fft", "f_min", "f_max",
                "log_floor", "cmvn"});
    cfg.fbank.n_mels = f.value("n_mels", cfg.fbank.n_mels);
    cfg.fbank.win_ms = f.value("win_ms", cfg.fbank.win_ms);
    cfg.fbank.hop_ms = f.value("hop_ms", cfg.fbank.hop_ms);
    cfg.fbank.n_fft = f.value("n_fft", cfg.fbank.n_fft);
    cfg.fbank.f_min = f.value("f_min", cfg.fbank.f_min);
    cfg.fbank.f_max = f.value("f_max", cfg.fbank.f_max);
    cfg.fbank.log_floor = f.value("log_floor", cfg.fbank.log_floor);
    cfg.fbank.cmvn = f.value("cmvn", cfg.fbank.cmvn);
  }
  if (j.contains("encoder")) {
    const json& e = j["encoder"];
    check_keys(e, "encoder",
               {"channels", "kernel", "audio_input_dim", "text_input_dim",
                "seed"});
    cfg.audio_enc.channels = e.value("channels", cfg.audio_enc.channels);
    cfg.audio_enc.kernel = e.value("kernel", cfg.audio_enc.kernel);
    cfg.audio_enc.input_dim =
        e.value("audio_input_dim", cfg.audio_enc.input_dim);
    cfg.audio_enc.seed = e.value("seed", cfg.audio_enc.seed);
    cfg.text_enc = cfg.audio_enc;
    cfg.text_enc.input_dim = e.value("text_input_dim", 100);
    cfg.text_enc.seed = cfg.audio_enc.seed + 1;  // distinct init streams
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train",
               {"lr0", "decay_factor", "decay_every_epochs", "weight_decay",
                "epochs", "batch_size", "seed", "max_audio_frames",
                "max_text_tokens"});
    cfg.train.lr0 = t.value("lr0", cfg.train.lr0);
    cfg.train.decay_factor = t.value("decay_factor", cfg.train.decay_factor);
    cfg.train.decay_every_epochs =
        t.value("decay_every_epochs", cfg.train.decay_every_epochs);
    cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.seed = t.value("seed", cfg.train.seed);
    cfg.train.max_audio_frames =
        t.value("max_audio_frames", cfg.train.max_audio_frames);
    cfg.train.max_text_tokens =
        t.value("max_text_tokens", cfg.train.max_text_tokens);
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    check_keys(s, "synth",
               {"n_pairs", "n_phones", "n_words", "min_frames_per_phone",
                "max_frames_per_phone", "min_phones_per_utt",
                "max_phones_per_utt", "feature_dim", "sigma", "nuisance_dims",
                "nuisance_scale", "n_triples", "with_wav"});
    auto& sp = cfg.synth;
    sp.n_pairs = s.value("n_pairs", sp.n_pairs);
    sp.n_phones = s.value("n_phones", sp.n_phones);
    sp.n_words = s.value("n_words", sp.n_words);
    sp.min_frames_per_phone =
        s.value("min_frames_per_phone", sp.min_frames_per_phone);
    sp.max_frames_per_phone =
        s.value("max_frames_per_phone", sp.max_frames_per_phone);
    sp.min_phones_per_utt = s.value("min_phones_per_utt", sp.min_phones_per_utt);
    sp.max_phones_per_utt = s.value("max_phones_per_utt", sp.max_phones_per_utt);
    sp.feature_dim = s.value("feature_dim", sp.feature_dim);
    sp.sigma = s.value("sigma", sp.sigma);
    sp.nuisance_dims = s.value("nuisance_dims", sp.nuisance_dims);
    sp.nuisance_scale = s.value("nuisance_scale", sp.nuisance_scale);
    sp.n_triples = s.value("n_triples", sp.n_triples);
    sp.with_wav = s.value("with_wav", sp.with_wav);
  }
  if (j.contains("probe")) {
    const json& p = j["probe"];
    check_keys(p, "probe", {"layer", "lr", "epochs", "seed"});
    cfg.probe.layer = p.value("layer", cfg.probe.layer);
    cfg.probe.lr = p.value("lr", cfg.probe.lr);
    cfg.probe.epochs = p.value("epochs", cfg.probe.epochs);
    cfg.probe.seed = p.value("seed", cfg.probe.seed);
  }
  cfg.word_vectors = j.value("word_vectors", std::string());
  cfg.text_dim = j.value("text_dim", 100);
  cfg.text_repeat = j.value("text_repeat", 1);
  if (cfg.text_repeat < 1) throw ConfigError("text_repeat must be >= 1");
  cfg.text_enc.input_dim = j.contains("encoder") &&
                                   j["encoder"].contains("text_input_dim")
                               ? cfg.text_enc.input_dim
                               : cfg.text_dim;
  std::ostringstream raw;
  raw << j;
  cfg.raw_json = raw.str();
  return cfg;
}

std::string resolve(const std::string& base_file, const std::string& rel) {
  const fs::path p(rel);
  if (p.is_absolute()) return rel;
  return (fs::path(base_file).parent_path() / p).string();
}

cstnet::FeatureMatrix load_audio_features(const std::string& path,
                                          const cstnet::FbankConfig& fbank) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".wav")
    return cstnet::extract_fbank(cstnet::load_wav(path), fbank);
  return cstnet::load_features(path);
}

std::vector<cstnet::PairedExample> load_pairs(const std::string& manifest_path,
                                              const AppConfig& cfg) {
  const auto entries = cstnet::load_manifest(manifest_path);
  cstnet::WordVectorTable table;
  table.dim = cfg.text_enc.input_dim;
  if (!cfg.word_vectors.empty())
    table = cstnet::load_word_vectors(cfg.word_vectors, table.dim);
  std::vector<cstnet::PairedExample> pairs;
  for (const auto& e : entries) {
    cstnet::PairedExample p;
    p.utt_id = e.utt_id;
    p.audio = load_audio_features(resolve(manifest_path, e.path), cfg.fbank);
    p.text = cstnet::embed_text(table, e.translation, cfg.text_repeat);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void write_text(const std::string& path, const std::string& content) {
  cstnet::io::atomic_write(path, content);
}

// ----- subcommand bodies -------------------------------------------------

int cmd_gen_synthetic(const AppConfig& cfg, uint64_t seed,
                      const std::string& out_dir, int holdout) {
  auto corpus = cstnet::gen_synthetic_corpus(cfg.synth, seed);
  fs::create_directories(fs::path(out_dir) / "feats");
  std::ostringstream manifest, manifest_train, manifest_heldout, labels;
  std::mt19937_64 wav_rng(seed ^ 0x57415621ull);
  const int n = static_cast<int>(corpus.utterances.size());
  for (int i = 0; i < n; ++i) {
    const auto& u = corpus.utterances[std::size_t(i)];
    std::string rel;
    if (cfg.synth.with_wav) {
      fs::create_directories(fs::path(out_dir) / "wavs");
      rel = "wavs/" + u.utt_id + ".wav";
      cstnet::write_wav((fs::path(out_dir) / rel).string(),
                        cstnet::synthesize_wav(corpus, u, wav_rng));
    } else {
      rel = "feats/" + u.utt_id + ".feat";
      cstnet::save_features((fs::path(out_dir) / rel).string(), u.feats);
    }
    const std::string row = u.utt_id + "\t" + rel + "\t" + u.translation + "\n";
    manifest << row;
    (i < n - holdout ? manifest_train : manifest_heldout) << row;
    labels << u.utt_id << '\t' << rel << '\t';
    for (std::size_t k = 0; k < u.phones.size(); ++k) {
      if (k) labels << ' ';
      labels << corpus.phone_symbols[std::size_t(u.phones[k])];
    }
    labels << '\n';
  }
  write_text((fs::path(out_dir) / "manifest.tsv").string(), manifest.str());
  if (holdout > 0) {
    write_text((fs::path(out_dir) / "manifest_train.tsv").string(),
               manifest_train.str());
    write_text((fs::path(out_dir) / "manifest_heldout.tsv").string(),
               manifest_heldout.str());
  }
  write_text((fs::path(out_dir) / "labels.tsv").string(), labels.str());
  std::ostringstream phones;
  for (const auto& p : corpus.phone_symbols) phones << p << '\n';
  write_text((fs::path(out_dir) / "phones.txt").string(), phones.str());

  if (!corpus.triples.empty()) {
    fs::create_directories(fs::path(out_dir) / "triples");
    std::ostringstream items;
    for (const auto& tr : corpus.triples) {
      const std::string base = "triples/" + tr.id;
      cstnet::save_features((fs::path(out_dir) / (base + "_a.feat")).string(),
                            tr.a);
      cstnet::save_features((fs::path(out_dir) / (base + "_b.feat")).string(),
                            tr.b);
      cstnet::save_features((fs::path(out_dir) / (base + "_x.feat")).string(),
                            tr.x);
      items << tr.id << '\t' << base << "_a.feat\t" << base << "_b.feat\t"
            << base << "_x.feat\t" << tr.category_a << '\t' << tr.category_b
            << '\n';
    }
    write_text((fs::path(out_dir) / "triples.tsv").string(), items.str());
  }
  std::cout << "wrote " << n << " pairs, " << corpus.triples.size()
            << " triples to " << out_dir << "\n";
  return 0;
}

struct TripleItem {
  std::string id, path_a, path_b, path_x, cat_a, cat_b;
};

std::vector<TripleItem> load_items(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("items: cannot open " + path);
  std::vector<TripleItem> items;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    TripleItem t;
    if (!std::getline(row, t.id, '\t') || !std::getline(row, t.path_a, '\t') ||
        !std::getline(row, t.path_b, '\t') ||
        !std::getline(row, t.path_x, '\t') ||
        !std::getline(row, t.cat_a, '\t') || !std::getline(row, t.cat_b))
      throw std::runtime_error("items: malformed line " +
                               std::to_string(line_no));
    items.push_back(std::move(t));
  }
  return items;
}

std::vector<cstnet::AbxTriple> load_triples(const std::string& items_path) {
  std::vector<cstnet::AbxTriple> triples;
  for (const auto& it : load_items(items_path)) {
    cstnet::AbxTriple tr;
    tr.id = it.id;
    tr.a = cstnet::load_features(resolve(items_path, it.path_a));
    tr.b = cstnet::load_features(resolve(items_path, it.path_b));
    tr.x = cstnet::load_features(resolve(items_path, it.path_x));
    tr.category_a = it.cat_a;
    tr.category_b = it.cat_b;
    triples.push_back(std::move(tr));
  }
  return triples;
}

int cmd_train(const AppConfig& cfg, const std::string& manifest,
              const std::string& out_dir, const std::string& resume) {
  auto pairs = load_pairs(manifest, cfg);
  cstnet::TrainState<float> state;
  state.model = cstnet::build_model<float>(cfg.audio_enc, cfg.text_enc);
  state.cfg = cfg.train;
  state.rng.seed(cfg.train.seed);
  std::ostringstream csv;
  csv << cstnet::epoch_csv_header() << '\n';
  if (!resume.empty()) {
    const auto meta = cstnet::load_checkpoint(resume, state.model);
    state.epoch = meta.epoch;
    state.step = meta.step;
    state.set_rng_state(meta.rng_state);
  }
  fs::create_directories(out_dir);
  while (state.epoch < cfg.train.epochs) {
    const auto rep = cstnet::train_epoch(state, pairs);
    csv << cstnet::epoch_csv_row(rep) << '\n';
    std::cout << cstnet::epoch_csv_row(rep) << "\n";
  }
  write_text((fs::path(out_dir) / "epochs.csv").string(), csv.str());
  cstnet::save_checkpoint((fs::path(out_dir) / "checkpoint.cstn").string(),
                          state.model, state.epoch, state.step,
                          state.rng_state(), cfg.raw_json);
  return 0;
}

int cmd_eval_retrieval(const AppConfig& cfg, const std::string& checkpoint,
                       const std::string& manifest,
                       const std::string& out_dir) {
  auto pairs = load_pairs(manifest, cfg);
  auto model = cstnet::build_model<float>(cfg.audio_enc, cfg.text_enc);
  cstnet::load_checkpoint(checkpoint, model);
  cstnet::Tensor<float> audio, text;
  cstnet::embed_dataset(model, pairs, &audio, &text);
  // rows = speech, cols = text
  const auto s_text = cstnet::similarity_matrix(text, audio);
  std::vector<std::vector<double>> s(s_text.size());
  for (std::size_t i = 0; i < s_text.size(); ++i) {
    s[i].resize(s_text.size());
    for (std::size_t j = 0; j < s_text.size(); ++j) s[i][j] = s_text[j][i];
  }
  std::vector<cstnet::RetrievalReport> reports{
      cstnet::retrieval_report(s, cstnet::RetrievalDirection::SpeechToText),
      cstnet::retrieval_report(s, cstnet::RetrievalDirection::TextToSpeech)};
  fs::create_directories(out_dir);
  const std::string csv = cstnet::retrieval_csv(reports);
  write_text((fs::path(out_dir) / "retrieval.csv").string(), csv);
  std::cout << csv;
  return 0;
}

int cmd_eval_abx(const std::string& items, const std::string& out_dir) {
  const auto rep = cstnet::abx_error(load_triples(items));
  fs::create_directories(out_dir);
  const std::string csv = cstnet::abx_csv(rep);
  write_text((fs::path(out_dir) / "abx.csv").string(), csv);
  std::cout << "abx_error " << rep.error_rate << " over " << rep.n_triples
            << " triples\n";
  return 0;
}

int cmd_layer_sweep(const AppConfig& cfg, const std::string& checkpoint,
                    const std::string& items, const std::string& out_dir) {
  auto model = cstnet::build_model<float>(cfg.audio_enc, cfg.text_enc);
  if (!checkpoint.empty()) cstnet::load_checkpoint(checkpoint, model);
  const auto raw = load_triples(items);
  std::ostringstream csv;
  csv << "layer,abx_error\n";
  for (int layer = 1; layer <= cstnet::EncoderConfig::kNumLayers; ++layer) {
    std::vector<cstnet::AbxTriple> mapped;
    for (const auto& tr : raw) {
      cstnet::AbxTriple m;
      m.id = tr.id;
      m.category_a = tr.category_a;
      m.category_b = tr.category_b;
      m.a = cstnet::extract_layer_features(model.audio, tr.a, layer);
      m.b = cstnet::extract_layer_features(model.audio, tr.b, layer);
      m.x = cstnet::extract_layer_features(model.audio, tr.x, layer);
      mapped.push_back(std::move(m));
    }
    const auto rep = cstnet::abx_error(mapped);
    csv << layer << ',' << rep.error_rate << '\n';
    std::cout << "L" << layer << " abx_error " << rep.error_rate << "\n";
  }
  fs::create_directories(out_dir);
  write_text((fs::path(out_dir) / "layer_sweep.csv").string(), csv.str());
  return 0;
}

struct LabeledRow {
  std::string utt_id, path;
  std::vector<std::string> phones;
};

std::vector<LabeledRow> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("labels: cannot open " + path);
  std::vector<LabeledRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream r(line);
    LabeledRow row;
    std::string phones;
    if (!std::getline(r, row.utt_id, '\t') || !std::getline(r, row.path, '\t') ||
        !std::getline(r, phones))
      throw std::runtime_error("labels: malformed line " +
                               std::to_string(line_no));
    std::istringstream ps(phones);
    std::string p;
    while (ps >> p) row.phones.push_back(p);
    rows.push_back(std::move(row));
  }
  return rows;
}

cstnet::PhoneVocab load_vocab(const std::string& phones_path,
                              const std::vector<LabeledRow>& rows) {
  std::vector<std::string> symbols;
  if (!phones_path.empty()) {
    std::ifstream in(phones_path);
    if (!in) throw std::runtime_error("phones: cannot open " + phones_path);
    std::string s;
    while (in >> s) symbols.push_back(s);
  } else {
    std::set<std::string> uniq;
    for (const auto& r : rows) uniq.insert(r.phones.begin(), r.phones.end());
    symbols.assign(uniq.begin(), uniq.end());
  }
  return cstnet::PhoneVocab::from_symbols(symbols);
}

int cmd_train_ctc_probe(const AppConfig& cfg, const std::string& checkpoint,
                        const std::string& labels_path,
                        const std::string& phones_path, int layer, int holdout,
                        const std::string& out_dir) {
  auto model = cstnet::build_model<float>(cfg.audio_enc, cfg.text_enc);
  if (!checkpoint.empty()) cstnet::load_checkpoint(checkpoint, model);
  const auto rows = load_labels(labels_path);
  const auto vocab = load_vocab(phones_path, rows);
  const int probe_layer = layer > 0 ? layer : cfg.probe.layer;

  std::vector<cstnet::LabeledFeatures> all;
  for (const auto& r : rows) {
    cstnet::LabeledFeatures lf;
    lf.utt_id = r.utt_id;
    const auto raw =
        load_audio_features(resolve(labels_path, r.path), cfg.fbank);
    lf.feats = cstnet::extract_layer_features(model.audio, raw, probe_layer);
    for (const auto& p : r.phones) lf.labels.push_back(vocab.class_of(p));
    all.push_back(std::move(lf));
  }
  if (holdout <= 0 || holdout >= static_cast<int>(all.size()))
    throw std::runtime_error("probe: --holdout must split the corpus");
  std::vector<cstnet::LabeledFeatures> train(all.begin(),
                                             all.end() - holdout);
  std::vector<cstnet::LabeledFeatures> heldout(all.end() - holdout, all.end());

  cstnet::ProbeModel probe(cfg.audio_enc.channels, vocab.num_classes(),
                           probe_layer);
  cstnet::ProbeConfig pcfg = cfg.probe;
  pcfg.layer = probe_layer;
  const auto rep = cstnet::train_probe(probe, train, heldout, pcfg);
  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "layer,per,evaluated,skipped_unalignable\n"
      << probe_layer << ',' << rep.per << ',' << rep.evaluated << ','
      << rep.skipped_unalignable << '\n';
  write_text((fs::path(out_dir) / "per.csv").string(), csv.str());
  std::cout << "L" << probe_layer << " per " << rep.per << " (skipped "
            << rep.skipped_unalignable << ")\n";
  return 0;
}

std::vector<std::vector<int>> sequences_from_tsv(
    const std::string& path, std::map<std::string, int>* symtab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("per: cannot open " + path);
  std::vector<std::vector<int>> seqs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream r(line);
    std::string utt, rest;
    std::getline(r, utt, '\t');
    std::getline(r, rest);
    std::istringstream ps(rest);
    std::vector<int> seq;
    std::string p;
    while (ps >> p) {
      auto [it, _] = symtab->try_emplace(p, static_cast<int>(symtab->size()));
      seq.push_back(it->second);
    }
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

int cmd_eval_per(const std::string& ref_path, const std::string& hyp_path) {
  std::map<std::string, int> symtab;
  const auto refs = sequences_from_tsv(ref_path, &symtab);
  const auto hyps = sequences_from_tsv(hyp_path, &symtab);
  std::cout << "per " << cstnet::phone_error_rate(refs, hyps) << "\n";
  return 0;
}

// Finite-difference verification of every autodiff op at threshold 1e-4.
int cmd_gradcheck(uint64_t seed);

}  // namespace

#include "gradcheck_cmd.inc"

int main(int argc, char** argv) {
  CLI::App app{"contrastive speech-translation network toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", manifest, checkpoint, items;
  std::string resume, labels_path, phones_path, ref_path, hyp_path, wav_path,
      out_path;
  uint64_t seed = 0;
  int holdout = 0, layer = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    if (needs_config) sub->add_option("--config", config_path, "config JSON");
    sub->add_option("--out-dir", out_dir, "output directory");
    sub->add_option("--seed", seed, "random seed override");
  };

  auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic corpus");
  add_common(gen);
  gen->add_option("--holdout", holdout, "held-out pair count");

  auto* efb = app.add_subcommand("extract-fbank", "wav -> log-mel features");
  add_common(efb);
  efb->add_option("--wav", wav_path, "input wav")->required();
  efb->add_option("--out", out_path, "output .feat")->required();

  auto* dump = app.add_subcommand("dump-features", "manifest wavs -> .feat dumps");
  add_common(dump);
  dump->add_option("--manifest", manifest, "manifest TSV")->required();

  auto* train = app.add_subcommand("train", "train both encoders");
  add_common(train);
  train->add_option("--manifest", manifest, "manifest TSV")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* evr = app.add_subcommand("eval-retrieval", "recall@K both directions");
  add_common(evr);
  evr->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  evr->add_option("--manifest", manifest, "manifest TSV")->required();

  auto* eva = app.add_subcommand("eval-abx", "DTW ABX on feature dumps");
  add_common(eva, false);
  eva->add_option("--items", items, "triple item TSV")->required();

  auto* sweep = app.add_subcommand("layer-sweep", "ABX per encoder layer");
  add_common(sweep);
  sweep->add_option("--checkpoint", checkpoint,
                    "model checkpoint (omit for random init)");
  sweep->add_option("--items", items, "triple item TSV")->required();

  auto* probe = app.add_subcommand("train-ctc-probe",
                                   "linear CTC probe on frozen features");
  add_common(probe);
  probe->add_option("--checkpoint", checkpoint,
                    "model checkpoint (omit for random init)");
  probe->add_option("--labels", labels_path, "labeled corpus TSV")->required();
  probe->add_option("--phones", phones_path, "phone inventory file");
  probe->add_option("--layer", layer, "encoder layer to probe");
  probe->add_option("--holdout", holdout, "held-out utterance count")
      ->required();

  auto* per = app.add_subcommand("eval-per", "phone error rate of hyp vs ref");
  per->add_option("--ref", ref_path, "reference TSV")->required();
  per->add_option("--hyp", hyp_path, "hypothesis TSV")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference op checks");
  gc->add_option("--seed", seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const bool needs_cfg = !(eva->parsed() || per->parsed() || gc->parsed());
    AppConfig cfg;
    if (needs_cfg) cfg = load_config(config_path);
    if (gen->parsed()) {
      const uint64_t s = gen->count("--seed") ? seed : cfg.train.seed;
      return cmd_gen_synthetic(cfg, s, out_dir, holdout);
    }
    if (efb->parsed()) {
      cstnet::save_features(
          out_path, cstnet::extract_fbank(cstnet::load_wav(wav_path), cfg.fbank));
      return 0;
    }
    if (dump->parsed()) {
      for (const auto& e : cstnet::load_manifest(manifest)) {
        const auto feats =
            load_audio_features(resolve(manifest, e.path), cfg.fbank);
        cstnet::save_features(
            (fs::path(out_dir) / (e.utt_id + ".feat")).string(), feats);
      }
      return 0;
    }
    if (train->parsed()) return cmd_train(cfg, manifest, out_dir, resume);
    if (evr->parsed())
      return cmd_eval_retrieval(cfg, checkpoint, manifest, out_dir);
    if (eva->parsed()) return cmd_eval_abx(items, out_dir);
    if (sweep->parsed()) return cmd_layer_sweep(cfg, checkpoint, items, out_dir);
    if (probe->parsed())
      return cmd_train_ctc_probe(cfg, checkpoint, labels_path, phones_path,
                                 layer, holdout, out_dir);
    if (per->parsed()) return cmd_eval_per(ref_path, hyp_path);
    if (gc->parsed()) return cmd_gradcheck(seed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
