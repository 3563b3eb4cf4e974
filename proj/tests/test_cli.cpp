#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// Drives the installed binary end to end through std::system. The binary
// path arrives via the CSTNET_CLI_PATH compile definition.

namespace fs = std::filesystem;

namespace {

std::string cli() { return CSTNET_CLI_PATH; }

int run(const std::string& args) {
  const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path work_dir() {
  static fs::path p = [] {
    fs::path d = fs::temp_directory_path() / "cstnet_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_path() {
  const fs::path p = work_dir() / "config.json";
  if (!fs::exists(p))
    write_file(p, R"({
      "encoder": {"channels": 8, "seed": 1},
      "train": {"epochs": 2, "batch_size": 8, "seed": 3},
      "synth": {"n_pairs": 30, "n_phones": 6, "n_words": 10,
                "min_frames_per_phone": 5, "max_frames_per_phone": 7,
                "n_triples": 4},
      "probe": {"epochs": 2},
      "text_dim": 100
    })");
  return p.string();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("--definitely-not-a-flag") == 2);
  CHECK(run("") == 2);                       // missing subcommand
  CHECK(run("train") == 2);                  // missing required --manifest
  CHECK(run("no-such-subcommand") == 2);
}

TEST_CASE("invalid config key exits with code 2") {
  const fs::path bad = work_dir() / "bad.json";
  write_file(bad, R"({"trian": {"epochs": 2}})");
  CHECK(run("train --config " + bad.string() + " --manifest missing.tsv") == 2);
  const fs::path bad2 = work_dir() / "bad2.json";
  write_file(bad2, R"({"train": {"learning_rate": 0.1}})");
  CHECK(run("train --config " + bad2.string() + " --manifest missing.tsv") ==
        2);
}

TEST_CASE("runtime errors exit with code 1") {
  CHECK(run("train --config " + config_path() +
            " --manifest /nonexistent/m.tsv") == 1);
  CHECK(run("eval-abx --items /nonexistent/items.tsv") == 1);
}

TEST_CASE("gradcheck passes") { CHECK(run("gradcheck --seed 1") == 0); }

TEST_CASE("full pipeline: generate, train, evaluate") {
  const fs::path corpus = work_dir() / "corpus";
  const fs::path out = work_dir() / "run1";
  REQUIRE(run("gen-synthetic --config " + config_path() + " --seed 5 --out-dir " +
              corpus.string() + " --holdout 6") == 0);
  CHECK(fs::exists(corpus / "manifest.tsv"));
  CHECK(fs::exists(corpus / "manifest_train.tsv"));
  CHECK(fs::exists(corpus / "manifest_heldout.tsv"));
  CHECK(fs::exists(corpus / "labels.tsv"));
  CHECK(fs::exists(corpus / "phones.txt"));
  CHECK(fs::exists(corpus / "triples.tsv"));
  CHECK(count_lines(slurp(corpus / "manifest.tsv")) == 30);
  CHECK(count_lines(slurp(corpus / "manifest_train.tsv")) == 24);
  CHECK(count_lines(slurp(corpus / "manifest_heldout.tsv")) == 6);

  REQUIRE(run("train --config " + config_path() + " --manifest " +
              (corpus / "manifest_train.tsv").string() + " --out-dir " +
              out.string()) == 0);
  const std::string epochs = slurp(out / "epochs.csv");
  CHECK(count_lines(epochs) == 3);  // header + 2 epochs
  CHECK(epochs.rfind("epoch,lr,mean_l_s,mean_l_h,mean_total\n", 0) == 0);
  REQUIRE(fs::exists(out / "checkpoint.cstn"));

  CHECK(run("eval-retrieval --config " + config_path() + " --checkpoint " +
            (out / "checkpoint.cstn").string() + " --manifest " +
            (corpus / "manifest_heldout.tsv").string() + " --out-dir " +
            out.string()) == 0);
  const std::string retrieval = slurp(out / "retrieval.csv");
  CHECK(retrieval.rfind("direction,R@10,R@5,R@1\n", 0) == 0);
  CHECK(count_lines(retrieval) == 3);

  CHECK(run("eval-abx --items " + (corpus / "triples.tsv").string() +
            " --out-dir " + out.string()) == 0);
  CHECK(slurp(out / "abx.csv").rfind("category,error_rate,n_triples\n", 0) ==
        0);

  CHECK(run("layer-sweep --config " + config_path() + " --checkpoint " +
            (out / "checkpoint.cstn").string() + " --items " +
            (corpus / "triples.tsv").string() + " --out-dir " + out.string()) ==
        0);
  const std::string sweep = slurp(out / "layer_sweep.csv");
  CHECK(sweep.rfind("layer,abx_error\n", 0) == 0);
  CHECK(count_lines(sweep) == 14);  // header + 13 layers

  CHECK(run("train-ctc-probe --config " + config_path() + " --checkpoint " +
            (out / "checkpoint.cstn").string() + " --labels " +
            (corpus / "labels.tsv").string() + " --phones " +
            (corpus / "phones.txt").string() +
            " --layer 8 --holdout 6 --out-dir " + out.string()) == 0);
  const std::string per = slurp(out / "per.csv");
  CHECK(per.rfind("layer,per,evaluated,skipped_unalignable\n", 0) == 0);
  CHECK(per.substr(per.find('\n') + 1, 2) == "8,");
}

TEST_CASE("training is reproducible across runs with the same seed") {
  const fs::path corpus = work_dir() / "corpus";  // built by the pipeline case
  REQUIRE(fs::exists(corpus / "manifest_train.tsv"));
  const fs::path a = work_dir() / "rep_a";
  const fs::path b = work_dir() / "rep_b";
  for (const auto& o : {a, b})
    REQUIRE(run("train --config " + config_path() + " --manifest " +
                (corpus / "manifest_train.tsv").string() + " --out-dir " +
                o.string()) == 0);
  CHECK(slurp(a / "epochs.csv") == slurp(b / "epochs.csv"));
  CHECK(slurp(a / "checkpoint.cstn") == slurp(b / "checkpoint.cstn"));
  CHECK(!slurp(a / "epochs.csv").empty());
}

TEST_CASE("extract-fbank and dump-features round the wav path") {
  const fs::path corpus = work_dir() / "wav_corpus";
  const fs::path cfgp = work_dir() / "wav_config.json";
  write_file(cfgp, R"({
    "synth": {"n_pairs": 3, "n_phones": 4, "n_words": 6, "with_wav": true,
              "min_frames_per_phone": 5, "max_frames_per_phone": 7}
  })");
  REQUIRE(run("gen-synthetic --config " + cfgp.string() + " --seed 2 --out-dir " +
              corpus.string()) == 0);
  // find one generated wav via the manifest
  const std::string manifest = slurp(corpus / "manifest.tsv");
  const std::size_t t1 = manifest.find('\t');
  const std::size_t t2 = manifest.find('\t', t1 + 1);
  const std::string wav_rel = manifest.substr(t1 + 1, t2 - t1 - 1);
  REQUIRE(fs::exists(corpus / wav_rel));

  const fs::path feat = work_dir() / "one.feat";
  CHECK(run("extract-fbank --wav " + (corpus / wav_rel).string() + " --out " +
            feat.string()) == 0);
  CHECK(fs::exists(feat));

  const fs::path dumped = work_dir() / "dumped";
  CHECK(run("dump-features --manifest " + (corpus / "manifest.tsv").string() +
            " --out-dir " + dumped.string()) == 0);
  CHECK(fs::exists(dumped / "utt_00000.feat"));
}

TEST_CASE("eval-per on hand-written files") {
  const fs::path ref = work_dir() / "ref.tsv";
  const fs::path hyp = work_dir() / "hyp.tsv";
  write_file(ref, "u1\tp1 p2 p3\nu2\tp1\n");
  write_file(hyp, "u1\tp1 p3\nu2\tp1\n");
  CHECK(run("eval-per --ref " + ref.string() + " --hyp " + hyp.string()) == 0);
  CHECK(run("eval-per --ref " + ref.string() + " --hyp /nonexistent.tsv") == 1);
}
