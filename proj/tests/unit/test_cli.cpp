#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::absolute("cli_work");

int run(const std::string& args) {
  const std::string cmd = "cd '" + kWork.string() + "' && '" HRCHUNK_BIN "' " + args + " >stdout.txt 2>stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& name) {
  std::ifstream in(kWork / name, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& name, const std::string& text) {
  std::ofstream out(kWork / name, std::ios::binary);
  out << text;
}

std::string value_of(const std::string& kv, const std::string& key) {
  std::istringstream in(kv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string k, v;
    if (fields >> k >> v && k == key) return v;
  }
  return "";
}

std::string last_line(const std::string& text) {
  auto end = text.find_last_not_of('\n');
  auto start = text.rfind('\n', end);
  return text.substr(start + 1, end - start);
}

std::string without_header(const std::string& text) { return text.substr(text.find('\n') + 1); }

// Shared corpora, made once.
struct Fixture {
  Fixture() {
    fs::create_directories(kWork);
    REQUIRE(run("synth --seed 1 --count 150 --out train.conll --trees-out train.trees --grammar-out g.gr") == 0);
    REQUIRE(run("synth --seed 2 --count 50 --out valid.conll") == 0);
  }
};

void setup() { static Fixture f; }

}  // namespace

TEST_CASE("cli: exit codes") {
  setup();
  CHECK(run("pretrain --train train.conll --out m.ckpt") == 2);
  CHECK(slurp("stderr.txt").find("--seed") != std::string::npos);
  CHECK(run("pretrain --seed 1 --train train.conll --out m.ckpt --precision 32") == 2);
  CHECK(run("pretrain --seed 1 --train train.conll --out m.ckpt --bogus 3") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("eval --gold valid.conll") == 2);
  CHECK(run("eval --gold missing.conll --pred valid.conll") == 1);
  CHECK(run("baseline hmm --train train.conll --out h.model") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("cli: chunk and eval reproduce the F1 logged during training") {
  setup();
  REQUIRE(run("pretrain --seed 3 --train train.conll --valid valid.conll --epochs 3 --hidden 16 "
              "--emb kind=lookup,d=16,seed=1 --out m.ckpt --log log.csv") == 0);
  const std::string log = slurp("log.csv");
  CHECK(log.rfind("## hrchunk ", 0) == 0);
  CHECK(log.find("epoch,train_loss,valid_f1,valid_tag_acc") != std::string::npos);
  std::string last = last_line(log);
  std::istringstream fields(last);
  std::string epoch, loss, f1;
  std::getline(fields, epoch, ',');
  std::getline(fields, loss, ',');
  std::getline(fields, f1, ',');
  CHECK(epoch == "3");

  REQUIRE(run("chunk --model m.ckpt --in valid.conll --out pred.conll") == 0);
  REQUIRE(run("eval --gold valid.conll --pred pred.conll --out report.txt") == 0);
  char expected[32];
  std::snprintf(expected, sizeof expected, "%.2f", std::stod(f1));
  CHECK(value_of(slurp("report.txt"), "f1") == expected);
  CHECK(slurp("stdout.txt").find(expected) != std::string::npos);
  CHECK(slurp("pred.conll").rfind("## hrchunk ", 0) == 0);
}

TEST_CASE("cli: thread count does not change results") {
  setup();
  REQUIRE(run("pretrain --seed 4 --train train.conll --epochs 2 --hidden 8 --emb kind=lookup,d=8,seed=1 "
              "--out t1.ckpt") == 0);
  REQUIRE(run("pretrain --seed 4 --train train.conll --epochs 2 --hidden 8 --emb kind=lookup,d=8,seed=1 "
              "--out t3.ckpt --threads 3") == 0);
  CHECK(without_header(slurp("t1.ckpt")) == without_header(slurp("t3.ckpt")));
  REQUIRE(run("pretrain --seed 5 --train train.conll --epochs 2 --hidden 8 --emb kind=lookup,d=8,seed=1 "
              "--out t5.ckpt") == 0);
  CHECK(without_header(slurp("t1.ckpt")) != without_header(slurp("t5.ckpt")));
}

TEST_CASE("cli: config file values yield to flags") {
  setup();
  spit("run.cfg", "# pretraining settings\nseed = 4\nepochs = 1\nhidden = 8\nemb = kind=lookup,d=8,seed=1\n"
                  "train = train.conll\n");
  REQUIRE(run("pretrain --config run.cfg --out c1.ckpt") == 0);
  const std::string c1 = slurp("c1.ckpt");
  CHECK(c1.find("--epochs=1") != std::string::npos);
  CHECK(c1.find("--seed=4") != std::string::npos);
  REQUIRE(run("pretrain --config run.cfg --epochs 2 --out c2.ckpt") == 0);
  CHECK(slurp("c2.ckpt").find("--epochs=2") != std::string::npos);
  REQUIRE(run("pretrain --seed 4 --epochs 2 --hidden 8 --emb kind=lookup,d=8,seed=1 --train train.conll "
              "--out c3.ckpt") == 0);
  CHECK(without_header(slurp("c2.ckpt")) == without_header(slurp("c3.ckpt")));
  spit("bad.cfg", "tau = 3\n");
  CHECK(run("pretrain --config bad.cfg --seed 1 --train train.conll --out x.ckpt") == 2);
}

TEST_CASE("cli: pmi baseline grid search") {
  setup();
  REQUIRE(run("baseline pmi --train train.conll --valid valid.conll --tau-grid -5:5:0.5 --out pmi.model") == 0);
  const std::string out = slurp("stdout.txt");
  CHECK(out.find("selected tau") != std::string::npos);
  const std::string model = slurp("pmi.model");
  CHECK(model.rfind("## hrchunk ", 0) == 0);
  CHECK(model.find("kind pmi") != std::string::npos);
  REQUIRE(run("chunk --model pmi.model --in valid.conll --out pmi.conll") == 0);
  REQUIRE(run("eval --gold valid.conll --pred pmi.conll --out pmi.txt") == 0);
  // The reported validation F1 is the one the selected threshold achieves.
  std::istringstream words(out);
  std::string w, f1;
  while (words >> w)
    if (w == "F1") words >> f1;
  CHECK(value_of(slurp("pmi.txt"), "f1") == f1);
}

TEST_CASE("cli: grammar tools") {
  setup();
  REQUIRE(run("parse --grammar g.gr --in valid.conll --out v1.trees") == 0);
  REQUIRE(run("parse --grammar g.gr --in valid.conll --out v2.trees") == 0);
  CHECK(without_header(slurp("v1.trees")) == without_header(slurp("v2.trees")));

  const std::string valid = without_header(slurp("valid.conll"));
  spit("odd.conll", valid.substr(0, valid.find("\n\n") + 2) + "zzz NN B\n\n");
  CHECK(run("parse --grammar g.gr --in odd.conll --out odd.trees") == 1);
  REQUIRE(run("parse --grammar g.gr --in odd.conll --out odd.trees --skip-unparseable") == 0);
  CHECK(slurp("stderr.txt").find("1 parsed, 1 skipped") != std::string::npos);

  REQUIRE(run("pcfg-em --seed 3 --init g.gr --randomize --corpus valid.conll --iters 5 --out em.gr --log em.csv") ==
          0);
  std::istringstream log(without_header(slurp("em.csv")));
  std::string line;
  std::getline(log, line);
  CHECK(line == "iter,loglik,parsed,skipped");
  double prev = -1e300;
  int rows = 0;
  while (std::getline(log, line)) {
    const double ll = std::stod(line.substr(line.find(',') + 1));
    CHECK(ll >= prev - 1e-8);
    prev = ll;
    ++rows;
  }
  CHECK(rows == 6);

  REQUIRE(run("induce --trees train.trees --heuristic left --out left.conll") == 0);
  CHECK(slurp("left.conll").find(" B\n") != std::string::npos);
}
