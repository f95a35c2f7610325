#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "idmask/embedding.hpp"
#include "idmask/io.hpp"
#include "idmask/rng.hpp"
#include "temp_dir.hpp"

using namespace idmask;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string err;
};

Run cli(const std::string& args, const fs::path& scratch) {
  const auto err_path = scratch / "stderr.txt";
  const std::string cmd = std::string("\"") + IDMASK_CLI_PATH + "\" " + args + " >/dev/null 2>\"" +
                          err_path.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err_path);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Small, fast settings shared by the commands below.
const std::string kSmall =
    " --set benchmark.height=16 --set benchmark.width=16 --set train.identities=12"
    " --set train.images_per_identity=4 --set train.epochs=60 --set train.hidden_width=24"
    " --set benchmark.protected_identities=6 --set benchmark.distractor_identities=6"
    " --set benchmark.target_identities=3 --set attack.iterations=8 --set attack.mmd_batch=6";

}  // namespace

TEST_CASE("train-model is reproducible and writes its summary") {
  testing::TempDir tmp("cli-train");
  REQUIRE(cli("train-model -o " + q(tmp / "a") + kSmall, tmp.path()).code == 0);
  REQUIRE(cli("train-model -o " + q(tmp / "b") + kSmall, tmp.path()).code == 0);
  CHECK(slurp(tmp / "a" / "model.embm") == slurp(tmp / "b" / "model.embm"));
  CHECK(fs::exists(tmp / "a" / "config.resolved"));
  CHECK(slurp(tmp / "a" / "train_summary.txt").find("train_accuracy = ") != std::string::npos);
  CHECK(load_model(tmp / "a" / "model.embm").input_shape() == Shape{16, 16, 1});
  REQUIRE(cli("train-model --seed 99 -o " + q(tmp / "c") + kSmall, tmp.path()).code == 0);
  CHECK(slurp(tmp / "a" / "model.embm") != slurp(tmp / "c" / "model.embm"));
}

TEST_CASE("default train-model reaches 95% training accuracy") {
  testing::TempDir tmp("cli-default");
  REQUIRE(cli("train-model -o " + q(tmp.path()), tmp.path()).code == 0);
  std::ifstream in(tmp / "train_summary.txt");
  std::string line;
  double acc = -1;
  while (std::getline(in, line)) {
    if (line.rfind("train_accuracy = ", 0) == 0) acc = std::stod(line.substr(17));
  }
  CHECK(acc >= 0.95);
}

TEST_CASE("config errors exit 2 and name the key") {
  testing::TempDir tmp("cli-cfg");
  const auto r = cli("train-model -o " + q(tmp.path()) + " --set attack.epsilno=3", tmp.path());
  CHECK(r.code == 2);
  CHECK(r.err.find("attack.epsilno") != std::string::npos);
  std::ofstream(tmp / "bad.cfg") << "attack.iterations = 5\nnot_a_key = 1\n";
  const auto f = cli("train-model -o " + q(tmp.path()) + " -c " + q(tmp / "bad.cfg"), tmp.path());
  CHECK(f.code == 2);
  CHECK(f.err.find("not_a_key") != std::string::npos);
  CHECK(cli("frobnicate", tmp.path()).code == 2);
  CHECK(cli("protect -o " + q(tmp.path()), tmp.path()).code == 2);
}

TEST_CASE("protect, audit and evaluate") {
  testing::TempDir tmp("cli-protect");
  const auto model = tmp / "m" / "model.embm";
  REQUIRE(cli("train-model -o " + q(tmp / "m") + kSmall, tmp.path()).code == 0);
  const std::string base = kSmall + " --set model.surrogate=" + model.string();

  SUBCASE("benchmark probes") {
    REQUIRE(cli("protect --benchmark -o " + q(tmp / "p1") + base, tmp.path()).code == 0);
    REQUIRE(cli("protect --benchmark -o " + q(tmp / "p2") + base, tmp.path()).code == 0);
    CHECK(read_tensor_file(tmp / "p1" / "masks.imsk").size() == 6);
    for (int i = 0; i < 6; ++i) {
      const auto name = "probe_" + std::to_string(i) + ".png";
      CHECK(slurp(tmp / "p1" / "protected" / name) == slurp(tmp / "p2" / "protected" / name));
    }
    CHECK(slurp(tmp / "p1" / "masks.imsk") == slurp(tmp / "p2" / "masks.imsk"));
    CHECK(slurp(tmp / "p1" / "quality.csv").rfind("image,psnr,ssim\n", 0) == 0);
  }

  SUBCASE("single image and zero budget") {
    Rng rng(1);
    std::vector<double> px(256);
    for (auto& v : px) v = rng.uniform();
    const auto input = tmp / "face.png";
    write_image_file(Image(Shape{16, 16, 1}, px), input);
    REQUIRE(cli("protect -o " + q(tmp / "s") + base + " " + q(input), tmp.path()).code == 0);
    CHECK(fs::exists(tmp / "s" / "protected" / "face.png"));
    CHECK(read_tensor_file(tmp / "s" / "masks.imsk").size() == 1);

    REQUIRE(cli("protect --epsilon 0 -o " + q(tmp / "z") + base + " " + q(input), tmp.path()).code == 0);
    CHECK(read_image_file(tmp / "z" / "protected" / "face.png") == read_image_file(input));
  }

  SUBCASE("distinct failure codes") {
    CHECK(cli("protect --benchmark -o " + q(tmp / "x") + kSmall + " --set model.surrogate=" +
                  (tmp / "missing.embm").string(),
              tmp.path())
              .code == 3);
    const auto big = tmp / "big.png";
    write_image_file(Image(Shape{20, 20, 1}, 0.5), big);
    CHECK(cli("protect -o " + q(tmp / "y") + base + " " + q(big), tmp.path()).code == 5);
    CHECK(cli("protect -o " + q(tmp / "y") + base + " " + q(tmp / "nope.png"), tmp.path()).code == 3);
  }

  SUBCASE("evaluate reports") {
    const std::string eval = base + " --set model.eval=" + model.string() + " --set evaluate.methods=tip-im,mim";
    REQUIRE(cli("evaluate -o " + q(tmp / "e") + eval, tmp.path()).code == 0);
    const auto summary = slurp(tmp / "e" / "summary.csv");
    CHECK(summary.find("run,method,eval_model,white_box,probes,rank1_t,rank5_t,rank1_ut,rank5_ut") == 0);
    CHECK(summary.find("\nclean,clean,") != std::string::npos);
    CHECK(summary.find("\ntip-im,tip-im,") != std::string::npos);
    CHECK(summary.find("\nmim,mim,") != std::string::npos);

    REQUIRE(cli("evaluate --gamma-sweep -o " + q(tmp / "g") + eval + " --set evaluate.gammas=0,1,2", tmp.path())
                .code == 0);
    std::size_t reports = 0;
    for (const auto& entry : fs::directory_iterator(tmp / "g")) {
      const auto name = entry.path().filename().string();
      reports += name.rfind("report_", 0) == 0 && name.find("gamma") != std::string::npos &&
                 entry.path().extension() == ".txt";
    }
    CHECK(reports == 3);
  }
}
